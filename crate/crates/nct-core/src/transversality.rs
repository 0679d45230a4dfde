//! Derivatives with respect to the vertical translation parameters and
//! numeric verification of the transversality machinery.
//!
//! All operations here assume additive translation structure: `g` must
//! reference `t2` so that `∂g/∂t_{i,2}` is identically 1 (checked on load of
//! the report; the parameter series below are built from that Kronecker
//! structure).

use crate::foliation::{bundle_u_y, leaf_solve_clipped, LeafSolution};
use crate::ifs::{Family, SystemSpec};
use crate::rng::stream_rng;
use crate::symbolic::{TailedWord, Word};
use crate::{Error, Result};
use rand::Rng;

/// Projection accuracy used for anchors and orbit points of the series.
const PROJ_TOL: f64 = 1e-12;

/// `∂ π²(j) / ∂ t_{k,2}`: the series of Kronecker hits weighted by
/// `(g_{j|_{m-1}})'_y` along the shifted projections, truncated at `depth`
/// (`rho^depth` tail). The value lies in `[0, 1/(1-rho)]`.
pub fn dpi2_dt(spec: &SystemSpec, j: &TailedWord, k_index: u8, depth: usize) -> Result<f64> {
    if k_index == 0 || k_index as usize > spec.n_maps() {
        return Err(Error::InvalidArg(format!(
            "parameter index {k_index} out of range"
        )));
    }
    if depth == 0 {
        return Err(Error::InvalidArg("depth must be >= 1".into()));
    }
    // Backward fold: p_a = pi(sigma^a j) from the deepest shift.
    let mut points = vec![(0.0, 0.0); depth + 1];
    points[depth] = spec.canonical_projection(&j.shift_n(depth), PROJ_TOL)?;
    for a in (1..depth).rev() {
        let m = spec.map(j.symbol(a));
        let p = points[a + 1];
        points[a] = m.apply(p.0, p.1);
    }
    let mut weight = 1.0f64;
    let mut total = if j.symbol(0) == k_index { 1.0 } else { 0.0 };
    for m in 2..=depth {
        let a = m - 1;
        let p = points[a];
        weight *= spec.map(j.symbol(a - 1)).gy_at(p.0, p.1);
        if j.symbol(a) == k_index {
            total += weight;
        }
    }
    Ok(total)
}

/// Default truncation depth for the parameter series (`rho^depth <= 1e-10`).
pub fn dpi2_depth(spec: &SystemSpec) -> usize {
    spec.projection_depth(1e-10)
}

/// `∂/∂t_{j_1,2} (π²(j) - π²(h))` for words with different first symbols;
/// bounded below by `1 - rho/(1-rho)`.
pub fn separation_derivative(
    spec: &SystemSpec,
    j: &TailedWord,
    h: &TailedWord,
    depth: usize,
) -> Result<f64> {
    if j.symbol(0) == h.symbol(0) {
        return Err(Error::InvalidArg(
            "separation derivative needs words with distinct first symbols".into(),
        ));
    }
    Ok(dpi2_dt(spec, j, j.symbol(0), depth)? - dpi2_dt(spec, h, j.symbol(0), depth)?)
}

/// `∂ u(i,x,y) / ∂ t_{k,2}` for every parameter index at once, truncated
/// with certified tail `<= tol` per entry.
pub fn du_dt_all(
    spec: &SystemSpec,
    i: &TailedWord,
    x: f64,
    y: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    if tol <= 0.0 {
        return Err(Error::InvalidArg("tol must be positive".into()));
    }
    let n = spec.n_maps();
    let b = spec.bounds();
    let gamma = b.gamma;
    // |term_m| <= ratio_{m-1} * (alpha + beta * m); see the tail notes on
    // the bundle series.
    let alpha = b.max_gxy / (b.tau * (1.0 - b.rho));
    let beta = b.max_gx * b.max_gyy / (b.tau * b.tau * (1.0 - b.rho));
    let tail = |ratio: f64, k: usize| {
        ratio * (alpha / (1.0 - gamma)
            + beta * ((k + 1) as f64 / (1.0 - gamma) + gamma / ((1.0 - gamma) * (1.0 - gamma))))
    };
    let mut apriori = 1usize;
    while tail(gamma.powi(apriori as i32), apriori) > tol {
        apriori += 1;
        if apriori > 4_000_000 {
            return Err(Error::SeriesNotCertified { x, y });
        }
    }
    let cap = apriori * 10 + 64;

    let in_square =
        |z: (f64, f64)| (-1e-9..=1.0 + 1e-9).contains(&z.0) && (-1e-9..=1.0 + 1e-9).contains(&z.1);

    let mut z = (x, y);
    let mut ratio = 1.0f64;
    let mut d = vec![0.0f64; n]; // ∂ g_{reversed prefix} / ∂ t_{k,2}
    let mut t = vec![0.0f64; n]; // running sum of (g''_yy/g'_y) * D
    let mut sum = vec![0.0f64; n];
    let mut k = 0usize;
    loop {
        if in_square(z) {
            if tail(ratio.abs(), k) <= tol || k >= apriori {
                return Ok(sum);
            }
        } else if k >= cap {
            return Err(Error::SeriesNotCertified { x, y });
        }
        let m = spec.map(i.symbol(k));
        let gy = m.gy_at(z.0, z.1);
        if gy == 0.0 || !gy.is_finite() {
            return Err(Error::SeriesNotCertified { x, y });
        }
        let gx = m.gx_at(z.0, z.1);
        let gxy = m.gxy_at(z.0, z.1);
        let gyy = m.gyy_at(z.0, z.1);
        let scale = ratio / gy;
        let gyy_over = gyy / gy;
        for idx in 0..n {
            t[idx] += gyy_over * d[idx];
            sum[idx] += scale * (-gxy * d[idx] + gx * t[idx]);
        }
        // Advance D with the current symbol, then the orbit.
        let sym = i.symbol(k) as usize - 1;
        for idx in 0..n {
            d[idx] *= gy;
        }
        d[sym] += 1.0;
        ratio *= m.fx_at(z.0) / gy;
        if !ratio.is_finite() {
            return Err(Error::SeriesNotCertified { x, y });
        }
        z = m.apply(z.0, z.1);
        k += 1;
        if k >= cap {
            return Err(Error::SeriesNotCertified { x, y });
        }
    }
}

/// Single-index variant of [`du_dt_all`].
pub fn du_dt(
    spec: &SystemSpec,
    i: &TailedWord,
    x: f64,
    y: f64,
    k_index: u8,
    tol: f64,
) -> Result<f64> {
    if k_index == 0 || k_index as usize > spec.n_maps() {
        return Err(Error::InvalidArg(format!(
            "parameter index {k_index} out of range"
        )));
    }
    Ok(du_dt_all(spec, i, x, y, tol)?[k_index as usize - 1])
}

/// `∂ y(i, π(j), x) / ∂ t_{k,2}` by variation of constants: the anchor
/// motion transported by `exp(∫ u'_y)` plus the accumulated field change.
/// The inner integral of `u'_y` uses trapezoid accumulation on a uniform
/// subdivision at the leaf's spacing; the outer integral is composite
/// Simpson on the same nodes.
pub fn dy_dt(
    spec: &SystemSpec,
    i: &TailedWord,
    j: &TailedWord,
    k_index: u8,
    x_eval: f64,
    step: f64,
    tol: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&x_eval) {
        return Err(Error::InvalidArg("x must lie in [0,1]".into()));
    }
    let anchor = spec.canonical_projection(j, tol.min(1e-10))?;
    let anchor = (anchor.0.clamp(0.0, 1.0), anchor.1.clamp(0.0, 1.0));
    let dpi = dpi2_dt(spec, j, k_index, dpi2_depth(spec))?;
    let x0 = anchor.0;
    if (x_eval - x0).abs() < 1e-15 {
        // Degenerate interval: both correction terms vanish.
        return Ok(dpi);
    }
    let lo = x_eval.min(x0);
    let hi = x_eval.max(x0);
    let leaf = leaf_solve_clipped(spec, i, anchor, lo, hi, step, tol)?;
    let (dlo, dhi) = leaf.domain();
    if dlo > lo + step || dhi < hi - step {
        return Err(Error::LeafBlowup {
            x: if dlo > lo + step { dlo } else { dhi },
            guard: crate::foliation::LEAF_GUARD,
        });
    }

    // Uniform nodes from x0 to x_eval (signed direction), even count for
    // Simpson.
    let span = x_eval - x0;
    let mut segments = (span.abs() / leaf.step()).ceil() as usize;
    segments = segments.max(2);
    if segments % 2 == 1 {
        segments += 1;
    }
    let hstep = span / segments as f64;
    let nodes = segments + 1;
    let mut uy = Vec::with_capacity(nodes);
    let mut du = Vec::with_capacity(nodes);
    for q in 0..nodes {
        let w = x0 + hstep * q as f64;
        let yw = if q == 0 { anchor.1 } else { leaf.value_at(w)? };
        uy.push(bundle_u_y(spec, i, w, yw, tol)?);
        du.push(du_dt(spec, i, w, yw, k_index, tol)?);
    }
    // I(q) = ∫_{x0}^{w_q} u'_y dz, accumulated cell by cell from the stored
    // samples. Cells integrate the local cubic through four neighbours
    // (trapezoid accumulation loses two orders on steep systems and falls
    // short of the finite-difference agreement contract near cancellation
    // points).
    let big_i = cumulative_integral(&uy, hstep);
    let i_end = big_i[nodes - 1];
    // Outer integrand: exp(I(x) - I(w)) * du(w); composite Simpson.
    let f = |q: usize| (i_end - big_i[q]).exp() * du[q];
    let mut simpson = f(0) + f(nodes - 1);
    for q in 1..nodes - 1 {
        simpson += if q % 2 == 1 { 4.0 * f(q) } else { 2.0 * f(q) };
    }
    let integral = simpson * hstep / 3.0;
    Ok(dpi * i_end.exp() + integral)
}

/// Cumulative integral of uniformly spaced samples (signed spacing `h`):
/// each cell integrates the cubic through its four nearest samples, one-sided
/// at the ends. Falls back to trapezoid when there are under four samples.
fn cumulative_integral(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    if n < 4 {
        let mut acc = 0.0;
        for q in 1..n {
            acc += 0.5 * (f[q - 1] + f[q]) * h;
            out.push(acc);
        }
        return out;
    }
    let mut acc = 0.0;
    for q in 0..n - 1 {
        let cell = if q == 0 {
            (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) / 24.0
        } else if q == n - 2 {
            (9.0 * f[n - 1] + 19.0 * f[n - 2] - 5.0 * f[n - 3] + f[n - 4]) / 24.0
        } else {
            (-f[q - 1] + 13.0 * f[q] + 13.0 * f[q + 1] - f[q + 2]) / 24.0
        };
        acc += cell * h;
        out.push(acc);
    }
    out
}

// ---------------------------------------------------------------------------
// Verification report
// ---------------------------------------------------------------------------

/// One verified inequality: the observed extremal value against its bound.
#[derive(Debug, Clone)]
pub struct TransversalityRow {
    pub name: String,
    /// The bound the quantity is checked against.
    pub bound: f64,
    /// Worst sampled value (the side that matters for the inequality).
    pub worst: f64,
    /// Margin between the worst value and the bound (nonnegative = pass).
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct TransversalityReport {
    pub family: Family,
    pub pass: bool,
    pub rows: Vec<TransversalityRow>,
    /// Sampled sup of `|u'_y|`, the constant in the leaf-distance bound.
    pub sup_uy: f64,
    /// The family's transversality constant (positive = verdict).
    pub delta: f64,
}

fn row_lower(name: &str, bound: f64, worst: f64, slack: f64) -> TransversalityRow {
    TransversalityRow {
        name: name.into(),
        bound,
        worst,
        margin: worst - bound,
        pass: worst >= bound - slack,
    }
}

fn row_upper(name: &str, bound: f64, worst: f64, slack: f64) -> TransversalityRow {
    TransversalityRow {
        name: name.into(),
        bound,
        worst,
        margin: bound - worst,
        pass: worst <= bound + slack,
    }
}

fn random_word(rng: &mut impl Rng, n_maps: usize) -> TailedWord {
    let plen = rng.gen_range(0..6);
    let tlen = rng.gen_range(1..4usize);
    let prefix: Vec<u8> = (0..plen).map(|_| rng.gen_range(1..=n_maps as u8)).collect();
    let tail: Vec<u8> = (0..tlen).map(|_| rng.gen_range(1..=n_maps as u8)).collect();
    TailedWord::new(
        Word::new(&prefix, n_maps).unwrap(),
        Word::new(&tail, n_maps).unwrap(),
    )
    .unwrap()
}

/// Checks the family's transversality ingredients on `samples` seeded
/// queries: the sign/bound lemmas for `u'_y` and `∂u/∂t`, the separation
/// derivative of the vertical projections, the range of `∂π²/∂t`, and the
/// family's closed-form transversality constant.
pub fn verify_transversality(
    spec: &SystemSpec,
    family: Family,
    samples: usize,
    seed: u64,
) -> Result<TransversalityReport> {
    if !matches!(family, Family::A | Family::B) {
        return Err(Error::InvalidArg(
            "transversality verification applies to families A and B".into(),
        ));
    }
    let validation = spec.validate(family);
    if !validation.pass {
        let fail = validation.first_failure().unwrap();
        return Err(Error::ValidationFailed {
            family: family.to_string(),
            detail: format!("{} (worst value {})", fail.name, fail.witness.map(|w| w.value).unwrap_or(f64::NAN)),
        });
    }
    // The parameter series assume additive translations.
    for (idx, m) in spec.maps().iter().enumerate() {
        let dg = m
            .g_source()
            .derivative_var(crate::expr::Var::T2)
            .evaluate(0.5, 0.5, m.t1(), m.t2())?;
        if (dg - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "map {}: dg/dt2 = {dg}, transversality needs additive translations",
                idx + 1
            )));
        }
    }

    let n = spec.n_maps();
    let b = spec.bounds();
    let tol = 1e-9;
    let mut rng = stream_rng(seed, 0);

    // Pointwise series samples.
    let mut min_uy = f64::INFINITY;
    let mut max_abs_uy: f64 = 0.0;
    let mut min_du = f64::INFINITY;
    let mut max_du_spread: f64 = 0.0;
    for _ in 0..samples {
        let i = random_word(&mut rng, n);
        let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
        let uy = bundle_u_y(spec, &i, x, y, tol)?;
        min_uy = min_uy.min(uy);
        max_abs_uy = max_abs_uy.max(uy.abs());
        let du = du_dt_all(spec, &i, x, y, tol)?;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in du {
            lo = lo.min(v);
            hi = hi.max(v);
            min_du = min_du.min(v);
        }
        max_du_spread = max_du_spread.max(hi - lo);
    }

    // Separation derivative over word pairs with distinct first symbols.
    let depth = dpi2_depth(spec);
    let pair_count = samples.max(1000).min(5000);
    let mut min_sep = f64::INFINITY;
    let mut min_dpi = f64::INFINITY;
    let mut max_dpi = f64::NEG_INFINITY;
    for _ in 0..pair_count {
        let j = random_word(&mut rng, n);
        let mut h = random_word(&mut rng, n);
        while h.symbol(0) == j.symbol(0) {
            h = random_word(&mut rng, n);
        }
        let sep = separation_derivative(spec, &j, &h, depth)?;
        min_sep = min_sep.min(sep);
        for w in [&j, &h] {
            let v = dpi2_dt(spec, w, w.symbol(0), depth)?;
            min_dpi = min_dpi.min(v);
            max_dpi = max_dpi.max(v);
        }
    }

    let sep_bound = 1.0 - b.rho / (1.0 - b.rho);
    let mut rows = vec![
        row_lower("dpi2/dt2 >= 0", 0.0, min_dpi, 1e-12),
        row_upper("dpi2/dt2 <= 1/(1-rho)", 1.0 / (1.0 - b.rho), max_dpi, 1e-12),
        row_lower(
            "separation derivative >= 1 - rho/(1-rho)",
            sep_bound,
            min_sep,
            1e-6,
        ),
    ];

    let delta;
    match family {
        Family::A => {
            rows.push(row_lower("u'_y >= 0", 0.0, min_uy, 1e-9));
            rows.push(row_lower("du/dt_{k,2} >= 0 (all k)", 0.0, min_du, 1e-9));
            // The leaf-distance constant exp(-sup u'_y) applied to the
            // separation bound.
            delta = sep_bound * (-max_abs_uy).exp();
            rows.push(row_lower(
                "(1 - rho/(1-rho)) exp(-sup u'_y) > 0",
                0.0,
                delta,
                0.0,
            ));
        }
        Family::B => {
            let uy_bound = 112.0 / 135.0;
            let du_bound = 28.0 / 81.0;
            rows.push(row_upper("|u'_y| <= 112/135", uy_bound, max_abs_uy, 1e-9));
            rows.push(row_upper(
                "|du/dt_j - du/dt_h| <= 28/81",
                du_bound,
                max_du_spread,
                1e-9,
            ));
            // delta = (2/3 - (5/12) e^{224/135} + (5/6) e^{112/135}) e^{-112/135}
            let e1 = (224.0f64 / 135.0).exp();
            let e2 = (112.0f64 / 135.0).exp();
            delta = (2.0 / 3.0 - 5.0 / 12.0 * e1 + 5.0 / 6.0 * e2) * (-112.0f64 / 135.0).exp();
            rows.push(row_lower("delta_B > 0", 0.0, delta, 0.0));
            rows.push(row_lower("delta_B > 0.16", 0.16, delta, 0.0));
            rows.push(row_upper("delta_B < 0.18", 0.18, delta, 0.0));
        }
        _ => unreachable!(),
    }

    Ok(TransversalityReport {
        family,
        pass: rows.iter().all(|r| r.pass),
        rows,
        sup_uy: max_abs_uy,
        delta,
    })
}

/// Finite-difference oracle hook: `y(i, π(j), x)` for the system as given
/// (used by tests and diagnostics to differentiate through a translated
/// system).
pub fn leaf_value_through_projection(
    spec: &SystemSpec,
    i: &TailedWord,
    j: &TailedWord,
    x_eval: f64,
    step: f64,
    tol: f64,
) -> Result<f64> {
    let anchor = spec.canonical_projection(j, tol.min(1e-10))?;
    let anchor = (anchor.0.clamp(0.0, 1.0), anchor.1.clamp(0.0, 1.0));
    if (x_eval - anchor.0).abs() < 1e-15 {
        return Ok(anchor.1);
    }
    let lo = x_eval.min(anchor.0);
    let hi = x_eval.max(anchor.0);
    let leaf: LeafSolution = leaf_solve_clipped(spec, i, anchor, lo, hi, step, tol)?;
    leaf.value_at(x_eval)
}
