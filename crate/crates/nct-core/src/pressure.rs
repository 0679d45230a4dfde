//! The singular value function, finite-level pressure approximants, and the
//! root of the pressure.
//!
//! `P_n(s) = (1/n) log Σ_{|w|=n} φ^s(w, base)` is evaluated by walking the
//! full word tree. Words are visited through their reversed representatives
//! (summing over all words is invariant under reversal), which turns the
//! evaluation points of the derivative products into a forward orbit of the
//! base point and lets the tree walk share prefixes. Sums are compensated
//! and accumulated per chunk (a fixed-length leading block of symbols) in
//! lexicographic chunk order, so results are bit-stable regardless of the
//! worker count.

use crate::ifs::SystemSpec;
use crate::sum::Kahan;
use crate::symbolic::{check_cap, Word, DEFAULT_ENUMERATION_CAP};
use crate::{map_ordered, Error, Result};

/// Options for pressure evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PressureOpts {
    /// Word-count cap; `N^n` beyond this errors.
    pub cap: u64,
    /// Base point of the derivative products (the limit is base-independent;
    /// the finite-level value is reported at this point).
    pub base: (f64, f64),
}

impl Default for PressureOpts {
    fn default() -> Self {
        PressureOpts {
            cap: DEFAULT_ENUMERATION_CAP,
            base: (0.5, 0.5),
        }
    }
}

/// Finite-level pressure value.
#[derive(Debug, Clone, Copy)]
pub struct PressureEstimate {
    pub s: f64,
    pub depth: usize,
    pub value: f64,
    pub base_point: (f64, f64),
}

/// Root of the depth-`n` pressure approximant. By subadditivity the
/// approximant root sits above the true root, with bias controlled by the
/// distortion constant: `|P_n - P| <= log(C)/n`.
#[derive(Debug, Clone, Copy)]
pub struct RootEstimate {
    pub s0: f64,
    pub depth: usize,
    /// Final bracket around the approximant's root.
    pub bracket: (f64, f64),
}

/// Singular value function `φ^s(w, point)`: `|(g_w)'_y|^s` for `s` in
/// `[0,1]`, `|(g_w)'_y| |f_w'|^(s-1)` for `s` in `(1,2]`, and
/// `|(g_w)'_y f_w'|^(s/2)` beyond 2. Continuous in `s` at both breakpoints.
pub fn phi_s(spec: &SystemSpec, w: &Word, point: (f64, f64), s: f64) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::InvalidArg("s must be nonnegative".into()));
    }
    let (fp, gy, _) = spec.derivative_along(w, point)?;
    Ok(phi_from_products(fp.abs(), gy.abs(), s))
}

#[inline]
fn phi_from_products(fp_abs: f64, gy_abs: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s <= 1.0 {
        gy_abs.powf(s)
    } else if s <= 2.0 {
        gy_abs * fp_abs.powf(s - 1.0)
    } else {
        (gy_abs * fp_abs).powf(0.5 * s)
    }
}

/// Chunk prefix length: enough leading symbols that chunks number at least
/// 64, independent of worker count.
fn chunk_len(n_maps: usize, depth: usize) -> usize {
    let mut len = 0usize;
    let mut count = 1usize;
    while count < 64 && len < depth {
        count *= n_maps;
        len += 1;
    }
    len
}

/// Walks all depth-`n` words of the chunk with leading symbols `prefix`
/// (reversed representatives: the orbit advances from `base` through the
/// chosen symbols) and calls `visit(fp, gp)` per word, in lexicographic
/// order of the remaining symbols.
fn walk_chunk<F: FnMut(f64, f64)>(
    spec: &SystemSpec,
    n: usize,
    base: (f64, f64),
    prefix: &[u8],
    visit: &mut F,
) {
    let mut z = base;
    let mut fp = 1.0f64;
    let mut gp = 1.0f64;
    for &s in prefix {
        let m = spec.map(s);
        fp *= m.fx_at(z.0);
        gp *= m.gy_at(z.0, z.1);
        z = m.apply(z.0, z.1);
    }
    walk_rec(spec, n - prefix.len(), z, fp, gp, visit);
}

fn walk_rec<F: FnMut(f64, f64)>(
    spec: &SystemSpec,
    levels: usize,
    z: (f64, f64),
    fp: f64,
    gp: f64,
    visit: &mut F,
) {
    if levels == 0 {
        visit(fp, gp);
        return;
    }
    if levels == 1 {
        // Leaf level: children need products only, not the advanced point.
        for m in spec.maps() {
            visit(fp * m.fx_at(z.0), gp * m.gy_at(z.0, z.1));
        }
        return;
    }
    for m in spec.maps() {
        let nfp = fp * m.fx_at(z.0);
        let ngp = gp * m.gy_at(z.0, z.1);
        walk_rec(spec, levels - 1, m.apply(z.0, z.1), nfp, ngp, visit);
    }
}

/// All chunk prefixes in lexicographic order.
fn chunk_prefixes(n_maps: usize, len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * n_maps);
        for p in &out {
            for s in 1..=n_maps as u8 {
                let mut q = p.clone();
                q.push(s);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// `P_n(s)` at the options' base point, compensated and chunk-deterministic.
pub fn pressure_approx(
    spec: &SystemSpec,
    s: f64,
    n: usize,
    opts: &PressureOpts,
) -> Result<PressureEstimate> {
    if n == 0 {
        return Err(Error::InvalidArg("depth must be >= 1".into()));
    }
    if s < 0.0 {
        return Err(Error::InvalidArg("s must be nonnegative".into()));
    }
    check_cap(spec.n_maps(), n, opts.cap)?;
    let prefixes = chunk_prefixes(spec.n_maps(), chunk_len(spec.n_maps(), n));
    let partials = map_ordered(prefixes, |prefix| {
        let mut acc = Kahan::new();
        walk_chunk(spec, n, opts.base, &prefix, &mut |fp, gp| {
            acc.add(phi_from_products(fp.abs(), gp.abs(), s));
        });
        acc
    });
    let mut total = Kahan::new();
    for part in partials {
        total.merge(part);
    }
    let sum = total.value();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::InvalidArg(format!(
            "word sum degenerate at s = {s}, depth {n}: {sum}"
        )));
    }
    Ok(PressureEstimate {
        s,
        depth: n,
        value: sum.ln() / n as f64,
        base_point: opts.base,
    })
}

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

/// When every map shares one constant `f'`, the word sum at any `s` reduces
/// to moments of the distribution of `log |(g_w)'_y|`: one walk builds a
/// fine histogram of that distribution and the whole bisection reads it.
struct GyLogHistogram {
    lo: f64,
    width: f64,
    counts: Vec<f64>,
    /// `log |f'|` per symbol (shared by all maps).
    log_fp: f64,
    depth: usize,
}

/// Bin width for the histogram path; contributes at most `s * width / 2`
/// exponent error per word, far below the bisection tolerances in use.
const HIST_BIN_WIDTH: f64 = 1e-5;
const HIST_MAX_BINS: usize = 40_000_000;

impl GyLogHistogram {
    fn build(spec: &SystemSpec, n: usize, opts: &PressureOpts) -> Option<Self> {
        let shared = spec.maps()[0].constant_fx()?;
        if shared == 0.0
            || !spec
                .maps()
                .iter()
                .all(|m| m.constant_fx() == Some(shared))
        {
            return None;
        }
        let log_fp = shared.abs().ln();
        let b = spec.bounds();
        let lo = n as f64 * b.tau.ln() - 1e-9;
        let hi = n as f64 * b.rho.ln() + 1e-9;
        let bins = (((hi - lo) / HIST_BIN_WIDTH).ceil() as usize).max(1) + 2;
        if bins > HIST_MAX_BINS {
            return None;
        }
        let width = (hi - lo).max(1e-12) / (bins - 1) as f64;
        let mut counts = vec![0.0f64; bins];
        // Counts are exact integers and bin increments commute; the chunk
        // loop stays sequential.
        for prefix in chunk_prefixes(spec.n_maps(), chunk_len(spec.n_maps(), n)) {
            walk_chunk(spec, n, opts.base, &prefix, &mut |_, gp| {
                let lg = gp.abs().ln();
                let idx = ((lg - lo) / width).round() as isize;
                let idx = idx.clamp(0, bins as isize - 1) as usize;
                counts[idx] += 1.0;
            });
        }
        Some(GyLogHistogram {
            lo,
            width,
            counts,
            log_fp,
            depth: n,
        })
    }

    /// `Σ_w |(g_w)'_y|^sigma` from the binned distribution.
    fn moment(&self, sigma: f64) -> f64 {
        // exp(sigma * (lo + k*width)) = exp(sigma*lo) * q^k with
        // q = exp(sigma*width): one exp, then multiplies.
        let q = (sigma * self.width).exp();
        let mut factor = (sigma * self.lo).exp();
        let mut sum = 0.0f64;
        for &c in &self.counts {
            if c != 0.0 {
                sum += c * factor;
            }
            factor *= q;
        }
        sum
    }

    fn pressure(&self, s: f64) -> f64 {
        let n = self.depth as f64;
        let lf = self.log_fp;
        let sum = if s == 0.0 {
            self.moment(0.0)
        } else if s <= 1.0 {
            self.moment(s)
        } else if s <= 2.0 {
            ((s - 1.0) * n * lf).exp() * self.moment(1.0)
        } else {
            (0.5 * s * n * lf).exp() * self.moment(0.5 * s)
        };
        sum.ln() / n
    }
}

/// Root of `s -> P_n(s)` by bisection. `P_n` is strictly decreasing with
/// `P_n(0) = log N > 0`; the upper end of the bracket is found by doubling
/// from 2. Returns the bracket midpoint once the bracket is narrower than
/// `tol`. Bisection rather than Newton: the approximant is piecewise-smooth
/// with kinks at `s = 1, 2`.
pub fn root_s0(spec: &SystemSpec, n: usize, tol: f64, opts: &PressureOpts) -> Result<RootEstimate> {
    if tol <= 0.0 {
        return Err(Error::InvalidArg("tol must be positive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArg("depth must be >= 1".into()));
    }
    check_cap(spec.n_maps(), n, opts.cap)?;

    // The histogram shortcut only stays well inside moderate tolerances.
    let hist = if tol >= 1e-6 {
        GyLogHistogram::build(spec, n, opts)
    } else {
        None
    };
    let eval: Box<dyn Fn(f64) -> Result<f64>> = match &hist {
        Some(h) => Box::new(move |s: f64| Ok(h.pressure(s))),
        None => Box::new(move |s: f64| Ok(pressure_approx(spec, s, n, opts)?.value)),
    };

    if eval(0.0)? <= 0.0 {
        return Err(Error::NotBracketed);
    }
    let mut lo = 0.0f64;
    let mut hi = 2.0f64;
    while eval(hi)? >= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::NotBracketed);
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RootEstimate {
        s0: 0.5 * (lo + hi),
        depth: n,
        bracket: (lo, hi),
    })
}

/// Bias bound for the depth-`n` root: `|P_n - P| <= log(C)/n` and
/// `|P_n'| >= -log(rho)` give `|s0_n - s0| <= log(C) / (n * -log(rho))`.
pub fn s0_bias_bound(spec: &SystemSpec, n: usize, distortion_c: f64) -> f64 {
    distortion_c.max(1.0).ln() / (n as f64 * -spec.bounds().rho.ln())
}
