//! The strong-stable tangent bundle, its y-derivative, leaf integration,
//! the non-linear projection, and the invariance/Grönwall diagnostics.
//!
//! The slope of the strong-stable bundle at `(x, y)` for an infinite word is
//! a series over the forward orbit of `(x, y)` through the reversed word
//! prefixes. Truncation is planned from the a priori geometric tail bound
//! (never by watching terms shrink), and the walker additionally tightens
//! the same bound with the actually accumulated contraction ratio, so every
//! returned value carries a certified truncation error below the requested
//! tolerance.
//!
//! Leaves solve `y' = u(i, x, y)` with classical fixed-step fourth-order
//! integration. A leaf of a well-behaved system covers all of `[0, 1]`; the
//! solver guards `|y| <= 10` and stops where the slope series can no longer
//! be certified (steep systems can push leaves out of the region where the
//! defining series converges). [`leaf_solve`] errors in that case;
//! [`leaf_solve_clipped`] returns the reachable part with its domain.

use crate::ifs::SystemSpec;
use crate::symbolic::TailedWord;
use crate::{Error, Result};

/// Leaves may not leave `|y| <= LEAF_GUARD`.
pub const LEAF_GUARD: f64 = 10.0;
/// Largest resolvable y-change per integration step.
const MAX_STEP_RISE: f64 = 0.25;
/// Resolvability gate: the discrepancy between a grid-cell step and its two
/// half-steps may not exceed this fraction of the cell's rise, scaled by
/// (step/1e-3)^4 to follow the method's order. Smooth cells sit orders of
/// magnitude below the gate; passages near a singular set jump far above it.
const STEP_ERROR_REL: f64 = 1e-6;
/// Hard multiple of the a priori depth before declaring non-certification.
const CERTIFY_FACTOR: usize = 10;

/// Truncation plan for the bundle series: partial sums to depth `depth`
/// carry an absolute tail below `tail_bound`.
#[derive(Debug, Clone, Copy)]
pub struct BundleQuery {
    pub depth: usize,
    pub tail_bound: f64,
}

/// A priori truncation plan for [`bundle_u`] at tolerance `tol`:
/// `depth = ceil(log(tol (1-gamma) / A) / log gamma)` with
/// `A = max|g'_x| / tau`, so the geometric tail `A gamma^K / (1-gamma)`
/// is at most `tol`.
pub fn bundle_plan(spec: &SystemSpec, tol: f64) -> Result<BundleQuery> {
    if tol <= 0.0 {
        return Err(Error::InvalidArg("tol must be positive".into()));
    }
    let b = spec.bounds();
    let a = b.max_gx / b.tau;
    let gamma = b.gamma;
    let k = ((tol * (1.0 - gamma) / a).ln() / gamma.ln()).ceil().max(1.0) as usize;
    Ok(BundleQuery {
        depth: k,
        tail_bound: a * gamma.powi(k as i32) / (1.0 - gamma),
    })
}

#[inline]
fn in_square(z: (f64, f64)) -> bool {
    (-1e-9..=1.0 + 1e-9).contains(&z.0) && (-1e-9..=1.0 + 1e-9).contains(&z.1)
}

/// Slope of the strong-stable bundle, truncated with certified error `<= tol`.
///
/// Series terms walk the forward orbit `z_k = F_{i_k}(z_{k-1})` from
/// `z_0 = (x, y)`; the term for step `k` is `-(g'_x/g'_y)(z_{k-1})` times the
/// accumulated ratio `prod f'/g'_y` over earlier steps. Summation stops once
/// the running geometric tail bound drops below `tol` (never later than the
/// a priori depth once the orbit is inside the unit square).
pub fn bundle_u(spec: &SystemSpec, i: &TailedWord, x: f64, y: f64, tol: f64) -> Result<f64> {
    let plan = bundle_plan(spec, tol)?;
    let b = spec.bounds();
    let a_over = b.max_gx / b.tau;
    let gamma = b.gamma;
    let cap = plan.depth * CERTIFY_FACTOR + 64;

    let mut z = (x, y);
    let mut ratio = 1.0f64;
    let mut sum = 0.0f64;
    let mut k = 0usize;
    loop {
        // Certified remaining tail once the orbit point is in the square.
        if in_square(z) {
            let tail = a_over * ratio.abs() / (1.0 - gamma);
            if tail <= tol || k >= plan.depth {
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
        sum += -m.gx_at(z.0, z.1) / gy * ratio;
        ratio *= m.fx_at(z.0) / gy;
        if !ratio.is_finite() || !sum.is_finite() {
            return Err(Error::SeriesNotCertified { x, y });
        }
        z = m.apply(z.0, z.1);
        k += 1;
        if k >= cap {
            return Err(Error::SeriesNotCertified { x, y });
        }
    }
}

/// y-derivative of the bundle slope (double series), certified `<= tol`.
pub fn bundle_u_y(spec: &SystemSpec, i: &TailedWord, x: f64, y: f64, tol: f64) -> Result<f64> {
    if tol <= 0.0 {
        return Err(Error::InvalidArg("tol must be positive".into()));
    }
    let b = spec.bounds();
    let gamma = b.gamma;
    let mf = b.max_fp;
    // |term_k| <= c1 * fprod_{k-1} + c2 * ratio_{k-1}.
    let c1 = b.max_gxy / b.tau;
    let c2 = b.max_gx * b.max_gyy / (b.tau * b.tau * (1.0 - b.rho));
    let tail = |fprod: f64, ratio: f64| c1 * fprod / (1.0 - mf) + c2 * ratio / (1.0 - gamma);
    // A priori depth from the same bound with worst-case factors.
    let mut apriori = 1usize;
    while tail(mf.powi(apriori as i32), gamma.powi(apriori as i32)) > tol {
        apriori += 1;
        if apriori > 4_000_000 {
            return Err(Error::SeriesNotCertified { x, y });
        }
    }
    let cap = apriori * CERTIFY_FACTOR + 64;

    let mut z = (x, y);
    let mut ratio = 1.0f64; // prod f'/g'_y, signed
    let mut fprod = 1.0f64; // prod f', signed
    let mut gyprod = 1.0f64; // prod g'_y, signed
    let mut s_acc = 0.0f64; // sum of (g''_yy/g'_y)(z_{l-1}) * gyprod_{l-1}
    let mut sum = 0.0f64;
    let mut k = 0usize;
    loop {
        if in_square(z) {
            if tail(fprod.abs(), ratio.abs()) <= tol || k >= apriori {
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
        s_acc += gyy / gy * gyprod;
        sum += -gxy / gy * fprod + gx / gy * ratio * s_acc;
        if !sum.is_finite() {
            return Err(Error::SeriesNotCertified { x, y });
        }
        let fp = m.fx_at(z.0);
        ratio *= fp / gy;
        fprod *= fp;
        gyprod *= gy;
        z = m.apply(z.0, z.1);
        k += 1;
        if k >= cap {
            return Err(Error::SeriesNotCertified { x, y });
        }
    }
}

/// Residual of the one-step invariance relation
/// `u(i,x,y) = -g'_x/g'_y + (f'/g'_y) u(σi, F_{i‌_1}(x,y))`, both sides
/// truncated at tolerance `tol`.
pub fn check_bundle_invariance(
    spec: &SystemSpec,
    i: &TailedWord,
    x: f64,
    y: f64,
    tol: f64,
) -> Result<f64> {
    let left = bundle_u(spec, i, x, y, tol)?;
    let m = spec.map(i.symbol(0));
    let (nx, ny) = m.apply(x, y);
    let right_tail = bundle_u(spec, &i.shift(), nx, ny, tol)?;
    let gy = m.gy_at(x, y);
    let right = -m.gx_at(x, y) / gy + m.fx_at(x) / gy * right_tail;
    Ok((left - right).abs())
}

// ---------------------------------------------------------------------------
// Leaf integration
// ---------------------------------------------------------------------------

/// A numerically integrated strong-stable leaf on a uniform x-grid.
#[derive(Debug, Clone)]
pub struct LeafSolution {
    anchor: (f64, f64),
    /// Actual grid spacing (`1 / ceil(1/step)`, at most the requested step).
    h: f64,
    /// Grid index of the first valid sample.
    lo: usize,
    /// Values `y(x_i)` for `i` in `lo..=hi`.
    ys: Vec<f64>,
    /// Slope samples `u(i, x_i, y(x_i))`.
    us: Vec<f64>,
    clipped_west: bool,
    clipped_east: bool,
}

impl LeafSolution {
    pub fn anchor(&self) -> (f64, f64) {
        self.anchor
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Valid x-range `[x_min, x_max]`.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.lo as f64 * self.h,
            (self.lo + self.ys.len() - 1) as f64 * self.h,
        )
    }

    /// The solve stopped before an endpoint (guard or non-certifiable slope).
    pub fn clipped(&self) -> bool {
        self.clipped_west || self.clipped_east
    }

    pub fn clipped_west(&self) -> bool {
        self.clipped_west
    }

    pub fn clipped_east(&self) -> bool {
        self.clipped_east
    }

    /// Grid samples `(x_i, y_i)`.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ys
            .iter()
            .enumerate()
            .map(move |(k, &y)| (((self.lo + k) as f64) * self.h, y))
    }

    /// Stored slope samples `(x_i, u_i)`.
    pub fn slope_samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.us
            .iter()
            .enumerate()
            .map(move |(k, &u)| (((self.lo + k) as f64) * self.h, u))
    }

    /// Cubic interpolation between grid samples (4-point Lagrange).
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let (x_min, x_max) = self.domain();
        if x < x_min - 1e-12 || x > x_max + 1e-12 {
            return Err(Error::InvalidArg(format!(
                "x = {x} outside leaf domain [{x_min}, {x_max}]"
            )));
        }
        interp_cubic(&self.ys, self.lo, self.h, x)
    }
}

fn interp_cubic(ys: &[f64], lo: usize, h: f64, x: f64) -> Result<f64> {
    let n = ys.len();
    if n == 1 {
        return Ok(ys[0]);
    }
    let t = (x / h - lo as f64).clamp(0.0, (n - 1) as f64);
    if n < 4 {
        // Not enough points for a cubic; fall back to linear.
        let j = (t.floor() as usize).min(n - 2);
        let frac = t - j as f64;
        return Ok(ys[j] * (1.0 - frac) + ys[j + 1] * frac);
    }
    // Center a 4-point stencil j-1..j+2 around the cell of x.
    let cell = (t.floor() as usize).clamp(1, n - 3);
    let u = t - cell as f64; // in [-1, 1] near the clamped edges
    let (ym1, y0, y1, y2) = (ys[cell - 1], ys[cell], ys[cell + 1], ys[cell + 2]);
    // Lagrange basis on nodes -1, 0, 1, 2.
    let a = -u * (u - 1.0) * (u - 2.0) / 6.0;
    let b = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
    let c = -(u + 1.0) * u * (u - 2.0) / 2.0;
    let d = (u + 1.0) * u * (u - 1.0) / 6.0;
    Ok(a * ym1 + b * y0 + c * y1 + d * y2)
}

struct Stepper<'a> {
    spec: &'a SystemSpec,
    word: &'a TailedWord,
    tol: f64,
}

impl Stepper<'_> {
    fn slope(&self, x: f64, y: f64) -> Result<f64> {
        if !y.is_finite() || y.abs() > LEAF_GUARD {
            return Err(Error::LeafBlowup {
                x,
                guard: LEAF_GUARD,
            });
        }
        bundle_u(self.spec, self.word, x, y, self.tol)
    }

    /// One classical fourth-order stage from `(x, y)` by signed `d`.
    /// A rise beyond [`MAX_STEP_RISE`] means the graph is close to vertical
    /// (the system's singular set); the step is unresolved and the leaf ends
    /// here rather than tunneling through.
    fn rk4_once(&self, x: f64, y: f64, d: f64) -> Result<f64> {
        let k1 = self.slope(x, y)?;
        let k2 = self.slope(x + 0.5 * d, y + 0.5 * d * k1)?;
        let k3 = self.slope(x + 0.5 * d, y + 0.5 * d * k2)?;
        let k4 = self.slope(x + d, y + d * k3)?;
        let y_next = y + d / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y_next.is_finite()
            || y_next.abs() > LEAF_GUARD
            || (y_next - y).abs() > MAX_STEP_RISE
        {
            return Err(Error::LeafBlowup {
                x: x + d,
                guard: LEAF_GUARD,
            });
        }
        Ok(y_next)
    }

    /// Grid-cell advance: two half-steps, with the full step as an error
    /// probe. A discrepancy above the [`STEP_ERROR_REL`] gate marks a cell
    /// the fixed spacing cannot resolve (steep systems near their singular
    /// set), and the leaf is clipped there instead of carrying the pollution
    /// onward.
    fn rk4(&self, x: f64, y: f64, d: f64) -> Result<f64> {
        let full = self.rk4_once(x, y, d)?;
        let mid = self.rk4_once(x, y, 0.5 * d)?;
        let refined = self.rk4_once(x + 0.5 * d, mid, 0.5 * d)?;
        let gate = STEP_ERROR_REL * (d.abs() / 1e-3).powi(4) * ((refined - y).abs() + d.abs());
        if (full - refined).abs() > gate {
            return Err(Error::LeafBlowup {
                x: x + d,
                guard: LEAF_GUARD,
            });
        }
        Ok(refined)
    }
}

/// Integrates the leaf through `anchor` over `x` in
/// `[x_lo, x_hi] ⊆ [0, 1]`, clipping where the guard or certification stops
/// it. Right-hand sides evaluate the bundle at tolerance `tol / 10`.
pub fn leaf_solve_clipped(
    spec: &SystemSpec,
    i: &TailedWord,
    anchor: (f64, f64),
    x_lo: f64,
    x_hi: f64,
    step: f64,
    tol: f64,
) -> Result<LeafSolution> {
    if !(0.0..=1.0).contains(&anchor.0) || !(0.0..=1.0).contains(&anchor.1) {
        return Err(Error::InvalidArg("anchor must lie in [0,1]^2".into()));
    }
    if !(x_lo >= -1e-12 && x_hi <= 1.0 + 1e-12 && x_lo < x_hi) {
        return Err(Error::InvalidArg("need 0 <= x_lo < x_hi <= 1".into()));
    }
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::InvalidArg("step must be in (0, 1e-2]".into()));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidArg("tol must be positive".into()));
    }
    let m = (1.0 / step).ceil() as usize;
    let h = 1.0 / m as f64;
    let stepper = Stepper {
        spec,
        word: i,
        tol: tol / 10.0,
    };

    let (x0, y0) = anchor;
    // Grid nodes enclosing the requested window, so interpolation covers all
    // of [x_lo, x_hi].
    let i_lo = (((x_lo + 1e-12) / h).floor().max(0.0)) as usize;
    let i_hi = ((((x_hi - 1e-12) / h).ceil()) as usize).min(m);
    // Anchor snapped to its grid index when it falls on the grid.
    let anchor_idx_exact = (x0 / h).round();
    let on_grid = (x0 - anchor_idx_exact * h).abs() < 1e-12;

    // Seed index: nearest grid index at or west of the anchor, clamped into
    // the requested window.
    let seed = ((x0 / h).floor() as usize).clamp(i_lo, i_hi);
    let seed_x = seed as f64 * h;
    let seed_y = if on_grid && seed == anchor_idx_exact as usize {
        y0
    } else {
        stepper.rk4(x0, y0, seed_x - x0)?
    };

    // East sweep from the seed.
    let mut east = vec![seed_y];
    let mut clipped_east = false;
    {
        let mut y = seed_y;
        for idx in seed..i_hi {
            let x = idx as f64 * h;
            match stepper.rk4(x, y, h) {
                Ok(ny) => {
                    east.push(ny);
                    y = ny;
                }
                Err(Error::LeafBlowup { .. }) | Err(Error::SeriesNotCertified { .. }) => {
                    clipped_east = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    // West sweep.
    let mut west = Vec::new();
    let mut clipped_west = false;
    {
        let mut y = seed_y;
        for idx in (i_lo..seed).rev() {
            let x = (idx + 1) as f64 * h;
            match stepper.rk4(x, y, -h) {
                Ok(ny) => {
                    west.push(ny);
                    y = ny;
                }
                Err(Error::LeafBlowup { .. }) | Err(Error::SeriesNotCertified { .. }) => {
                    clipped_west = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    west.reverse();
    let lo = i_lo + (seed - i_lo - west.len());
    let mut ys = west;
    ys.extend(east);

    // Slope samples at the stored nodes (diagnostics reuse these).
    let mut us = Vec::with_capacity(ys.len());
    for (k, &y) in ys.iter().enumerate() {
        let x = (lo + k) as f64 * h;
        us.push(stepper.slope(x, y)?);
    }

    Ok(LeafSolution {
        anchor,
        h,
        lo,
        ys,
        us,
        clipped_west,
        clipped_east,
    })
}

/// Leaf over all of `[0, 1]`; errors if the guard clips either side.
pub fn leaf_solve(
    spec: &SystemSpec,
    i: &TailedWord,
    anchor: (f64, f64),
    step: f64,
    tol: f64,
) -> Result<LeafSolution> {
    let leaf = leaf_solve_clipped(spec, i, anchor, 0.0, 1.0, step, tol)?;
    if leaf.clipped() {
        let (lo, hi) = leaf.domain();
        return Err(Error::LeafBlowup {
            x: if leaf.clipped_east { hi } else { lo },
            guard: LEAF_GUARD,
        });
    }
    Ok(leaf)
}

/// Non-linear projection: the leaf through `pi(j)` for the word `i`,
/// evaluated at `x = 0`. Only the westward leaf segment is integrated.
pub fn nonlinear_projection(
    spec: &SystemSpec,
    i: &TailedWord,
    j: &TailedWord,
    step: f64,
    tol: f64,
) -> Result<f64> {
    let anchor = spec.canonical_projection(j, tol / 10.0)?;
    let anchor = (anchor.0.clamp(0.0, 1.0), anchor.1.clamp(0.0, 1.0));
    if anchor.0 <= 0.0 {
        return Ok(anchor.1);
    }
    let leaf = leaf_solve_clipped(spec, i, anchor, 0.0, anchor.0, step, tol)?;
    if leaf.clipped_west() {
        let (lo, _) = leaf.domain();
        return Err(Error::LeafBlowup {
            x: lo,
            guard: LEAF_GUARD,
        });
    }
    leaf.value_at(0.0)
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Outcome of the leaf-invariance identity check
/// `g_{i_1}(x, y_i(x)) = y_{σi}(F_{i_1}(anchor), f_{i_1}(x))`.
#[derive(Debug, Clone, Copy)]
pub struct LeafInvarianceReport {
    pub max_residual: f64,
    /// x-range actually compared (leaves of steep systems may not cover all
    /// of `[0, 1]`).
    pub domain: (f64, f64),
    pub clipped: bool,
}

pub fn check_leaf_invariance(
    spec: &SystemSpec,
    i: &TailedWord,
    anchor: (f64, f64),
    step: f64,
    tol: f64,
) -> Result<LeafInvarianceReport> {
    let left = leaf_solve_clipped(spec, i, anchor, 0.0, 1.0, step, tol)?;
    let first = spec.map(i.symbol(0));
    let image_anchor = first.apply(anchor.0, anchor.1);
    let (dlo, dhi) = left.domain();
    // The right leaf is only consulted on f_{i_1}([dlo, dhi]) (f is
    // monotone for the supported families either way; take the envelope).
    let fa = first.f_at(dlo);
    let fb = first.f_at(dhi);
    let (rlo, rhi) = (fa.min(fb).max(0.0), fa.max(fb).min(1.0));
    let right = leaf_solve_clipped(
        spec,
        &i.shift(),
        (image_anchor.0.clamp(0.0, 1.0), image_anchor.1.clamp(0.0, 1.0)),
        (rlo - 4.0 * step).max(0.0),
        (rhi + 4.0 * step).min(1.0),
        step,
        tol,
    )?;
    let (glo, ghi) = right.domain();
    // Compare only where the integration resolves the graph: a per-step
    // rise above 3% of the square (slope 30 at the canonical step) marks
    // the unresolved stretch next to a clip.
    let trust = 0.03 / left.step();
    let mut max_residual = 0.0f64;
    let mut compared = (f64::INFINITY, f64::NEG_INFINITY);
    for ((x, y), (_, u)) in left.samples().zip(left.slope_samples()) {
        if u.abs() > trust {
            continue;
        }
        let fx = first.f_at(x);
        if fx < glo - 1e-12 || fx > ghi + 1e-12 {
            continue;
        }
        let lhs = first.g_at(x, y);
        let rhs = right.value_at(fx)?;
        max_residual = max_residual.max((lhs - rhs).abs());
        compared = (compared.0.min(x), compared.1.max(x));
    }
    Ok(LeafInvarianceReport {
        max_residual,
        domain: compared,
        clipped: left.clipped() || right.clipped(),
    })
}

/// Outcome of the leaf-distance (Grönwall) check: the gap between two leaves
/// of the same word, measured from its value at `x = 0`.
#[derive(Debug, Clone, Copy)]
pub struct GronwallReport {
    /// `max_x |y_0(x) - y_1(x)| / |y_0(0) - y_1(0)|` over the common domain.
    pub ratio: f64,
    /// `exp(sup |u'_y|)` with the sup sampled along both leaves.
    pub bound: f64,
    pub sup_uy: f64,
    /// Gap at `x = 0`.
    pub gap_at_zero: f64,
    pub pass: bool,
    pub domain: (f64, f64),
}

pub fn check_gronwall(
    spec: &SystemSpec,
    i: &TailedWord,
    anchor0: (f64, f64),
    anchor1: (f64, f64),
    step: f64,
    tol: f64,
) -> Result<GronwallReport> {
    let l0 = leaf_solve_clipped(spec, i, anchor0, 0.0, 1.0, step, tol)?;
    let l1 = leaf_solve_clipped(spec, i, anchor1, 0.0, 1.0, step, tol)?;
    let lo = l0.domain().0.max(l1.domain().0);
    let hi = l0.domain().1.min(l1.domain().1);
    if lo > 0.0 + 1e-12 || hi <= lo {
        return Err(Error::LeafBlowup {
            x: lo,
            guard: LEAF_GUARD,
        });
    }
    let mut sup_uy = 0.0f64;
    let mut max_gap = 0.0f64;
    for (x, y) in l0.samples().chain(l1.samples()) {
        if x < lo - 1e-12 || x > hi + 1e-12 {
            continue;
        }
        sup_uy = sup_uy.max(bundle_u_y(spec, i, x, y, tol)?.abs());
    }
    for (x, y0) in l0.samples() {
        if x < lo - 1e-12 || x > hi + 1e-12 {
            continue;
        }
        let y1 = l1.value_at(x)?;
        max_gap = max_gap.max((y0 - y1).abs());
    }
    let gap0 = (l0.value_at(0.0)? - l1.value_at(0.0)?).abs();
    let slack = 10.0 * tol + 1e3 * step.powi(4);
    let bound = sup_uy.exp();
    let (ratio, pass) = if gap0 <= slack {
        // Coincident anchors: both sides vanish.
        (1.0, max_gap <= slack)
    } else {
        let r = max_gap / gap0;
        (r, max_gap <= bound * gap0 * (1.0 + 1e-3) + slack)
    };
    Ok(GronwallReport {
        ratio,
        bound,
        sup_uy,
        gap_at_zero: gap0,
        pass,
        domain: (lo, hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::symbolic::{TailedWord, Word};
    use rand::Rng;

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

    #[test]
    fn affine_bundle_is_minus_one() {
        let spec = SystemSpec::preset("affine-test").unwrap();
        let mut rng = stream_rng(5, 0);
        for _ in 0..100 {
            let i = random_word(&mut rng, 2);
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            let u = bundle_u(&spec, &i, x, y, 1e-10).unwrap();
            assert!((u + 1.0).abs() <= 1e-9, "u = {u}");
        }
    }

    #[test]
    fn vertical_free_system_has_flat_bundle() {
        // g independent of x: every series term vanishes.
        let spec = SystemSpec::from_json_str(
            r#"{"maps":[{"f":"0.3*x","g":"0.4*y"},{"f":"0.3*x+0.6","g":"0.4*y+0.55"}]}"#,
        )
        .unwrap();
        let i = TailedWord::parse("12:(21)", 2).unwrap();
        assert_eq!(bundle_u(&spec, &i, 0.3, 0.7, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn bundle_bounded_by_geometric_series() {
        let spec = SystemSpec::preset("example-a").unwrap();
        let b = spec.bounds();
        let cap = b.max_gx / b.tau / (1.0 - b.gamma) / b.tau;
        let mut rng = stream_rng(6, 0);
        for _ in 0..50 {
            let i = random_word(&mut rng, 24);
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            let u = bundle_u(&spec, &i, x, y, 1e-8).unwrap();
            assert!(u.abs() <= cap, "u = {u} beyond {cap}");
        }
    }

    #[test]
    fn bundle_plan_matches_contract() {
        let spec = SystemSpec::preset("example-b").unwrap();
        for tol in [1e-6, 1e-10] {
            let plan = bundle_plan(&spec, tol).unwrap();
            assert!(plan.tail_bound <= tol);
            let b = spec.bounds();
            let a = b.max_gx / b.tau;
            let expected =
                ((tol * (1.0 - b.gamma) / a).ln() / b.gamma.ln()).ceil() as usize;
            assert_eq!(plan.depth, expected);
        }
    }

    #[test]
    fn bundle_invariance_residuals() {
        let mut rng = stream_rng(7, 0);
        // Constant slope field: the relation is exact.
        let at = SystemSpec::preset("affine-test").unwrap();
        for _ in 0..20 {
            let i = random_word(&mut rng, 2);
            let r = check_bundle_invariance(&at, &i, rng.gen(), rng.gen(), 1e-12).unwrap();
            assert!(r <= 1e-12, "affine residual {r}");
        }
        // Matched truncation keeps the relation residual within 10x the
        // requested tolerance.
        for preset in ["example-a", "example-b"] {
            let spec = SystemSpec::preset(preset).unwrap();
            for _ in 0..30 {
                let i = random_word(&mut rng, spec.n_maps());
                let r =
                    check_bundle_invariance(&spec, &i, rng.gen(), rng.gen(), 1e-10).unwrap();
                assert!(r <= 10.0 * 1e-10, "{preset} residual {r}");
            }
        }
    }

    #[test]
    fn jacobian_maps_bundle_direction() {
        // D F_{i_1} (1, u(i,x,y)) = f'_{i_1}(x) (1, u(σi, F_{i_1}(x,y))).
        let mut rng = stream_rng(8, 0);
        for preset in ["example-a", "example-b"] {
            let spec = SystemSpec::preset(preset).unwrap();
            for _ in 0..25 {
                let i = random_word(&mut rng, spec.n_maps());
                let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
                let u = bundle_u(&spec, &i, x, y, 1e-11).unwrap();
                let m = spec.map(i.symbol(0));
                let (nx, ny) = m.apply(x, y);
                let u_next = bundle_u(&spec, &i.shift(), nx, ny, 1e-11).unwrap();
                let fp = m.fx_at(x);
                let second = m.gx_at(x, y) + m.gy_at(x, y) * u;
                assert!(
                    (second - fp * u_next).abs() <= 1e-8,
                    "{preset}: {second} vs {}",
                    fp * u_next
                );
            }
        }
    }

    #[test]
    fn uy_signs_and_bounds() {
        let a = SystemSpec::preset("example-a").unwrap();
        let bspec = SystemSpec::preset("example-b").unwrap();
        let mut rng = stream_rng(9, 0);
        for _ in 0..60 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
            let ia = random_word(&mut rng, 24);
            let va = bundle_u_y(&a, &ia, x, y, 1e-9).unwrap();
            assert!(va >= -1e-9, "example-a u'_y = {va}");
            let ib = random_word(&mut rng, 13);
            let vb = bundle_u_y(&bspec, &ib, x, y, 1e-9).unwrap();
            assert!(vb.abs() <= 112.0 / 135.0 + 1e-9, "example-b |u'_y| = {vb}");
        }
        // Affine: all second derivatives vanish.
        let at = SystemSpec::preset("affine-test").unwrap();
        let i = TailedWord::constant(1, 2).unwrap();
        assert_eq!(bundle_u_y(&at, &i, 0.4, 0.6, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn affine_leaf_is_linear() {
        let spec = SystemSpec::preset("affine-test").unwrap();
        let i = TailedWord::parse("2:(12)", 2).unwrap();
        let leaf = leaf_solve(&spec, &i, (0.5, 0.5), 1e-3, 1e-10).unwrap();
        assert!(!leaf.clipped());
        // Slope -1: y(x) = y0 - (x - x0).
        for (x, y) in leaf.samples() {
            assert!((y - (1.0 - x)).abs() < 1e-9, "y({x}) = {y}");
        }
        assert!((leaf.value_at(0.0).unwrap() - 1.0).abs() < 1e-9);
        // Interpolation between nodes stays on the line.
        assert!((leaf.value_at(0.1234567).unwrap() - (1.0 - 0.1234567)).abs() < 1e-9);
    }

    #[test]
    fn flat_leaf_for_vertical_free_system() {
        let spec = SystemSpec::from_json_str(
            r#"{"maps":[{"f":"0.3*x","g":"0.4*y"},{"f":"0.3*x+0.6","g":"0.4*y+0.55"}]}"#,
        )
        .unwrap();
        let i = TailedWord::constant(2, 2).unwrap();
        let leaf = leaf_solve(&spec, &i, (0.25, 0.625), 5e-3, 1e-10).unwrap();
        for (_, y) in leaf.samples() {
            assert_eq!(y, 0.625);
        }
    }

    #[test]
    fn leaf_rejects_bad_arguments() {
        let spec = SystemSpec::preset("affine-test").unwrap();
        let i = TailedWord::constant(1, 2).unwrap();
        assert!(leaf_solve(&spec, &i, (0.5, 0.5), 0.05, 1e-8).is_err());
        assert!(leaf_solve(&spec, &i, (1.5, 0.5), 1e-3, 1e-8).is_err());
    }

    #[test]
    fn fourth_order_convergence() {
        // Error should shrink ~16x per step halving; require >= 12x.
        let spec = SystemSpec::preset("example-a").unwrap();
        let i = TailedWord::parse(":(7,13,2)", 24).unwrap();
        let anchor = (0.6, 0.3);
        let solve = |h: f64| {
            leaf_solve_clipped(&spec, &i, anchor, 0.0, 0.6, h, 1e-12).unwrap()
        };
        let coarse = solve(8e-3);
        let mid = solve(4e-3);
        let fine = solve(2e-3);
        let diff = |a: &LeafSolution, b: &LeafSolution| {
            let mut d = 0.0f64;
            for (x, y) in a.samples() {
                if x >= b.domain().0 && x <= b.domain().1 {
                    d = d.max((y - b.value_at(x).unwrap()).abs());
                }
            }
            d
        };
        let d1 = diff(&coarse, &fine);
        let d2 = diff(&mid, &fine);
        // d1 ~ e(h), d2 ~ e(h/2): ratio ~ 16 (with the h/4 reference
        // absorbing a small correction).
        let ratio = d1 / d2;
        assert!(
            ratio >= 12.0,
            "observed convergence ratio {ratio} (d1 = {d1:.3e}, d2 = {d2:.3e})"
        );
    }

    #[test]
    fn leaf_invariance_residuals() {
        // Both sides linear for the affine system.
        let at = SystemSpec::preset("affine-test").unwrap();
        let i = TailedWord::parse("12:(21)", 2).unwrap();
        let r = check_leaf_invariance(&at, &i, (0.5, 0.5), 1e-3, 1e-8).unwrap();
        assert!(r.max_residual <= 1e-10, "affine residual {}", r.max_residual);

        // g independent of x: both sides constant in x.
        let flat = SystemSpec::from_json_str(
            r#"{"maps":[{"f":"0.3*x","g":"0.4*y"},{"f":"0.3*x+0.6","g":"0.4*y+0.55"}]}"#,
        )
        .unwrap();
        let j = TailedWord::constant(1, 2).unwrap();
        let rf = check_leaf_invariance(&flat, &j, (0.5, 0.5), 1e-3, 1e-10).unwrap();
        assert!(rf.max_residual <= 1e-12);

        let eb = SystemSpec::preset("example-b").unwrap();
        let ib = TailedWord::parse("4:(9,1)", 13).unwrap();
        let rb = check_leaf_invariance(&eb, &ib, (0.3, 0.6), 1e-3, 1e-8).unwrap();
        assert!(!rb.clipped);
        assert!(rb.max_residual <= 1e-5, "example-b residual {}", rb.max_residual);
    }

    #[test]
    fn gronwall_affine_ratio_is_one() {
        let at = SystemSpec::preset("affine-test").unwrap();
        let i = TailedWord::parse(":(12)", 2).unwrap();
        let r = check_gronwall(&at, &i, (0.2, 0.3), (0.7, 0.6), 2e-3, 1e-9).unwrap();
        assert!(r.pass);
        assert!((r.ratio - 1.0).abs() <= 1e-6, "ratio {}", r.ratio);
        // Coincident anchors: both sides vanish.
        let c = check_gronwall(&at, &i, (0.4, 0.4), (0.4, 0.4), 2e-3, 1e-9).unwrap();
        assert!(c.pass && c.gap_at_zero == 0.0);
    }

    #[test]
    fn gronwall_example_b() {
        let spec = SystemSpec::preset("example-b").unwrap();
        let mut rng = stream_rng(10, 0);
        for _ in 0..10 {
            let i = random_word(&mut rng, 13);
            let a0 = (rng.gen::<f64>(), rng.gen::<f64>());
            let a1 = (rng.gen::<f64>(), rng.gen::<f64>());
            let r = check_gronwall(&spec, &i, a0, a1, 2e-3, 1e-9).unwrap();
            assert!(r.pass, "ratio {} bound {}", r.ratio, r.bound);
            assert!(
                r.ratio <= (112.0f64 / 135.0).exp() + 1e-3,
                "ratio {} beyond family bound",
                r.ratio
            );
        }
    }

    #[test]
    fn projection_through_flat_and_affine_leaves() {
        // u = 0: proj is the second coordinate of pi(j).
        let flat = SystemSpec::from_json_str(
            r#"{"maps":[{"f":"0.3*x","g":"0.4*y"},{"f":"0.3*x+0.6","g":"0.4*y+0.55"}]}"#,
        )
        .unwrap();
        let i = TailedWord::constant(1, 2).unwrap();
        let j = TailedWord::parse("2:(12)", 2).unwrap();
        let pj = flat.canonical_projection(&j, 1e-11).unwrap();
        let p = nonlinear_projection(&flat, &i, &j, 1e-3, 1e-10).unwrap();
        assert!((p - pj.1).abs() <= 1e-9);

        // Slope -1: proj = pi^2(j) + pi^1(j).
        let at = SystemSpec::preset("affine-test").unwrap();
        let pj = at.canonical_projection(&j, 1e-11).unwrap();
        let p = nonlinear_projection(&at, &i, &j, 1e-3, 1e-10).unwrap();
        assert!((p - (pj.1 + pj.0)).abs() <= 1e-8);

        // Same projected point, differently presented word: same value.
        let j2 = TailedWord::parse("212:(12)", 2).unwrap(); // equals j
        let p2 = nonlinear_projection(&at, &i, &j2, 1e-3, 1e-10).unwrap();
        assert!((p - p2).abs() <= 1e-8);
    }

    #[test]
    fn example_a_projection_reaches_zero() {
        // Westward leaf segments of the steep preset stay under the guard.
        let spec = SystemSpec::preset("example-a").unwrap();
        let mut rng = stream_rng(11, 0);
        for _ in 0..5 {
            let i = random_word(&mut rng, 24);
            let j = random_word(&mut rng, 24);
            let p = nonlinear_projection(&spec, &i, &j, 2e-3, 1e-8).unwrap();
            assert!(p.is_finite() && p.abs() <= LEAF_GUARD);
        }
    }
}
