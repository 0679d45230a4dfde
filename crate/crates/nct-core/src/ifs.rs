//! The triangular IFS model: `N` maps `F_i(x,y) = (f_i(x), g_i(x,y))` with
//! translation parameters, composition, the canonical projection, chain-rule
//! derivatives along words, and validators for the supported map families.
//!
//! A loaded [`SystemSpec`] always satisfies the basic domination bounds
//! (positive `tau`, `rho < 1`, `gamma < 1`); family validation beyond that is
//! a report, not an error. Condition checks are sampling-based (grid plus
//! seeded random interior points), not certified interval arithmetic; each
//! report carries worst margins so a user can judge.

use crate::expr::{self, DerivOrder, Expression, Program, Var};
use crate::rng::stream_rng;
use crate::symbolic::{TailedWord, Word};
use crate::{Error, Result};
use rand::Rng;
use serde::Deserialize;

/// Grid used for load-time finiteness validation.
const FINITENESS_GRID: usize = 33;
/// Random interior points mixed into the bound scan and validators.
const RANDOM_SCAN_POINTS: usize = 10_000;
/// Fixed seed for the sampling validators; reports are deterministic.
const SCAN_SEED: u64 = 0x5eed_0001;
/// Strict inequalities must hold with at least this margin at every sample.
pub const STRICT_MARGIN: f64 = 1e-9;
/// Non-strict inequalities tolerate this much float noise.
pub const SIGN_TOLERANCE: f64 = 1e-12;
/// Orbit points may leave the unit square by at most this much.
pub const ESCAPE_TOLERANCE: f64 = 1e-12;
/// Containment of map images is checked to this tolerance.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-9;

/// One triangular map with its translation parameters and compiled
/// derivative kernels.
#[derive(Debug, Clone)]
pub struct TriangularMap {
    f_src: Expression,
    g_src: Expression,
    t1: f64,
    t2: f64,
    f: Program,
    fx: Program,
    g: Program,
    gx: Program,
    gy: Program,
    gxy: Program,
    gyy: Program,
}

impl TriangularMap {
    pub fn new(f: Expression, g: Expression, t1: f64, t2: f64) -> Result<Self> {
        if f.vars().iter().any(|v| matches!(v, Var::Y | Var::T2)) {
            return Err(Error::InvalidSpec(
                "f must be an expression in x and t1 only".into(),
            ));
        }
        if g.vars().contains(&Var::T1) {
            return Err(Error::InvalidSpec(
                "g must be an expression in x, y, and t2 only".into(),
            ));
        }
        let fx_e = f.derivative_expr(DerivOrder::Dx);
        let gx_e = g.derivative_expr(DerivOrder::Dx);
        let gy_e = g.derivative_expr(DerivOrder::Dy);
        let gxy_e = g.derivative_expr(DerivOrder::Dxy);
        let gyy_e = g.derivative_expr(DerivOrder::Dyy);
        // C^2 on the closed square: all kernels must be finite there.
        for e in [&f, &fx_e, &g, &gx_e, &gy_e, &gxy_e, &gyy_e] {
            e.validate_grid(t1, t2, FINITENESS_GRID)?;
        }
        Ok(TriangularMap {
            f: f.compile(t1, t2)?,
            fx: fx_e.compile(t1, t2)?,
            g: g.compile(t1, t2)?,
            gx: gx_e.compile(t1, t2)?,
            gy: gy_e.compile(t1, t2)?,
            gxy: gxy_e.compile(t1, t2)?,
            gyy: gyy_e.compile(t1, t2)?,
            f_src: f,
            g_src: g,
            t1,
            t2,
        })
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn f_source(&self) -> &Expression {
        &self.f_src
    }

    pub fn g_source(&self) -> &Expression {
        &self.g_src
    }

    /// `F_i(x, y)`.
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.f.eval(x, 0.0), self.g.eval(x, y))
    }

    #[inline]
    pub fn f_at(&self, x: f64) -> f64 {
        self.f.eval(x, 0.0)
    }

    #[inline]
    pub fn fx_at(&self, x: f64) -> f64 {
        self.fx.eval(x, 0.0)
    }

    #[inline]
    pub fn g_at(&self, x: f64, y: f64) -> f64 {
        self.g.eval(x, y)
    }

    #[inline]
    pub fn gx_at(&self, x: f64, y: f64) -> f64 {
        self.gx.eval(x, y)
    }

    #[inline]
    pub fn gy_at(&self, x: f64, y: f64) -> f64 {
        self.gy.eval(x, y)
    }

    #[inline]
    pub fn gxy_at(&self, x: f64, y: f64) -> f64 {
        self.gxy.eval(x, y)
    }

    #[inline]
    pub fn gyy_at(&self, x: f64, y: f64) -> f64 {
        self.gyy.eval(x, y)
    }

    /// `f'` is the same constant everywhere (after parameter folding).
    pub fn constant_fx(&self) -> Option<f64> {
        self.fx.as_const()
    }
}

/// Derivative bounds cached from a sampling scan of `[0,1]^2`, padded by a
/// small sampling slack. Lower bounds pad down, upper bounds pad up, so the
/// truncation-depth formulas built from them stay on the safe side.
#[derive(Debug, Clone, Copy)]
pub struct CachedBounds {
    /// Lower bound on `min(|f'|, |g'_y|)`.
    pub tau: f64,
    /// Upper bound on `|g'_y|`; always `< 1`.
    pub rho: f64,
    /// Upper bound on `|f'| / |g'_y|`; always `< 1` (domination).
    pub gamma: f64,
    /// Upper bound on `|f'|`.
    pub max_fp: f64,
    /// Upper bound on `|g'_x|`.
    pub max_gx: f64,
    /// Upper bound on `|g''_xy|`.
    pub max_gxy: f64,
    /// Upper bound on `|g''_yy|`.
    pub max_gyy: f64,
}

/// A triangular system together with its cached bounds.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    maps: Vec<TriangularMap>,
    grid_resolution: usize,
    bounds: CachedBounds,
}

fn default_grid() -> usize {
    64
}

#[derive(Deserialize)]
struct MapConfig {
    f: String,
    g: String,
    #[serde(default)]
    t1: f64,
    #[serde(default)]
    t2: f64,
}

#[derive(Deserialize)]
struct SpecConfig {
    maps: Vec<MapConfig>,
    #[serde(default = "default_grid")]
    grid_resolution: usize,
}

/// Scan points: full grid plus seeded random interior points.
fn scan_points(resolution: usize, extra: usize) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(resolution * resolution + extra);
    let denom = (resolution - 1) as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            pts.push((i as f64 / denom, j as f64 / denom));
        }
    }
    let mut rng = stream_rng(SCAN_SEED, 0);
    for _ in 0..extra {
        pts.push((rng.gen::<f64>(), rng.gen::<f64>()));
    }
    pts
}

impl SystemSpec {
    pub fn new(maps: Vec<TriangularMap>, grid_resolution: usize) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidSpec("need at least two maps".into()));
        }
        if maps.len() > 255 {
            return Err(Error::InvalidSpec("at most 255 maps supported".into()));
        }
        if grid_resolution < 2 {
            return Err(Error::InvalidSpec("grid_resolution must be >= 2".into()));
        }
        let pts = scan_points(grid_resolution.max(FINITENESS_GRID), RANDOM_SCAN_POINTS);

        let mut min_fp = f64::INFINITY;
        let mut max_fp: f64 = 0.0;
        let mut min_gy = f64::INFINITY;
        let mut max_gy: f64 = 0.0;
        let mut max_ratio: f64 = 0.0;
        let mut max_gx: f64 = 0.0;
        let mut max_gxy: f64 = 0.0;
        let mut max_gyy: f64 = 0.0;

        for (idx, m) in maps.iter().enumerate() {
            for &(x, y) in &pts {
                let (ix, iy) = m.apply(x, y);
                let inside = |v: f64| (-CONTAINMENT_TOLERANCE..=1.0 + CONTAINMENT_TOLERANCE).contains(&v);
                if !inside(ix) || !inside(iy) {
                    return Err(Error::InvalidSpec(format!(
                        "map {} does not send [0,1]^2 into itself: F({x}, {y}) = ({ix}, {iy})",
                        idx + 1
                    )));
                }
                let fp = m.fx_at(x).abs();
                let gy = m.gy_at(x, y).abs();
                min_fp = min_fp.min(fp);
                max_fp = max_fp.max(fp);
                min_gy = min_gy.min(gy);
                max_gy = max_gy.max(gy);
                if gy > 0.0 {
                    max_ratio = max_ratio.max(fp / gy);
                }
                max_gx = max_gx.max(m.gx_at(x, y).abs());
                max_gxy = max_gxy.max(m.gxy_at(x, y).abs());
                max_gyy = max_gyy.max(m.gyy_at(x, y).abs());
            }
        }

        let pad = |range: f64| 0.01 * range + 1e-9;
        let tau_raw = min_fp.min(min_gy);
        let tau = (tau_raw - pad(max_fp.max(max_gy) - tau_raw)).max(0.5 * tau_raw);
        // Upper bounds pad upward but must not cross 1.
        let upper_sub1 = |raw: f64, range: f64| (raw + pad(range)).min(raw + 0.5 * (1.0 - raw));
        let rho = upper_sub1(max_gy, max_gy - min_gy);
        let gamma = upper_sub1(max_ratio, max_ratio);
        let bounds = CachedBounds {
            tau,
            rho,
            gamma,
            max_fp: max_fp + pad(max_fp - min_fp),
            max_gx: max_gx * 1.01 + 1e-9,
            max_gxy: max_gxy * 1.01 + 1e-9,
            max_gyy: max_gyy * 1.01 + 1e-9,
        };

        if !(bounds.tau > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "degenerate derivatives: tau = {}",
                bounds.tau
            )));
        }
        if bounds.rho >= 1.0 || max_gy >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "|g'_y| must stay below 1 (rho = {})",
                bounds.rho
            )));
        }
        if bounds.gamma >= 1.0 || max_ratio >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "domination fails: |f'|/|g'_y| reaches {max_ratio}"
            )));
        }

        Ok(SystemSpec {
            maps,
            grid_resolution,
            bounds,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let cfg: SpecConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        let maps = cfg
            .maps
            .into_iter()
            .map(|m| TriangularMap::new(expr::parse(&m.f)?, expr::parse(&m.g)?, m.t1, m.t2))
            .collect::<Result<Vec<_>>>()?;
        SystemSpec::new(maps, cfg.grid_resolution)
    }

    pub fn from_path(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Compiled-in presets: `affine-test`, `example-a`, `example-b`, and
    /// `affine-mod` (a three-map affine system whose pressure root falls in
    /// the middle branch of the singular value function).
    pub fn preset(name: &str) -> Result<Self> {
        let json = match name {
            "affine-test" => r#"{"maps":[
                    {"f":"0.3*x+t1","g":"0.4*y+0.1*x+t2"},
                    {"f":"0.3*x+0.6+t1","g":"0.4*y+0.1*x+0.5+t2"}
                ]}"#
            .to_string(),
            "affine-mod" => r#"{"maps":[
                    {"f":"0.2*x+t1","g":"0.45*y+t2"},
                    {"f":"0.2*x+0.4+t1","g":"0.45*y+0.25+t2"},
                    {"f":"0.2*x+0.8+t1","g":"0.45*y+0.5+t2"}
                ]}"#
            .to_string(),
            "example-a" => {
                let maps: Vec<String> = (1..=24)
                    .map(|i| {
                        format!(
                            r#"{{"f":"(x+{i})/25+t1","g":"(y^2+2*y+1-x*y+12*x^3+2*x)/24+t2"}}"#
                        )
                    })
                    .collect();
                format!(r#"{{"maps":[{}]}}"#, maps.join(","))
            }
            "example-b" => {
                let maps: Vec<String> = (1..=13)
                    .map(|i| {
                        format!(
                            r#"{{"f":"exp((x-{i})/25)+t1","g":"y/5*exp((x-{i})/25)+cos(x)/2+({i}-6)/25+t2"}}"#
                        )
                    })
                    .collect();
                format!(r#"{{"maps":[{}]}}"#, maps.join(","))
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (expected affine-test, affine-mod, example-a, example-b)"
                )))
            }
        };
        Self::from_json_str(&json)
    }

    /// Loads a preset by name or a JSON config by path.
    pub fn resolve(source: &str) -> Result<Self> {
        match source {
            "affine-test" | "affine-mod" | "example-a" | "example-b" => Self::preset(source),
            path => Self::from_path(path),
        }
    }

    /// Same system with one translation parameter replaced (1-based map
    /// index).
    pub fn with_translation(&self, map_index: usize, which_t2: bool, value: f64) -> Result<Self> {
        if map_index == 0 || map_index > self.maps.len() {
            return Err(Error::InvalidArg(format!(
                "map index {map_index} out of range 1..={}",
                self.maps.len()
            )));
        }
        let mut maps = self.maps.clone();
        let m = &self.maps[map_index - 1];
        let referenced = if which_t2 {
            m.g_src.vars().contains(&Var::T2)
        } else {
            m.f_src.vars().contains(&Var::T1)
        };
        if !referenced {
            return Err(Error::InvalidArg(format!(
                "map {map_index} does not reference {}",
                if which_t2 { "t2" } else { "t1" }
            )));
        }
        let (t1, t2) = if which_t2 { (m.t1, value) } else { (value, m.t2) };
        maps[map_index - 1] = TriangularMap::new(m.f_src.clone(), m.g_src.clone(), t1, t2)?;
        SystemSpec::new(maps, self.grid_resolution)
    }

    pub fn n_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[TriangularMap] {
        &self.maps
    }

    /// Map for a 1-based symbol.
    #[inline]
    pub fn map(&self, symbol: u8) -> &TriangularMap {
        &self.maps[symbol as usize - 1]
    }

    pub fn grid_resolution(&self) -> usize {
        self.grid_resolution
    }

    pub fn bounds(&self) -> &CachedBounds {
        &self.bounds
    }

    #[inline]
    fn check_inside(&self, z: (f64, f64), map: usize) -> Result<(f64, f64)> {
        let ok = |v: f64| (-ESCAPE_TOLERANCE..=1.0 + ESCAPE_TOLERANCE).contains(&v);
        if ok(z.0) && ok(z.1) {
            Ok(z)
        } else {
            Err(Error::Escape {
                map,
                x: z.0,
                y: z.1,
            })
        }
    }

    /// `F_w(point)`, with `F_w = F_{w_1} ∘ … ∘ F_{w_n}`. The empty word is
    /// the identity. Errors if any intermediate leaves the unit square by
    /// more than [`ESCAPE_TOLERANCE`].
    pub fn compose(&self, w: &Word, point: (f64, f64)) -> Result<(f64, f64)> {
        let mut z = self.check_inside(point, 0)?;
        for &s in w.symbols().iter().rev() {
            z = self.check_inside(self.map(s).apply(z.0, z.1), s as usize)?;
        }
        Ok(z)
    }

    /// Iterations needed to bring the projection error below `tol`
    /// (diameters shrink like `rho^n`).
    pub fn projection_depth(&self, tol: f64) -> usize {
        (tol.ln() / self.bounds.rho.ln()).ceil().max(1.0) as usize
    }

    /// Canonical projection `pi(i)`, within `tol` of the true limit.
    pub fn canonical_projection(&self, i: &TailedWord, tol: f64) -> Result<(f64, f64)> {
        self.canonical_projection_from(i, tol, (0.5, 0.5))
    }

    /// Projection from an explicit base point (the limit is base-independent;
    /// this exists for diagnostics).
    pub fn canonical_projection_from(
        &self,
        i: &TailedWord,
        tol: f64,
        base: (f64, f64),
    ) -> Result<(f64, f64)> {
        if tol <= 0.0 {
            return Err(Error::InvalidArg("tol must be positive".into()));
        }
        let n = self.projection_depth(tol);
        self.compose(&i.truncate(n), base)
    }

    /// Chain-rule derivative products along `w` at `point`: returns
    /// `(f_w', (g_w)'_y, (g_w)'_x)`. The empty word gives `(1, 1, 0)`.
    pub fn derivative_along(&self, w: &Word, point: (f64, f64)) -> Result<(f64, f64, f64)> {
        // Lower-triangular Jacobian [[a, 0], [c, d]] accumulated by
        // left-multiplying along the orbit of the word's suffixes.
        let mut a = 1.0f64;
        let mut c = 0.0f64;
        let mut d = 1.0f64;
        let mut z = self.check_inside(point, 0)?;
        for &s in w.symbols().iter().rev() {
            let m = self.map(s);
            let fp = m.fx_at(z.0);
            let gx = m.gx_at(z.0, z.1);
            let gy = m.gy_at(z.0, z.1);
            let (na, nc, nd) = (fp * a, gx * a + gy * c, gy * d);
            a = na;
            c = nc;
            d = nd;
            z = self.check_inside(m.apply(z.0, z.1), s as usize)?;
        }
        Ok((a, d, c))
    }

    /// Monte Carlo lower estimate of the bounded-distortion constant: the
    /// worst two-point ratio of `|f_w'|` and `|(g_w)'_y|` over sampled words
    /// of length up to `depth`.
    pub fn distortion_constant(&self, depth: usize, samples: usize, seed: u64) -> Result<f64> {
        if depth == 0 {
            return Err(Error::InvalidArg("depth must be >= 1".into()));
        }
        let mut rng = stream_rng(seed, 0);
        let mut worst = 1.0f64;
        for _ in 0..samples {
            let len = rng.gen_range(1..=depth);
            let symbols: Vec<u8> = (0..len)
                .map(|_| rng.gen_range(1..=self.maps.len() as u8))
                .collect();
            let w = Word::new(&symbols, self.maps.len())?;
            let p1 = (rng.gen::<f64>(), rng.gen::<f64>());
            let p2 = (rng.gen::<f64>(), rng.gen::<f64>());
            let (fp1, gy1, _) = self.derivative_along(&w, p1)?;
            let (fp2, gy2, _) = self.derivative_along(&w, p2)?;
            for r in [fp1.abs() / fp2.abs(), gy1.abs() / gy2.abs()] {
                if r.is_finite() && r > 0.0 {
                    worst = worst.max(r.max(1.0 / r));
                }
            }
        }
        Ok(worst)
    }

    /// Evaluates every inequality of `family` on the validation sample.
    pub fn validate(&self, family: Family) -> ValidationReport {
        validate_family(self, family)
    }
}

// ---------------------------------------------------------------------------
// Condition validation
// ---------------------------------------------------------------------------

/// Condition family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    G,
    A,
    B,
    T,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "G" => Ok(Family::G),
            "A" => Ok(Family::A),
            "B" => Ok(Family::B),
            "T" => Ok(Family::T),
            other => Err(Error::InvalidArg(format!("unknown family `{other}`"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::G => "G",
            Family::A => "A",
            Family::B => "B",
            Family::T => "T",
        })
    }
}

/// Failure evidence: the sampled point and value that broke an inequality.
#[derive(Debug, Clone, Copy)]
pub struct Witness {
    pub map: usize,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// One inequality of a family, with the observed range of its quantity.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Observed minimum of the checked quantity over the sample.
    pub min: f64,
    /// Observed maximum.
    pub max: f64,
    /// The bound the quantity is compared against.
    pub bound: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub family: Family,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.pass)
    }
}

enum Cmp {
    /// Quantity > bound with margin [`STRICT_MARGIN`] at every sample.
    StrictAbove,
    /// Quantity < bound with margin [`STRICT_MARGIN`].
    StrictBelow,
    /// Quantity >= bound − [`SIGN_TOLERANCE`].
    Above,
    /// Quantity <= bound + [`SIGN_TOLERANCE`].
    Below,
}

struct CheckAcc {
    name: String,
    cmp: Cmp,
    bound: f64,
    min: f64,
    max: f64,
    witness: Option<Witness>,
}

impl CheckAcc {
    fn new(name: &str, cmp: Cmp, bound: f64) -> Self {
        CheckAcc {
            name: name.to_string(),
            cmp,
            bound,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            witness: None,
        }
    }

    fn offer(&mut self, map: usize, x: f64, y: f64, value: f64) {
        self.min = self.min.min(value);
        self.max = self.max.max(value);
        let ok = match self.cmp {
            Cmp::StrictAbove => value > self.bound + STRICT_MARGIN,
            Cmp::StrictBelow => value < self.bound - STRICT_MARGIN,
            Cmp::Above => value >= self.bound - SIGN_TOLERANCE,
            Cmp::Below => value <= self.bound + SIGN_TOLERANCE,
        };
        if !ok && self.witness.is_none() {
            self.witness = Some(Witness { map, x, y, value });
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            pass: self.witness.is_none(),
            name: self.name,
            min: self.min,
            max: self.max,
            bound: self.bound,
            witness: self.witness,
        }
    }
}

fn validate_family(spec: &SystemSpec, family: Family) -> ValidationReport {
    let pts = scan_points(spec.grid_resolution(), RANDOM_SCAN_POINTS);
    let b = *spec.bounds();
    let containment_name = "containment: coordinate excess of F_i([0,1]^2)";

    let mut checks: Vec<CheckAcc> = match family {
        Family::G => vec![
            CheckAcc::new(containment_name, Cmp::Below, CONTAINMENT_TOLERANCE),
            CheckAcc::new("G2: |f'| above tau", Cmp::Above, b.tau),
            CheckAcc::new("G2: |g'_y| - |f'| positive (domination gap)", Cmp::StrictAbove, 0.0),
            CheckAcc::new("G2: |g'_y| below 1", Cmp::StrictBelow, 1.0),
        ],
        Family::A => vec![
            CheckAcc::new(containment_name, Cmp::Below, CONTAINMENT_TOLERANCE),
            CheckAcc::new("A1: f' positive", Cmp::StrictAbove, 0.0),
            CheckAcc::new("A1: g'_y - f' positive (domination gap)", Cmp::StrictAbove, 0.0),
            CheckAcc::new("A1: g'_y below 1/2", Cmp::StrictBelow, 0.5),
            CheckAcc::new("A2: g''_xy <= 0", Cmp::Below, 0.0),
            CheckAcc::new("A2: g'_x >= 0", Cmp::Above, 0.0),
            CheckAcc::new("A2: g''_yy >= 0", Cmp::Above, 0.0),
        ],
        Family::B => vec![
            CheckAcc::new(containment_name, Cmp::Below, CONTAINMENT_TOLERANCE),
            CheckAcc::new("B1: |f'| above tau", Cmp::Above, b.tau),
            CheckAcc::new("B1: |g'_y| - 4|f'| positive", Cmp::StrictAbove, 0.0),
            CheckAcc::new("B1: |g'_y| below 1/4", Cmp::StrictBelow, 0.25),
            CheckAcc::new("B2: |g''_xy|/|g'_y| <= 1/3", Cmp::Below, 1.0 / 3.0),
        ],
        Family::T => vec![
            CheckAcc::new(containment_name, Cmp::Below, CONTAINMENT_TOLERANCE),
            CheckAcc::new(
                "T1: max{|g'_x|, |g''_xy|, |g''_yy|} finite",
                Cmp::StrictBelow,
                f64::INFINITY,
            ),
            CheckAcc::new("T2: |f'| above tau*gamma", Cmp::StrictAbove, b.tau * b.gamma),
            CheckAcc::new("T2: gamma*|g'_y| - |f'| nonnegative", Cmp::Above, 0.0),
            CheckAcc::new("T2: |g'_y| within rho", Cmp::Below, b.rho),
        ],
    };

    // Global maxima feeding the product form of B2, with the argmax of the
    // first factor as the failure witness.
    let mut b2_max_gx_ratio: f64 = 0.0;
    let mut b2_max_gyy_ratio: f64 = 0.0;
    let mut b2_witness = Witness {
        map: 0,
        x: 0.0,
        y: 0.0,
        value: 0.0,
    };

    for (mi, m) in spec.maps().iter().enumerate() {
        let map_no = mi + 1;
        for &(x, y) in &pts {
            let (ix, iy) = m.apply(x, y);
            let excess = (ix.max(iy) - 1.0).max((-ix).max(-iy)).max(0.0);
            let fp = m.fx_at(x);
            let gy = m.gy_at(x, y);
            let gx = m.gx_at(x, y);
            let gxy = m.gxy_at(x, y);
            let gyy = m.gyy_at(x, y);
            let values: &[f64] = match family {
                Family::G => &[excess, fp.abs(), gy.abs() - fp.abs(), gy.abs()],
                Family::A => &[excess, fp, gy - fp, gy, gxy, gx, gyy],
                Family::B => {
                    let gx_ratio = gx.abs() / gy.abs();
                    if gx_ratio > b2_max_gx_ratio {
                        b2_witness = Witness {
                            map: map_no,
                            x,
                            y,
                            value: gx_ratio,
                        };
                    }
                    b2_max_gx_ratio = b2_max_gx_ratio.max(gx_ratio);
                    b2_max_gyy_ratio = b2_max_gyy_ratio.max(gyy.abs() / gy.abs());
                    &[
                        excess,
                        fp.abs(),
                        gy.abs() - 4.0 * fp.abs(),
                        gy.abs(),
                        gxy.abs() / gy.abs(),
                    ]
                }
                Family::T => &[
                    excess,
                    gx.abs().max(gxy.abs()).max(gyy.abs()),
                    fp.abs(),
                    b.gamma * gy.abs() - fp.abs(),
                    gy.abs(),
                ],
            };
            let vals = values.to_vec();
            for (acc, v) in checks.iter_mut().zip(vals) {
                acc.offer(map_no, x, y, v);
            }
        }
    }

    let mut results: Vec<CheckResult> = checks.into_iter().map(CheckAcc::finish).collect();

    if family == Family::B {
        let product = b2_max_gx_ratio * b2_max_gyy_ratio;
        let pass = product <= 1.0 / 3.0 + SIGN_TOLERANCE;
        results.push(CheckResult {
            name: "B2: (max |g'_x|/|g'_y|) * (max |g''_yy|/|g'_y|) <= 1/3".into(),
            pass,
            min: product,
            max: product,
            bound: 1.0 / 3.0,
            witness: (!pass).then_some(b2_witness),
        });
    }

    if family == Family::T {
        // T4/T6 are distortion-in-parameter hypotheses; check them
        // empirically by comparing log-derivatives of iterates before and
        // after a small translation move.
        for (name, which_t2) in [
            ("T6: log|f_w'| stability under t1 moves (per symbol per unit)", false),
            ("T4: log|(g_w)'_y| stability under t2 moves (per symbol per unit)", true),
        ] {
            let probe = parameter_distortion_coefficient(spec, which_t2, 1e-3);
            let coeff = probe.map(|(c, _)| c).unwrap_or(f64::NAN);
            let pass = coeff.is_finite() && coeff <= 1e3;
            results.push(CheckResult {
                name: name.into(),
                pass,
                min: coeff,
                max: coeff,
                bound: 1e3,
                witness: if pass { None } else { probe.map(|(_, w)| w) },
            });
        }
    }

    ValidationReport {
        family,
        pass: results.iter().all(|c| c.pass),
        checks: results,
    }
}

/// Derivative products along `w` without escape checks: iterates of moved
/// systems may leave the square by the size of the move, which is harmless
/// for comparing log-derivatives at matched points.
fn derivative_products_unchecked(
    maps: &[TriangularMap],
    w: &Word,
    point: (f64, f64),
) -> (f64, f64) {
    let mut fp = 1.0f64;
    let mut gy = 1.0f64;
    let mut z = point;
    for &s in w.symbols().iter().rev() {
        let m = &maps[s as usize - 1];
        fp *= m.fx_at(z.0);
        gy *= m.gy_at(z.0, z.1);
        z = m.apply(z.0, z.1);
    }
    (fp, gy)
}

/// Empirical distortion-in-parameter coefficient:
/// `max |log ratio| / (|w| * delta)` over sampled words and points, where the
/// ratio compares `|f_w'|` (or `|(g_w)'_y|`) before and after translating
/// every map by `delta`. Returns the coefficient with its worst sample;
/// `None` when the moved maps fail basic validation.
fn parameter_distortion_coefficient(
    spec: &SystemSpec,
    which_t2: bool,
    delta: f64,
) -> Option<(f64, Witness)> {
    let moved: Vec<TriangularMap> = spec
        .maps()
        .iter()
        .map(|m| {
            let (t1, t2) = if which_t2 {
                (m.t1, m.t2 + delta)
            } else {
                (m.t1 + delta, m.t2)
            };
            TriangularMap::new(m.f_src.clone(), m.g_src.clone(), t1, t2).ok()
        })
        .collect::<Option<Vec<_>>>()?;
    let mut rng = stream_rng(SCAN_SEED, 1);
    let mut worst: f64 = 0.0;
    let mut witness = Witness {
        map: 0,
        x: 0.0,
        y: 0.0,
        value: 0.0,
    };
    for _ in 0..50 {
        let len = rng.gen_range(1..=8usize);
        let symbols: Vec<u8> = (0..len)
            .map(|_| rng.gen_range(1..=spec.n_maps() as u8))
            .collect();
        let w = Word::new(&symbols, spec.n_maps()).ok()?;
        let p = (rng.gen::<f64>(), rng.gen::<f64>());
        let (fp0, gy0) = derivative_products_unchecked(spec.maps(), &w, p);
        let (fp1, gy1) = derivative_products_unchecked(&moved, &w, p);
        let log_ratio = if which_t2 {
            (gy1.abs() / gy0.abs()).ln().abs()
        } else {
            (fp1.abs() / fp0.abs()).ln().abs()
        };
        let coeff = log_ratio / (len as f64 * delta);
        if coeff > worst {
            worst = coeff;
            witness = Witness {
                map: symbols[0] as usize,
                x: p.0,
                y: p.1,
                value: coeff,
            };
        }
    }
    Some((worst, witness))
}
