//! Attractor point clouds, box-counting dimension estimation, and image
//! rendering.

use crate::ifs::SystemSpec;
use crate::rng::stream_rng;
use crate::symbolic::check_cap;
use crate::{map_ordered, Error, Result};
use rand::Rng;
use std::collections::HashSet;

/// Chaos-game samples per deterministic chunk.
const CHAOS_CHUNK: usize = 65_536;
/// Steps discarded before a chaos orbit starts emitting (the initial
/// transient decays like `rho^n`; 100 covers every `rho <= 0.5` system).
const BURN_IN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationMode {
    /// All images `F_w(base)` over words of the given depth.
    Full,
    /// Random orbit of seeded map compositions after burn-in.
    Chaos,
}

impl std::str::FromStr for GenerationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(GenerationMode::Full),
            "chaos" => Ok(GenerationMode::Chaos),
            other => Err(Error::InvalidArg(format!("unknown mode `{other}`"))),
        }
    }
}

/// Finite sample of the attractor.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<(f64, f64)>,
    mode: GenerationMode,
    /// Word depth for full mode; burn-in-excluded orbit length for chaos.
    depth: usize,
}

impl PointCloud {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mode(&self) -> GenerationMode {
        self.mode
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Test/diagnostic constructor.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, y) in &points {
            if !(-1e-9..=1.0 + 1e-9).contains(&x) || !(-1e-9..=1.0 + 1e-9).contains(&y) {
                return Err(Error::InvalidArg(format!(
                    "point ({x}, {y}) outside the unit square"
                )));
            }
        }
        Ok(PointCloud {
            points,
            mode: GenerationMode::Full,
            depth: 0,
        })
    }
}

/// Samples the attractor. Full mode enumerates `{F_w(base) : |w| = depth}`
/// (subject to the word cap); chaos mode emits `count` points of seeded
/// random orbits. Chaos chunks draw from per-chunk streams of the seed and
/// concatenate in chunk order, so output depends only on the seed.
pub fn sample_attractor(
    spec: &SystemSpec,
    depth: usize,
    mode: GenerationMode,
    count: usize,
    seed: u64,
) -> Result<PointCloud> {
    let base = (0.5, 0.5);
    match mode {
        GenerationMode::Full => {
            check_cap(spec.n_maps(), depth, crate::symbolic::DEFAULT_ENUMERATION_CAP)?;
            let mut points = Vec::with_capacity((spec.n_maps() as f64).powi(depth as i32) as usize);
            fn rec(
                spec: &SystemSpec,
                levels: usize,
                z: (f64, f64),
                out: &mut Vec<(f64, f64)>,
            ) {
                if levels == 0 {
                    out.push(z);
                    return;
                }
                for m in spec.maps() {
                    rec(spec, levels - 1, m.apply(z.0, z.1), out);
                }
            }
            rec(spec, depth, base, &mut points);
            Ok(PointCloud {
                points,
                mode,
                depth,
            })
        }
        GenerationMode::Chaos => {
            if count == 0 {
                return Err(Error::InvalidArg("count must be >= 1".into()));
            }
            let n_maps = spec.n_maps() as u8;
            let chunks: Vec<(u64, usize)> = (0..count.div_ceil(CHAOS_CHUNK))
                .map(|c| (c as u64, CHAOS_CHUNK.min(count - c * CHAOS_CHUNK)))
                .collect();
            let parts = map_ordered(chunks, |(stream, n)| {
                let mut rng = stream_rng(seed, stream);
                let mut z = base;
                for _ in 0..BURN_IN {
                    let s = rng.gen_range(1..=n_maps);
                    z = spec.map(s).apply(z.0, z.1);
                }
                let mut pts = Vec::with_capacity(n);
                for _ in 0..n {
                    let s = rng.gen_range(1..=n_maps);
                    z = spec.map(s).apply(z.0, z.1);
                    pts.push(z);
                }
                pts
            });
            let mut points = Vec::with_capacity(count);
            for p in parts {
                points.extend(p);
            }
            Ok(PointCloud {
                points,
                mode,
                depth: count,
            })
        }
    }
}

/// Box-counting fit over dyadic scales.
#[derive(Debug, Clone)]
pub struct BoxDimEstimate {
    /// Grid exponents used: boxes have side `2^-e`.
    pub exponents: Vec<u32>,
    /// Occupied-box counts per exponent.
    pub counts: Vec<usize>,
    /// Least-squares slope of `log N(e)` against `e log 2`, clamped to
    /// `[0, 2]`.
    pub slope: f64,
    /// RMS residual of the linear fit (in log-count units).
    pub residual: f64,
    /// The cloud is too sparse to resolve the finest requested scale.
    pub insufficient_resolution: bool,
}

/// Counts occupied half-open dyadic boxes at scales `2^-min_exp` down to
/// `2^-max_exp` and fits the log-counts line.
pub fn box_dimension(cloud: &PointCloud, min_exp: u32, max_exp: u32) -> Result<BoxDimEstimate> {
    if !(2..=12).contains(&min_exp) || !(2..=12).contains(&max_exp) || min_exp >= max_exp {
        return Err(Error::InvalidArg(
            "need 2 <= min_exp < max_exp <= 12".into(),
        ));
    }
    if cloud.is_empty() {
        return Err(Error::InvalidArg("cannot fit an empty cloud".into()));
    }
    let exponents: Vec<u32> = (min_exp..=max_exp).collect();
    let mut counts = Vec::with_capacity(exponents.len());
    let mut boxes: HashSet<u32> = HashSet::new();
    for &e in &exponents {
        boxes.clear();
        let scale = (1u32 << e) as f64;
        let last = (1u32 << e) - 1;
        for &(x, y) in cloud.points() {
            let ix = ((x * scale) as u32).min(last);
            let iy = ((y * scale) as u32).min(last);
            boxes.insert(ix << 12 | iy);
        }
        counts.push(boxes.len());
    }

    let ts: Vec<f64> = exponents.iter().map(|&e| e as f64 * 2f64.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let cov: f64 = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| (t - t_mean) * (y - y_mean))
        .sum();
    let var: f64 = ts.iter().map(|t| (t - t_mean) * (t - t_mean)).sum();
    let slope_raw = cov / var;
    let intercept = y_mean - slope_raw * t_mean;
    let residual = (ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| {
            let r = y - (intercept + slope_raw * t);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();

    // Resolution heuristic: full clouds resolve scale 2^-e once
    // depth * log(1/rho-ish) covers e log 2; chaos clouds need enough points
    // to populate the finest grid.
    let insufficient = match cloud.mode() {
        GenerationMode::Full => {
            // Conservative contraction estimate: diameters shrink at least
            // like 2^-1 per level is not guaranteed, so compare against the
            // count of points instead when depth is unknown.
            (cloud.depth() as f64) * 2f64.ln() < max_exp as f64 * 2f64.ln()
                && (cloud.len() as f64) < 4f64.powi(max_exp as i32) * 0.01
        }
        GenerationMode::Chaos => (cloud.len() as f64) < 4f64.powi(max_exp as i32) * 0.01,
    };

    Ok(BoxDimEstimate {
        exponents,
        counts,
        slope: slope_raw.clamp(0.0, 2.0),
        residual,
        insufficient_resolution: insufficient,
    })
}

/// Variant of [`box_dimension`] that also knows the system's contraction
/// rate, for the documented density warning `depth log(1/rho) >= e log 2`.
pub fn box_dimension_for(
    spec: &SystemSpec,
    cloud: &PointCloud,
    min_exp: u32,
    max_exp: u32,
) -> Result<BoxDimEstimate> {
    let mut est = box_dimension(cloud, min_exp, max_exp)?;
    if cloud.mode() == GenerationMode::Full {
        let rho = spec.bounds().rho;
        est.insufficient_resolution =
            (cloud.depth() as f64) * -(rho.ln()) < max_exp as f64 * 2f64.ln();
    }
    Ok(est)
}

/// Renders the cloud to binary PPM (P6, 8-bit): white background, black
/// pixels at occupied cells, y flipped so the origin is bottom-left.
pub fn render_ppm(cloud: &PointCloud, width: usize, height: usize) -> Result<Vec<u8>> {
    if width < 16 || height < 16 {
        return Err(Error::InvalidArg("width and height must be >= 16".into()));
    }
    let mut occupied = vec![false; width * height];
    for &(x, y) in cloud.points() {
        let px = ((x * width as f64) as usize).min(width - 1);
        let py = ((y * height as f64) as usize).min(height - 1);
        occupied[(height - 1 - py) * width + px] = true;
    }
    let mut out = Vec::with_capacity(width * height * 3 + 32);
    out.extend_from_slice(format!("P6\n{width} {height}\n255\n").as_bytes());
    for cell in occupied {
        let v = if cell { 0u8 } else { 255u8 };
        out.extend_from_slice(&[v, v, v]);
    }
    Ok(out)
}

/// Writes the PPM bytes to a file.
pub fn write_ppm(cloud: &PointCloud, width: usize, height: usize, path: &str) -> Result<()> {
    let bytes = render_ppm(cloud, width, height)?;
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_string(),
        source,
    })
}
