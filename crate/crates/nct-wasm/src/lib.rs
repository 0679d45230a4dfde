//! Browser demo: attractor rendering, strong-stable leaf overlays, and the
//! pressure curve with its root, exposed through wasm-bindgen over a single
//! static page.
//!
//! The plotting helpers are plain Rust (tested on the host); the wasm
//! bindings are thin wrappers that turn errors into JS strings.

use nct_core::foliation;
use nct_core::geometry::{self, GenerationMode};
use nct_core::ifs::SystemSpec;
use nct_core::pressure::{self, PressureOpts};
use nct_core::symbolic::TailedWord;
use nct_core::Result;

/// RGBA image of an attractor sample: white background, dark points.
pub fn attractor_rgba(
    source: &str,
    mode: &str,
    depth: usize,
    count: usize,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<Vec<u8>> {
    let spec = SystemSpec::resolve(source)?;
    let mode: GenerationMode = mode.parse()?;
    let cloud = geometry::sample_attractor(&spec, depth, mode, count, seed)?;
    let mut pixels = vec![255u8; width * height * 4];
    for &(x, y) in cloud.points() {
        let px = ((x * width as f64) as usize).min(width - 1);
        let py = ((y * height as f64) as usize).min(height - 1);
        let off = ((height - 1 - py) * width + px) * 4;
        pixels[off] = 24;
        pixels[off + 1] = 24;
        pixels[off + 2] = 72;
    }
    Ok(pixels)
}

/// Strong-stable leaf through `anchor` for `word`, as interleaved
/// `[x0, y0, x1, y1, ...]` samples over the solvable domain.
pub fn leaf_polyline(
    source: &str,
    word: &str,
    anchor_x: f64,
    anchor_y: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let spec = SystemSpec::resolve(source)?;
    let i = TailedWord::parse(word, spec.n_maps())?;
    let leaf = foliation::leaf_solve_clipped(&spec, &i, (anchor_x, anchor_y), 0.0, 1.0, step, 1e-8)?;
    let mut out = Vec::new();
    for (x, y) in leaf.samples() {
        out.push(x);
        out.push(y);
    }
    Ok(out)
}

/// Slope of the strong-stable bundle at one point.
pub fn bundle_slope(source: &str, word: &str, x: f64, y: f64) -> Result<f64> {
    let spec = SystemSpec::resolve(source)?;
    let i = TailedWord::parse(word, spec.n_maps())?;
    foliation::bundle_u(&spec, &i, x, y, 1e-10)
}

/// Sampled pressure curve `[s_0, P(s_0), s_1, P(s_1), ...]` on `[0, s_max]`.
pub fn pressure_curve(source: &str, depth: usize, points: usize, s_max: f64) -> Result<Vec<f64>> {
    let spec = SystemSpec::resolve(source)?;
    let opts = PressureOpts::default();
    let mut out = Vec::with_capacity(2 * points);
    for k in 0..points {
        let s = s_max * k as f64 / (points - 1).max(1) as f64;
        let p = pressure::pressure_approx(&spec, s, depth, &opts)?;
        out.push(s);
        out.push(p.value);
    }
    Ok(out)
}

/// Root of the depth-`depth` pressure approximant.
pub fn pressure_root(source: &str, depth: usize, tol: f64) -> Result<f64> {
    let spec = SystemSpec::resolve(source)?;
    Ok(pressure::root_s0(&spec, depth, tol, &PressureOpts::default())?.s0)
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    fn js<T>(r: nct_core::Result<T>) -> Result<T, JsValue> {
        r.map_err(|e| JsValue::from_str(&e.to_string()))
    }

    /// RGBA pixel buffer for an attractor sample (draw via ImageData).
    #[wasm_bindgen]
    pub fn render_attractor(
        source: &str,
        mode: &str,
        depth: usize,
        count: usize,
        seed: u64,
        width: usize,
        height: usize,
    ) -> Result<Vec<u8>, JsValue> {
        js(super::attractor_rgba(
            source, mode, depth, count, seed, width, height,
        ))
    }

    /// Leaf samples `[x0, y0, x1, y1, ...]` through the given anchor.
    #[wasm_bindgen]
    pub fn leaf_polyline(
        source: &str,
        word: &str,
        anchor_x: f64,
        anchor_y: f64,
        step: f64,
    ) -> Result<Vec<f64>, JsValue> {
        js(super::leaf_polyline(source, word, anchor_x, anchor_y, step))
    }

    /// Bundle slope at a point.
    #[wasm_bindgen]
    pub fn bundle_slope(source: &str, word: &str, x: f64, y: f64) -> Result<f64, JsValue> {
        js(super::bundle_slope(source, word, x, y))
    }

    /// Pressure samples `[s, P_n(s), ...]` over `[0, s_max]`.
    #[wasm_bindgen]
    pub fn pressure_curve(
        source: &str,
        depth: usize,
        points: usize,
        s_max: f64,
    ) -> Result<Vec<f64>, JsValue> {
        js(super::pressure_curve(source, depth, points, s_max))
    }

    /// Root of the pressure approximant.
    #[wasm_bindgen]
    pub fn pressure_root(source: &str, depth: usize, tol: f64) -> Result<f64, JsValue> {
        js(super::pressure_root(source, depth, tol))
    }
}
