//! Entropy, Lyapunov exponents, and the Lyapunov dimension for Bernoulli
//! measures.
//!
//! Exponents are Monte Carlo averages over independently sampled words
//! (unbiased and trivially parallel, with a reportable standard error).
//! Sampling splits into fixed-size chunks; chunk `c` draws from ChaCha8
//! stream `c` of the caller's seed and totals reduce in chunk order, so the
//! result is a function of the seed alone, not of the worker count.

use crate::ifs::SystemSpec;
use crate::rng::stream_rng;
use crate::sum::Kahan;
use crate::symbolic::BernoulliWeights;
use crate::{map_ordered, Error, Result};
use rand::Rng;

/// Samples per deterministic chunk.
const CHUNK: usize = 4096;

/// Entropy, exponents, and dimension of one Bernoulli measure on one system.
#[derive(Debug, Clone, Copy)]
pub struct ErgodicSummary {
    pub entropy: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub chi1_stderr: f64,
    pub chi2_stderr: f64,
    pub dim_l: f64,
    pub samples: usize,
    pub seed: u64,
}

/// `-Σ p_i log p_i` in nats, with `0 log 0 = 0`.
pub fn entropy(p: &BernoulliWeights) -> f64 {
    -p.weights()
        .iter()
        .map(|&w| if w > 0.0 { w * w.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Draws a 1-based symbol from the weights by inverse transform.
#[inline]
fn draw_symbol(p: &BernoulliWeights, rng: &mut impl Rng) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &w) in p.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            return (k + 1) as u8;
        }
    }
    p.len() as u8
}

/// Monte Carlo estimates of the two Lyapunov exponents and their standard
/// errors: averages of `-log |(g_{i_1})'_y(pi(σi))|` and
/// `-log |f_{i_1}'(pi^1(σi))|` over `samples` i.i.d. words, with each
/// projection evaluated to depth `depth`.
pub fn lyapunov_exponents(
    spec: &SystemSpec,
    p: &BernoulliWeights,
    samples: usize,
    depth: usize,
    seed: u64,
) -> Result<(f64, f64, (f64, f64))> {
    if samples == 0 {
        return Err(Error::InvalidArg("samples must be >= 1".into()));
    }
    if p.len() != spec.n_maps() {
        return Err(Error::InvalidArg(format!(
            "weights have {} entries for {} maps",
            p.len(),
            spec.n_maps()
        )));
    }
    let chunks: Vec<(u64, usize)> = (0..samples.div_ceil(CHUNK))
        .map(|c| (c as u64, CHUNK.min(samples - c * CHUNK)))
        .collect();
    // Per chunk: Kahan sums of both integrands and their squares.
    let partials = map_ordered(chunks, |(stream, count)| {
        let mut rng = stream_rng(seed, stream);
        let mut acc = [Kahan::new(); 4];
        for _ in 0..count {
            let first = draw_symbol(p, &mut rng);
            // Forward orbit approximating pi(σi): depth i.i.d. symbols
            // applied to the base point, innermost first.
            let tail: Vec<u8> = (0..depth).map(|_| draw_symbol(p, &mut rng)).collect();
            let mut z = (0.5, 0.5);
            for &s in tail.iter().rev() {
                z = spec.map(s).apply(z.0, z.1);
            }
            let m = spec.map(first);
            let x1 = -m.gy_at(z.0, z.1).abs().ln();
            let x2 = -m.fx_at(z.0).abs().ln();
            acc[0].add(x1);
            acc[1].add(x1 * x1);
            acc[2].add(x2);
            acc[3].add(x2 * x2);
        }
        acc
    });
    let mut total = [Kahan::new(); 4];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    let n = samples as f64;
    let stats = |sum: f64, sum_sq: f64| {
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
        (mean, (var / n).sqrt())
    };
    let (chi1, se1) = stats(total[0].value(), total[1].value());
    let (chi2, se2) = stats(total[2].value(), total[3].value());
    Ok((chi1, chi2, (se1, se2)))
}

/// `min{2, h/chi1, 1 + (h - chi1)/chi2}`.
pub fn lyapunov_dimension(h: f64, chi1: f64, chi2: f64) -> Result<f64> {
    if !(chi1 > 0.0 && chi2 > 0.0) {
        return Err(Error::InvalidArg(
            "Lyapunov exponents must be positive".into(),
        ));
    }
    Ok((h / chi1).min(1.0 + (h - chi1) / chi2).min(2.0))
}

/// Full summary with the projection depth chosen so `rho^depth < 1e-8`.
pub fn summarize(
    spec: &SystemSpec,
    p: &BernoulliWeights,
    samples: usize,
    seed: u64,
) -> Result<ErgodicSummary> {
    let depth = spec.projection_depth(1e-8);
    let h = entropy(p);
    let (chi1, chi2, (se1, se2)) = lyapunov_exponents(spec, p, samples, depth, seed)?;
    Ok(ErgodicSummary {
        entropy: h,
        chi1,
        chi2,
        chi1_stderr: se1,
        chi2_stderr: se2,
        dim_l: lyapunov_dimension(h, chi1, chi2)?,
        samples,
        seed,
    })
}
