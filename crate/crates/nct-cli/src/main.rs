//! `nct` — command-line surface for the triangular-IFS toolkit.
//!
//! Exit codes: 0 success, 1 validation failure or runtime error, 2 usage
//! error.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use crate::rand_seed::RngLike;
use nct_core::ergodic;
use nct_core::foliation;
use nct_core::geometry::{self, GenerationMode};
use nct_core::ifs::{Family, SystemSpec};
use nct_core::pressure::{self, PressureOpts};
use nct_core::symbolic::{BernoulliWeights, TailedWord, Word, DEFAULT_ENUMERATION_CAP};
use nct_core::transversality;

#[derive(Parser)]
#[command(
    name = "nct",
    version,
    about = "Planar triangular IFS toolkit: pressure roots, Lyapunov dimension, strong-stable foliations, transversality diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (falls back to NCT_THREADS, then hardware count).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Fixed number of printed decimal digits (default: full precision).
    #[arg(long, global = true)]
    digits: Option<usize>,

    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpecArg {
    /// Preset name (affine-test, affine-mod, example-a, example-b) or a
    /// JSON config path.
    #[arg(long)]
    spec: String,
}

#[derive(Subcommand)]
enum Command {
    /// Check a condition family (G, A, B, or T) against a system.
    Validate {
        #[command(flatten)]
        spec: SpecArg,
        /// Condition family to check.
        #[arg(long)]
        family: String,
    },
    /// Finite-level pressure P_n(s).
    Pressure {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        /// Word-count cap for the sum.
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
    },
    /// Root of the depth-n pressure approximant.
    S0 {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
    },
    /// Entropy, Lyapunov exponents, and Lyapunov dimension of a Bernoulli
    /// measure.
    Lyapunov {
        #[command(flatten)]
        spec: SpecArg,
        /// Comma-separated weights (default: uniform).
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample the attractor and write a PPM image.
    Attractor {
        #[command(flatten)]
        spec: SpecArg,
        /// Sampling mode: full or chaos.
        #[arg(long, default_value = "chaos")]
        mode: String,
        /// Word depth for full mode.
        #[arg(long, default_value_t = 5)]
        depth: usize,
        /// Points for chaos mode.
        #[arg(long, default_value_t = 1_000_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image side length in pixels.
        #[arg(long, default_value_t = 1024)]
        size: usize,
    },
    /// Box-counting dimension estimate over dyadic scales.
    Boxdim {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, default_value = "chaos")]
        mode: String,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long, default_value_t = 1_000_000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale window as `min:max` grid exponents (boxes of side 2^-e).
        #[arg(long, default_value = "4:10")]
        scales: String,
    },
    /// Residual table for the foliation diagnostics (CSV).
    FoliationCheck {
        #[command(flatten)]
        spec: SpecArg,
        /// Random probes per diagnostic.
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Transversality verification report (CSV).
    Transversality {
        #[command(flatten)]
        spec: SpecArg,
        /// Family A or B.
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep one translation parameter and track a quantity (CSV).
    Sweep {
        #[command(flatten)]
        spec: SpecArg,
        /// Parameter path `<map>.t1` or `<map>.t2` (1-based map index).
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        min: f64,
        #[arg(long, allow_negative_numbers = true)]
        max: f64,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        /// Tracked quantity: s0, chi1, or diml.
        #[arg(long, default_value = "s0")]
        quantity: String,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 50_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
    },
}

struct Ctx {
    digits: Option<usize>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn num(&self, v: f64) -> String {
        match self.digits {
            Some(d) => format!("{v:.d$}", d = d),
            None => format!("{v}"),
        }
    }

    fn emit_text(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, text)
                .with_context(|| format!("writing {}", path.display()))?,
            None => print!("{text}"),
        }
        Ok(())
    }

    fn emit_bytes(&self, bytes: &[u8]) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, bytes)
                .with_context(|| format!("writing {}", path.display()))?,
            None => std::io::stdout().write_all(bytes)?,
        }
        Ok(())
    }
}

fn parse_scales(text: &str) -> Result<(u32, u32)> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| anyhow!("scales must be `min:max`, got `{text}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_param(text: &str) -> Result<(usize, bool)> {
    let (idx, slot) = text
        .split_once('.')
        .ok_or_else(|| anyhow!("param must be `<map>.t1` or `<map>.t2`, got `{text}`"))?;
    let map: usize = idx.trim().parse()?;
    let which_t2 = match slot.trim() {
        "t1" => false,
        "t2" => true,
        other => bail!("param slot must be t1 or t2, got `{other}`"),
    };
    Ok((map, which_t2))
}

fn parse_weights(text: Option<&str>, n: usize) -> Result<BernoulliWeights> {
    match text {
        None => Ok(BernoulliWeights::uniform(n)),
        Some(t) => {
            let ws: Vec<f64> = t
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(Into::into))
                .collect::<Result<_>>()?;
            Ok(BernoulliWeights::new(ws)?)
        }
    }
}

fn random_tailed_word(rng: &mut impl rand_seed::RngLike, n_maps: usize) -> TailedWord {
    let plen = rng.below(6);
    let tlen = 1 + rng.below(3);
    let prefix: Vec<u8> = (0..plen).map(|_| 1 + rng.below(n_maps) as u8).collect();
    let tail: Vec<u8> = (0..tlen).map(|_| 1 + rng.below(n_maps) as u8).collect();
    TailedWord::new(
        Word::new(&prefix, n_maps).unwrap(),
        Word::new(&tail, n_maps).unwrap(),
    )
    .unwrap()
}

/// Minimal deterministic generator for the CLI's own sampling (words and
/// probe points); core sampling uses its seeded streams internally.
mod rand_seed {
    pub trait RngLike {
        fn next_u64(&mut self) -> u64;
        fn unit(&mut self) -> f64 {
            (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
        }
        fn below(&mut self, n: usize) -> usize {
            (self.unit() * n as f64) as usize % n.max(1)
        }
    }

    /// splitmix64
    pub struct SplitMix(pub u64);

    impl RngLike for SplitMix {
        fn next_u64(&mut self) -> u64 {
            self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("NCT_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    // The pool may already exist when tests call run() repeatedly.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();

    let ctx = Ctx {
        digits: cli.digits,
        out: cli.out,
    };

    match cli.command {
        Command::Validate { spec, family } => {
            let system = SystemSpec::resolve(&spec.spec)?;
            let fam: Family = family.parse()?;
            let report = system.validate(fam);
            let mut text = String::new();
            for c in &report.checks {
                let verdict = if c.pass { "pass" } else { "FAIL" };
                writeln!(
                    text,
                    "{verdict}  {}  observed [{}, {}]  bound {}",
                    c.name,
                    ctx.num(c.min),
                    ctx.num(c.max),
                    ctx.num(c.bound)
                )?;
                if let Some(w) = c.witness {
                    writeln!(
                        text,
                        "      witness: map {} at ({}, {}) -> {}",
                        w.map,
                        ctx.num(w.x),
                        ctx.num(w.y),
                        ctx.num(w.value)
                    )?;
                }
            }
            writeln!(
                text,
                "family {}: {}",
                report.family,
                if report.pass { "PASS" } else { "FAIL" }
            )?;
            ctx.emit_text(&text)?;
            Ok(if report.pass { 0 } else { 1 })
        }

        Command::Pressure { spec, s, depth, cap } => {
            let system = SystemSpec::resolve(&spec.spec)?;
            let opts = PressureOpts {
                cap,
                ..Default::default()
            };
            let p = pressure::pressure_approx(&system, s, depth, &opts)?;
            ctx.emit_text(&format!("P_{}({}) = {}\n", depth, s, ctx.num(p.value)))?;
            Ok(0)
        }

        Command::S0 {
            spec,
            depth,
            tol,
            cap,
        } => {
            let system = SystemSpec::resolve(&spec.spec)?;
            let opts = PressureOpts {
                cap,
                ..Default::default()
            };
            let root = pressure::root_s0(&system, depth, tol, &opts)?;
            let c = system.distortion_constant(depth.min(8), 200, 0)?;
            let bias = pressure::s0_bias_bound(&system, depth, c);
            ctx.emit_text(&format!(
                "s0 ≈ {} (depth {}, bias <= {})\n",
                ctx.num(root.s0),
                depth,
                ctx.num(bias)
            ))?;
            Ok(0)
        }

        Command::Lyapunov {
            spec,
            weights,
            samples,
            seed,
        } => {
            let system = SystemSpec::resolve(&spec.spec)?;
            let p = parse_weights(weights.as_deref(), system.n_maps())?;
            let s = ergodic::summarize(&system, &p, samples, seed)?;
            let mut text = String::new();
            writeln!(text, "h      = {}", ctx.num(s.entropy))?;
            writeln!(
                text,
                "chi1   = {} ± {}",
                ctx.num(s.chi1),
                ctx.num(s.chi1_stderr)
            )?;
            writeln!(
                text,
                "chi2   = {} ± {}",
                ctx.num(s.chi2),
                ctx.num(s.chi2_stderr)
            )?;
            writeln!(text, "dim_L  = {}", ctx.num(s.dim_l))?;
            writeln!(text, "samples = {}, seed = {}", s.samples, s.seed)?;
            ctx.emit_text(&text)?;
            Ok(0)
        }

        Command::Attractor {
            spec,
            mode,
            depth,
            count,
            seed,
            size,
        } => {
            let system = SystemSpec::resolve(&spec.spec)?;
            let mode: GenerationMode = mode.parse()?;
            let cloud = geometry::sample_attractor(&system, depth, mode, count, seed)?;
            let img = geometry::render_ppm(&cloud, size, size)?;
            ctx.emit_bytes(&img)?;
            Ok(0)
        }

        Command::Boxdim {
            spec,
            mode,
            depth,
            count,
            seed,
            scales,
        } => {
            let system = SystemSpec::resolve(&spec.spec)?;
            let mode: GenerationMode = mode.parse()?;
            let (lo, hi) = parse_scales(&scales)?;
            let cloud = geometry::sample_attractor(&system, depth, mode, count, seed)?;
            let est = geometry::box_dimension_for(&system, &cloud, lo, hi)?;
            let mut text = String::from("e,boxes\n");
            for (e, c) in est.exponents.iter().zip(&est.counts) {
                writeln!(text, "{e},{c}")?;
            }
            writeln!(text, "# slope,{}", ctx.num(est.slope))?;
            writeln!(text, "# residual,{}", ctx.num(est.residual))?;
            if est.insufficient_resolution {
                writeln!(text, "# warning,cloud too sparse for the finest scale")?;
            }
            ctx.emit_text(&text)?;
            Ok(0)
        }

        Command::FoliationCheck {
            spec,
            samples,
            step,
            tol,
            seed,
        } => {
            let system = SystemSpec::resolve(&spec.spec)?;
            let n = system.n_maps();
            let mut rng = rand_seed::SplitMix(seed ^ 0xabcd_1234);
            let mut text = String::from("check,word,x,y,value,bound,pass\n");
            for _ in 0..samples {
                let i = random_tailed_word(&mut rng, n);
                let (x, y) = (rng.unit(), rng.unit());
                let r = foliation::check_bundle_invariance(&system, &i, x, y, tol)?;
                writeln!(
                    text,
                    "bundle-invariance,{},{},{},{},{},{}",
                    i.display(n),
                    ctx.num(x),
                    ctx.num(y),
                    ctx.num(r),
                    ctx.num(10.0 * tol),
                    r <= 10.0 * tol
                )?;
            }
            for _ in 0..samples {
                let i = random_tailed_word(&mut rng, n);
                let anchor = (rng.unit(), rng.unit());
                match foliation::check_leaf_invariance(&system, &i, anchor, step, tol) {
                    Ok(r) => writeln!(
                        text,
                        "leaf-invariance,{},{},{},{},{},{}",
                        i.display(n),
                        ctx.num(anchor.0),
                        ctx.num(anchor.1),
                        ctx.num(r.max_residual),
                        ctx.num(1e-5),
                        r.max_residual <= 1e-5
                    )?,
                    Err(e) => writeln!(
                        text,
                        "leaf-invariance,{},{},{},skipped:{e},,",
                        i.display(n),
                        ctx.num(anchor.0),
                        ctx.num(anchor.1)
                    )?,
                }
            }
            for _ in 0..samples {
                let i = random_tailed_word(&mut rng, n);
                let a0 = (rng.unit(), rng.unit());
                let a1 = (rng.unit(), rng.unit());
                match foliation::check_gronwall(&system, &i, a0, a1, step, tol) {
                    Ok(r) => writeln!(
                        text,
                        "gronwall-ratio,{},{},{},{},{},{}",
                        i.display(n),
                        ctx.num(a0.0),
                        ctx.num(a0.1),
                        ctx.num(r.ratio),
                        ctx.num(r.bound * (1.0 + 1e-3)),
                        r.pass
                    )?,
                    Err(e) => writeln!(
                        text,
                        "gronwall-ratio,{},{},{},skipped:{e},,",
                        i.display(n),
                        ctx.num(a0.0),
                        ctx.num(a0.1)
                    )?,
                }
            }
            ctx.emit_text(&text)?;
            Ok(0)
        }

        Command::Transversality {
            spec,
            family,
            samples,
            seed,
        } => {
            let system = SystemSpec::resolve(&spec.spec)?;
            let fam: Family = family.parse()?;
            let report = transversality::verify_transversality(&system, fam, samples, seed)?;
            let mut text = String::from("name,bound,worst sampled value,margin,pass\n");
            for row in &report.rows {
                writeln!(
                    text,
                    "{},{},{},{},{}",
                    row.name,
                    ctx.num(row.bound),
                    ctx.num(row.worst),
                    ctx.num(row.margin),
                    row.pass
                )?;
            }
            writeln!(text, "# sup_uy,{}", ctx.num(report.sup_uy))?;
            writeln!(text, "# delta,{}", ctx.num(report.delta))?;
            ctx.emit_text(&text)?;
            Ok(if report.pass { 0 } else { 1 })
        }

        Command::Sweep {
            spec,
            param,
            min,
            max,
            steps,
            quantity,
            depth,
            tol,
            samples,
            seed,
            cap,
        } => {
            if steps < 2 || !(max > min) {
                bail!("usage: sweep needs steps >= 2 and max > min");
            }
            let system = SystemSpec::resolve(&spec.spec)?;
            let (map_index, which_t2) = parse_param(&param)?;
            let quantity = quantity.to_ascii_lowercase();
            if !matches!(quantity.as_str(), "s0" | "chi1" | "diml") {
                bail!("usage: quantity must be s0, chi1, or diml");
            }
            let opts = PressureOpts {
                cap,
                ..Default::default()
            };
            let uniform = BernoulliWeights::uniform(system.n_maps());
            let mut text = String::from("param,value,status\n");
            let mut values: Vec<Option<f64>> = Vec::with_capacity(steps);
            for k in 0..steps {
                let t = min + (max - min) * k as f64 / (steps - 1) as f64;
                let moved = match system.with_translation(map_index, which_t2, t) {
                    Ok(s) => s,
                    Err(e) => {
                        writeln!(text, "{},,skipped:{e}", ctx.num(t))?;
                        values.push(None);
                        continue;
                    }
                };
                let g = moved.validate(Family::G);
                if !g.pass {
                    let name = &g.first_failure().unwrap().name;
                    writeln!(text, "{},,skipped:family G fails ({name})", ctx.num(t))?;
                    values.push(None);
                    continue;
                }
                let value = match quantity.as_str() {
                    "s0" => pressure::root_s0(&moved, depth, tol, &opts)?.s0,
                    "chi1" => {
                        ergodic::lyapunov_exponents(&moved, &uniform, samples, moved.projection_depth(1e-8), seed)?
                            .0
                    }
                    _ => ergodic::summarize(&moved, &uniform, samples, seed)?.dim_l,
                };
                writeln!(text, "{},{},ok", ctx.num(t), ctx.num(value))?;
                values.push(Some(value));
            }
            let dt = (max - min) / (steps - 1) as f64;
            let mut max_jump = 0.0f64;
            for w in values.windows(2) {
                if let (Some(a), Some(b)) = (w[0], w[1]) {
                    max_jump = max_jump.max((b - a).abs());
                }
            }
            writeln!(text, "# max_adjacent_jump,{}", ctx.num(max_jump))?;
            writeln!(text, "# empirical_lipschitz,{}", ctx.num(max_jump / dt))?;
            ctx.emit_text(&text)?;
            Ok(0)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
