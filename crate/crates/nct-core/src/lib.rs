//! Analysis toolkit for planar iterated function systems with triangular
//! derivative structure, `F_i(x, y) = (f_i(x), g_i(x, y))`.
//!
//! The crate covers the computational pipeline for such systems:
//!
//! * [`expr`] — parsed map definitions with exact first/second derivatives,
//! * [`symbolic`] — words over `{1..N}`, shifts, and Bernoulli measures,
//! * [`ifs`] — the system model, composition, projections, and condition
//!   validators for the supported map families,
//! * [`pressure`] — the singular value function, finite-level pressure, and
//!   its root,
//! * [`ergodic`] — entropy, Lyapunov exponents, and the Lyapunov dimension,
//! * [`foliation`] — the strong-stable tangent bundle, leaf integration, and
//!   non-linear projections,
//! * [`transversality`] — translation-parameter derivatives and numeric
//!   verification of the transversality bounds,
//! * [`geometry`] — attractor sampling, box-counting dimension, and
//!   image rendering.
//!
//! All randomized routines take explicit seeds and produce identical output
//! for a fixed seed regardless of worker count; see the module docs for the
//! reduction contracts.

pub mod error;
pub mod expr;
pub mod symbolic;
pub mod ifs;
pub mod pressure;
pub mod ergodic;
pub mod foliation;
pub mod transversality;
pub mod geometry;

pub(crate) mod rng;
pub(crate) mod sum;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Runs `f` over `items` (in parallel when the `parallel` feature is on) and
/// returns outputs in input order. Callers combine the outputs in that fixed
/// order, which keeps every reduction in this crate independent of the worker
/// count.
pub(crate) fn map_ordered<C, T, F>(items: Vec<C>, f: F) -> Vec<T>
where
    C: Send,
    T: Send,
    F: Fn(C) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}
