//! Grenander estimation under misspecification.
//!
//! - [`lcm`]: least concave majorants of knot sequences, the `gren` operator,
//!   restricted majorants and the switching argmax.
//! - [`density`]: piecewise-polynomial densities `f0` with exact CDFs,
//!   quantiles and seeded sampling.
//! - [`projection`]: the KL projection `f̂0 = gren(F0)` and the split of the
//!   support into misspecified / well-specified and flat / curved parts.
//! - [`grenander`]: the Grenander MLE `f̂n` and its plug-in functionals.
//! - [`limit`]: samplers and variances for the `sqrt(n)` limit laws.
//! - [`experiments`]: seeded Monte Carlo replication, QQ/KS comparison and
//!   tail-bound audits.
//! - [`cli`]: the `grenander-kl` command-line front end.

pub mod cli;
pub mod density;
pub mod error;
pub mod experiments;
pub mod grenander;
pub mod integrand;
pub mod lcm;
pub mod limit;
pub mod projection;
pub mod quad;
pub mod rng;

pub use density::{functional_mean, PiecewisePolyDensity, Polynomial, Segment};
pub use error::{Error, Result};
pub use grenander::{ecdf_gap, entropy, fit, linear_functional, GrenanderFit};
pub use integrand::{Integrand, Preset};
pub use lcm::{gren, lcm_of_knots, restricted_lcm, switching_argmax, ConcaveMajorant, KnotSequence, StepFunction};
pub use projection::{
    decompose, decompose_regions, gbar, kl_projection, FlatBlock, KlProjection, RegionDecomposition, TouchKind,
};
pub use rng::SeedStream;
