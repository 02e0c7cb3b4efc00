//! Exact analysis of the Derrida–Retaux recursion with a random number of terms,
//!
//! ```text
//! X_{n+1} = (X_n^(1) + ... + X_n^(N) - a)^+
//! ```
//!
//! with independent copies `X_n^(j)`, an independent number of terms `N >= 1`
//! and an integer tax `a >= 1`.
//!
//! The crate evolves the exact law of `X_n`, brackets the free energy
//! `Q = lim E X_n / (EN)^n` between two monotone sequences, classifies a model
//! with the sufficient criteria on `D_0(s, m) = (m - 1) s F_0'(s) - a F_0(s)`,
//! and exposes the intermediate inequalities as runnable checks. A seeded
//! population Monte Carlo provides an independent stochastic cross-check.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

// negated comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod error;
pub mod evolution;
pub mod model;
pub mod montecarlo;
pub mod offspring;
pub mod pmf;
pub mod random;
pub mod scalar;
pub mod scan;

pub use error::{CheckError, DistError, EvolveError, ModelError, ScanError, SimError};
pub use scalar::Scalar;

pub type FinitePmf = pmf::FinitePmf<f64>;
pub type PgfPoint = pmf::PgfPoint<f64>;
pub type TruncatedGeometric = pmf::TruncatedGeometric<f64>;
pub type OffspringLaw = offspring::OffspringLaw<f64>;
pub type ModelSpec = model::ModelSpec<f64>;
pub type EvolveOptions = evolution::EvolveOptions<f64>;
pub type EvolutionTrace = evolution::EvolutionTrace<f64>;
pub type TraceRow = evolution::TraceRow<f64>;
pub type PhaseVerdict = criteria::PhaseVerdict<f64>;
pub type Family = scan::Family<f64>;
pub type BoundaryReport = scan::BoundaryReport<f64>;
