//! Exact-enumeration laboratory for free-energy fluctuations in the
//! Sherrington-Kirkpatrick model.
//!
//! The SK Hamiltonian `H(s) = n^{-1/2} sum_{i,j} g_ij s_i s_j` with i.i.d.
//! standard Gaussian `g` is enumerated exactly for small `n`, both as a single
//! system ([`system`]) and as the interpolated two-replica system that couples
//! a shared disorder with two private ones ([`coupled`]). [`estimators`]
//! averages these over independent disorder draws, and [`bounds`] holds the
//! closed-form reference values the averages are checked against.

pub mod bounds;
pub mod coupled;
pub mod disorder;
mod error;
pub mod estimators;
pub mod stats;
pub mod system;

pub use bounds::{beta_critical, BoundReport, Regime};
pub use coupled::{coupled_enumerate, factorized_r2, CoupledDisorder, CoupledSummary, InterpolationPoint};
pub use disorder::{
    effective_couplings, sample_disorder, DisorderRealization, EffectiveCouplings, SeedSpec, StreamTag,
};
pub use error::{Error, Result};
pub use estimators::{DisorderAverage, McPlan, Parallelism, QuadratureRule};
pub use system::{gibbs_enumerate, hamiltonian, log_partition, overlap, GibbsSummary, SpinConfiguration};
