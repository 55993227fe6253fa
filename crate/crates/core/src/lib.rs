//! Two-sample tests for equality of tail indices and scedasis functions in
//! bivariate, heteroscedastic extremes, with asymptotic and multiplier
//! bootstrap calibration.

pub mod bootstrap;
pub mod dgp;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod hypothesis;
pub mod io;
pub mod pairwise;
pub mod reference;
pub mod rng;
pub mod sample;

pub use error::{Error, Result};
pub use estimators::{
    delta1, delta2, delta3, estimate_hill_subsample, estimate_integrated_scedasis, estimate_quasi_tail_copula, hill,
    tail_dependence_diagnostic, HillEstimate, QuasiTailCopula, ScedasisEstimate,
};
pub use sample::{BivariateSample, StepFunction, TailConfig};
