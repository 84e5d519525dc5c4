//! Mixed norms and the estimate-verification harness.
//!
//! Every check returns a [`Report`] whose items carry both sides of the
//! inequality and their ratio, so quadrature and sampling error stay visible.

mod exponents;
mod moments;
mod norms;
mod potential;
mod report;
mod response;
mod stats;
mod transport;

use thiserror::Error;

pub use exponents::{
    gamma_stirling_checks, series_convergence_probe, series_terms, stirling_ratio, strichartz_exponent_check, SeriesTerms,
    StrichartzTuple, ROOT_LIMIT_TOL, ROOT_TEST_DELTA, STRICHARTZ_TOL,
};
pub use moments::{memory_integral, verify_moment_bound, verify_sublinear_closure};
pub use norms::{exponent, mixed_norm, MixedNormSpec, NormOrder};
pub use potential::{
    bessel_log_bound_table, elliptic_constant_closed_form, verify_elliptic_sup, LOG_EXPANSION_CONSTANT, RESIDUAL_TOL,
    STATED_EXPANSION_CONSTANT,
};
pub use report::{CheckItem, Report, Verdict};
pub use response::{verify_excitation_adaptation, EXCITABILITY_GAIN, RETURN_TOL};
pub use stats::{chi_square_directions, kolmogorov_sf, ks_exponential, verify_tumble_statistics, TestResult};
pub use transport::{verify_dispersion, verify_symmetrization, DISPERSION_TOL, MONOTONE_TOL};

use crate::diagnostics::DiagnosticsError;
use crate::fields::FieldError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("check refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
