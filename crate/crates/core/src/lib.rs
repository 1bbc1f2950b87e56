//! Sparse linear regression with additive, column-dependent measurement
//! error: instance generation, bias-corrected surrogates, the corrected Lasso
//! and the conic selector, calibration constants and regularity diagnostics.

pub mod constants;
pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod simulate;
pub mod solver_conic;
pub mod solver_gd;
pub mod surrogate;

pub use covariance::{CovarianceSpec, Extremal, Factorization};
pub use error::{EivError, Result};
pub use simulate::{gen_beta, gen_instance, EntryDist, InstanceSampler, ProblemInstance};
pub use surrogate::{build_surrogate, estimate_tau_b, SurrogatePair};
