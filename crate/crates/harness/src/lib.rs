//! Experiment runner for errors-in-variables sparse regression: TOML
//! configs, Monte-Carlo sweeps over `(tau_B, m, n)` and iterate traces.

pub mod calib;
pub mod config;
pub mod error;
pub mod sweep;
pub mod trace;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use sweep::{run_sweep, ResultRow};
pub use trace::{run_iterate_trace, TraceRun};

/// Worker count from `EIV_THREADS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("EIV_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
