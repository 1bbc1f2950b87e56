//! Iterate traces of composite gradient descent from random starts.
//!
//! For each `rho` one instance is drawn with `n = ceil(rho d log m)` and the
//! solver is started from `inits` random points. The optimization error is
//! measured against the final iterate of the same run.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use eiv_core::solver_gd::{self, GdConfig, GdStatus, SolverTrace};
use eiv_core::{build_surrogate, estimate_tau_b, gen_beta, rng, Factorization, InstanceSampler};
use rayon::prelude::*;
use serde::Serialize;

use crate::calib::{self, Scales};
use crate::config::{rescaled_to_n, ExperimentConfig};
use crate::error::{HarnessError, Result};

pub const TRACE_HEADER: &str = "t,log_opt_err,log_stat_err,rho,seed";
pub const RUNS_HEADER: &str = "rho,m,n,d,seed,iterations,status,oscillating,final_stat_err";

/// One random start.
#[derive(Debug, Clone)]
pub struct TraceRun {
    pub rho: f64,
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub trace: SolverTrace,
}

impl TraceRun {
    /// The run diverged or the objective kept rising near the end.
    pub fn unstable(&self) -> bool {
        self.trace.status == GdStatus::Diverged || self.trace.oscillating
    }

    pub fn final_stat_error(&self) -> f64 {
        self.trace.records.last().map_or(f64::NAN, |r| r.stat_error)
    }
}

fn status_name(s: GdStatus) -> &'static str {
    match s {
        GdStatus::Converged => "converged",
        GdStatus::MaxIterations => "max_iterations",
        GdStatus::Diverged => "diverged",
    }
}

pub fn trace_csv(runs: &[TraceRun]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in runs {
        for rec in &r.trace.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                rec.t,
                rec.opt_error.ln(),
                rec.stat_error.ln(),
                r.rho,
                r.seed
            );
        }
    }
    out
}

pub fn runs_csv(runs: &[TraceRun]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for r in runs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.rho,
            r.m,
            r.n,
            r.d,
            r.seed,
            r.trace.iterations_run,
            status_name(r.trace.status),
            r.trace.oscillating,
            r.final_stat_error()
        );
    }
    out
}

/// Traces for every `rho` in `cfg.trace`, using the first `m`, `tau_B`,
/// zeta choice and R multiplier of the sweep settings.
pub fn iterate_traces(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<TraceRun>> {
    cfg.validate()?;
    let tc = &cfg.trace;
    let m = cfg.dims.m.to_vec()[0];
    let d = cfg.dims.d.resolve(m);
    let tau_b = cfg.model.tau_b.to_vec()[0];
    let r_mult = cfg.estimator.r_multipliers.to_vec()[0];
    let beta_norm = cfg.signal.beta_length;
    let master = cfg.run.master_seed;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Other(format!("thread pool: {e}")))?;
    let a = Arc::new(cfg.a_spec(m)?);
    let beta = gen_beta(m, d, beta_norm, rng::derive_seed(master, "beta", &[m as u64, d as u64]))?;
    let radius = calib::radius(r_mult, beta_norm, d);
    let mut runs = Vec::new();
    for rho in tc.rho.to_vec() {
        let n = rescaled_to_n(rho, d, m);
        let b = Arc::new(cfg.b_spec(n, tau_b, rng::derive_seed(master, "b-graph", &[n as u64]))?);
        let scales = Scales::from_specs(&a, &b)?;
        let sampler = InstanceSampler::new(Arc::clone(&a), b, Factorization::Cholesky)?;
        let seed = rng::derive_seed(master, "trace-instance", &[rho.to_bits(), m as u64, n as u64, tau_b.to_bits()]);
        let inst = sampler.sample(&beta, d, cfg.signal.sigma_eps, cfg.signal.entry_dist, seed)?;
        let tau_hat = estimate_tau_b(inst.x.view(), a.trace());
        let pair = build_surrogate(inst.x.view(), inst.y.view(), tau_hat)?;
        drop(inst);
        let p = calib::penalties(&scales, cfg.estimator.omega_factor, tc.f, tau_hat, beta_norm, m, n);
        let zeta = tc.zeta.resolve(scales.lambda_max_a, scales.lambda_min_a);
        let results: Vec<Result<TraceRun>> = pool.install(|| {
            (0..tc.inits)
                .into_par_iter()
                .map(|k| {
                    let init_seed = rng::derive_seed(seed, "trace-init", &[k as u64]);
                    let mut gd = GdConfig::new(p.lasso_lambda, radius, zeta);
                    gd.max_iters = tc.max_iters;
                    gd.tol_rel_obj = tc.tol;
                    gd.record_trace = true;
                    gd.beta0 = Some(solver_gd::random_init(m, beta_norm, radius, init_seed));
                    let out = solver_gd::solve_with_status(&pair, &gd, Some(beta.view()))?;
                    Ok(TraceRun {
                        rho,
                        m,
                        n,
                        d,
                        seed: init_seed,
                        trace: out.trace,
                    })
                })
                .collect()
        });
        for r in results {
            runs.push(r?);
        }
    }
    Ok(runs)
}

/// Runs the traces and writes `trace.csv` and `trace_runs.csv` into `out_dir`.
pub fn run_iterate_trace(cfg: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<Vec<TraceRun>> {
    let runs = iterate_traces(cfg, workers)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("trace.csv"), trace_csv(&runs))?;
    std::fs::write(out_dir.join("trace_runs.csv"), runs_csv(&runs))?;
    Ok(runs)
}

/// Log-linear fit of the optimization error before it reaches the
/// numerical floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceFit {
    /// Iterations in the fitted window.
    pub window: usize,
    pub slope: f64,
    pub r_squared: f64,
    /// Statistical error at the end of the window.
    pub plateau_stat_error: f64,
    pub final_stat_error: f64,
}

/// Fits `log ||b^t - b_hat||` against `t` for `t` up to the first iterate
/// whose optimization error is below `floor` times the initial one.
pub fn fit_convergence(trace: &SolverTrace, floor: f64) -> Option<ConvergenceFit> {
    let recs = &trace.records;
    let first = recs.first()?.opt_error;
    if !(first > 0.0) {
        return None;
    }
    let end = recs
        .iter()
        .position(|r| r.opt_error <= floor * first)
        .unwrap_or(recs.len() - 1);
    let pts: Vec<(f64, f64)> = recs[..=end]
        .iter()
        .filter(|r| r.opt_error > 0.0)
        .map(|r| (r.t as f64, r.opt_error.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(ConvergenceFit {
        window: end,
        slope,
        r_squared,
        plateau_stat_error: recs[end].stat_error,
        final_stat_error: recs.last()?.stat_error,
    })
}
