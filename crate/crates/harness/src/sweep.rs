//! Monte-Carlo parameter sweeps.
//!
//! Every `(tau_B, m, n)` cell runs `trials` independent instances. The seed of
//! an instance is a hash of the master seed, the cell parameters and the trial
//! index, so results do not depend on scheduling or on which other cells are
//! in the sweep.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use eiv_core::linalg::{norm_l1, norm_l2};
use eiv_core::solver_conic::{ConicConfig, ConicWorkspace};
use eiv_core::solver_gd::{self, GdConfig, GdStatus};
use eiv_core::{build_surrogate, estimate_tau_b, gen_beta, rng, CovarianceSpec, Factorization, InstanceSampler};
use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use crate::calib::{self, Scales};
use crate::config::{AFamily, BFamily, ExperimentConfig};
use crate::error::{HarnessError, Result};

pub const SWEEP_HEADER: &str = "estimator,a_family,rho_A,b_family,rho_Bstar,tau_B,m,n,d,rescaled_n,f,zeta_mult,R_mult,\
trials,failures,nonconverged,rel_l1_error,rel_l1_stderr,rel_l2_error,rel_l2_stderr";

pub const TIMING_HEADER: &str = "tau_B,m,n,d,trials,runtime_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    LassoGd,
    Conic,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::LassoGd => "lasso_gd",
            Estimator::Conic => "conic",
        }
    }
}

/// One aggregated line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub estimator: Estimator,
    pub a_family: AFamily,
    pub rho_a: Option<f64>,
    pub b_family: BFamily,
    pub rho_bstar: Option<f64>,
    pub tau_b: f64,
    pub m: usize,
    pub n: usize,
    pub d: usize,
    /// `n / (d log m)`.
    pub rescaled_n: f64,
    pub f: f64,
    /// `zeta / lambda_max(A)`; empty for the conic estimator.
    pub zeta_mult: Option<f64>,
    pub r_mult: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub nonconverged: usize,
    pub rel_l1_error: f64,
    pub rel_l1_stderr: f64,
    pub rel_l2_error: f64,
    pub rel_l2_stderr: f64,
    /// Summed per-trial wall time of the cell; kept out of `sweep.csv`.
    pub runtime_ms: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn family_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.estimator.as_str(),
            family_name(&self.a_family),
            opt(self.rho_a),
            family_name(&self.b_family),
            opt(self.rho_bstar),
            self.tau_b,
            self.m,
            self.n,
            self.d,
            self.rescaled_n,
            self.f,
            opt(self.zeta_mult),
            opt(self.r_mult),
            self.trials,
            self.failures,
            self.nonconverged,
            self.rel_l1_error,
            self.rel_l1_stderr,
            self.rel_l2_error,
            self.rel_l2_stderr,
        )
    }
}

pub fn sweep_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// One row per cell in `rows` order, deduplicated.
pub fn timing_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(TIMING_HEADER);
    out.push('\n');
    let mut last = None;
    for r in rows {
        let key = (r.tau_b.to_bits(), r.m, r.n);
        if last != Some(key) {
            let _ = writeln!(out, "{},{},{},{},{},{:.1}", r.tau_b, r.m, r.n, r.d, r.trials, r.runtime_ms);
            last = Some(key);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    tau_b: f64,
    m: usize,
    n: usize,
    d: usize,
}

/// Solver variant within a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Variant {
    /// `zeta` is an index into the configured zeta choices.
    Lasso { f: f64, zeta: usize, r_mult: f64 },
    Conic { f: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    rel_l1: f64,
    rel_l2: f64,
    converged: bool,
}

struct TrialResult {
    outcomes: Vec<Option<Outcome>>,
    elapsed_ms: f64,
}

fn a_code(f: AFamily) -> u64 {
    match f {
        AFamily::Ar1 => 1,
        AFamily::StarBlock => 2,
        AFamily::Identity => 3,
    }
}

fn b_code(f: BFamily) -> u64 {
    match f {
        BFamily::Ar1 => 1,
        BFamily::RandomPrecision => 2,
        BFamily::Identity => 3,
        BFamily::Zero => 4,
    }
}

/// Seed indices identifying a cell; the trial index is appended per instance.
fn cell_indices(cfg: &ExperimentConfig, c: &Cell) -> Vec<u64> {
    let md = &cfg.model;
    vec![
        a_code(md.a_family),
        md.a_rho.to_bits(),
        b_code(md.b_family),
        md.b_rho.to_bits(),
        c.tau_b.to_bits(),
        c.m as u64,
        c.n as u64,
        c.d as u64,
    ]
}

fn variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    let est = &cfg.estimator;
    let mut out = Vec::new();
    if est.kind.lasso() {
        for f in est.f_grid.to_vec() {
            for zeta in 0..est.zeta.to_vec().len() {
                for r_mult in est.r_multipliers.to_vec() {
                    out.push(Variant::Lasso { f, zeta, r_mult });
                }
            }
        }
    }
    if est.kind.conic() {
        out.extend(est.f_grid.to_vec().into_iter().map(|f| Variant::Conic { f }));
    }
    out
}

/// Resolved zeta for each lasso variant (presets depend on the spectrum of `A`).
fn zeta_values(cfg: &ExperimentConfig, s: &Scales) -> Vec<f64> {
    cfg.estimator
        .zeta
        .to_vec()
        .iter()
        .map(|z| z.resolve(s.lambda_max_a, s.lambda_min_a))
        .collect()
}

struct CellContext<'a> {
    cfg: &'a ExperimentConfig,
    cell: Cell,
    variants: &'a [Variant],
    sampler: InstanceSampler,
    trace_a: f64,
    scales: Scales,
    zetas: Vec<f64>,
    indices: Vec<u64>,
    fixed_beta: Option<Array1<f64>>,
}

impl CellContext<'_> {
    fn beta(&self, trial: usize) -> eiv_core::Result<Array1<f64>> {
        if let Some(b) = &self.fixed_beta {
            return Ok(b.clone());
        }
        let seed = rng::derive_seed(
            self.cfg.run.master_seed,
            "beta",
            &[self.cell.m as u64, self.cell.d as u64, trial as u64],
        );
        gen_beta(self.cell.m, self.cell.d, self.cfg.signal.beta_length, seed)
    }

    fn run_trial(&self, trial: usize) -> TrialResult {
        let start = Instant::now();
        let outcomes = self
            .try_trial(trial)
            .unwrap_or_else(|_| vec![None; self.variants.len()]);
        TrialResult {
            outcomes,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }

    fn try_trial(&self, trial: usize) -> eiv_core::Result<Vec<Option<Outcome>>> {
        let cfg = self.cfg;
        let Cell { m, n, d, .. } = self.cell;
        let beta = self.beta(trial)?;
        let mut idx = self.indices.clone();
        idx.push(trial as u64);
        let seed = rng::derive_seed(cfg.run.master_seed, "instance", &idx);
        let inst = self
            .sampler
            .sample(&beta, d, cfg.signal.sigma_eps, cfg.signal.entry_dist, seed)?;
        let tau_hat = estimate_tau_b(inst.x.view(), self.trace_a);
        let pair = build_surrogate(inst.x.view(), inst.y.view(), tau_hat)?;
        drop(inst);
        let beta_norm = cfg.signal.beta_length;
        let beta_l1 = norm_l1(beta.view());
        let score = |b: &Array1<f64>, converged: bool| {
            let diff = b - &beta;
            Some(Outcome {
                rel_l1: norm_l1(diff.view()) / beta_l1,
                rel_l2: norm_l2(diff.view()) / beta_norm,
                converged,
            })
        };
        let est = &cfg.estimator;
        let mut out = Vec::with_capacity(self.variants.len());
        let mut conic_f = Vec::new();
        for var in self.variants {
            match *var {
                Variant::Lasso { f, zeta, r_mult } => {
                    let p = calib::penalties(&self.scales, est.omega_factor, f, tau_hat, beta_norm, m, n);
                    let mut gd = GdConfig::new(p.lasso_lambda, calib::radius(r_mult, beta_norm, d), self.zetas[zeta]);
                    gd.max_iters = est.gd_max_iters;
                    gd.tol_rel_obj = est.gd_tol;
                    out.push(match solver_gd::solve_with_status(&pair, &gd, None) {
                        Ok(o) if o.trace.status != GdStatus::Diverged => {
                            score(&o.beta_hat, o.trace.status == GdStatus::Converged)
                        }
                        _ => None,
                    });
                }
                Variant::Conic { f } => conic_f.push(f),
            }
        }
        if !conic_f.is_empty() {
            let cfgs: Vec<ConicConfig> = conic_f
                .into_iter()
                .map(|f| {
                    let p = calib::penalties(&self.scales, est.omega_factor, f, tau_hat, beta_norm, m, n);
                    let mut c = ConicConfig::new(p.conic_mu, p.omega);
                    c.max_iters = est.conic_max_iters;
                    c.tol_feas = est.conic_tol;
                    c.tol_gap = est.conic_tol;
                    c.admm_rho = est.conic_rho;
                    c
                })
                .collect();
            let nf = cfgs.len();
            match ConicWorkspace::new(&pair).and_then(|ws| ws.solve_batch(&cfgs, None)) {
                Ok(sols) => out.extend(sols.into_iter().map(|r| match r {
                    Ok((sol, _)) => score(&sol.beta(), sol.converged),
                    Err(_) => None,
                })),
                Err(_) => out.extend(std::iter::repeat_n(None, nf)),
            }
        }
        Ok(out)
    }
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let k = v.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// The cells of the sweep in output order.
fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for tau_b in cfg.model.tau_b.to_vec() {
        for m in cfg.dims.m.to_vec() {
            let d = cfg.dims.d.resolve(m);
            for n in cfg.sample_sizes(m, d) {
                out.push(Cell { tau_b, m, n, d });
            }
        }
    }
    out
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Other(format!("thread pool: {e}")))
}

/// Runs the sweep without touching the file system.
pub fn sweep(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let pool = build_pool(workers)?;
    pool.install(|| sweep_in_pool(cfg))
}

fn sweep_in_pool(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let md = &cfg.model;
    let vars = variants(cfg);
    let trials = cfg.run.trials;
    let mut rows = Vec::new();
    let mut a_cache: Vec<(usize, Arc<CovarianceSpec>)> = Vec::new();
    for cell in cells(cfg) {
        let a = match a_cache.iter().find(|(m, _)| *m == cell.m) {
            Some((_, a)) => Arc::clone(a),
            None => {
                let a = Arc::new(cfg.a_spec(cell.m)?);
                a_cache.push((cell.m, Arc::clone(&a)));
                a
            }
        };
        let graph_seed = rng::derive_seed(cfg.run.master_seed, "b-graph", &[cell.n as u64]);
        let b = Arc::new(cfg.b_spec(cell.n, cell.tau_b, graph_seed)?);
        let scales = Scales::from_specs(&a, &b)?;
        let trace_a = a.trace();
        let sampler = InstanceSampler::new(a, b, Factorization::Cholesky)?;
        let fixed_beta = if cfg.signal.beta_per_trial {
            None
        } else {
            let seed = rng::derive_seed(cfg.run.master_seed, "beta", &[cell.m as u64, cell.d as u64]);
            Some(gen_beta(cell.m, cell.d, cfg.signal.beta_length, seed)?)
        };
        let ctx = CellContext {
            cfg,
            cell,
            variants: &vars,
            trace_a,
            zetas: zeta_values(cfg, &scales),
            scales,
            sampler,
            indices: cell_indices(cfg, &cell),
            fixed_beta,
        };
        let results: Vec<TrialResult> = (0..trials)
            .into_par_iter()
            .map(|t| ctx.run_trial(t))
            .collect();
        let runtime_ms: f64 = results.iter().map(|r| r.elapsed_ms).sum();
        let lmax = ctx.scales.lambda_max_a;
        for (vi, var) in vars.iter().enumerate() {
            let ok: Vec<Outcome> = results.iter().filter_map(|r| r.outcomes.get(vi).copied().flatten()).collect();
            let (l1, l1_se) = mean_stderr(&ok.iter().map(|o| o.rel_l1).collect::<Vec<_>>());
            let (l2, l2_se) = mean_stderr(&ok.iter().map(|o| o.rel_l2).collect::<Vec<_>>());
            let (estimator, f, zeta_mult, r_mult) = match *var {
                Variant::Lasso { f, zeta, r_mult } => (Estimator::LassoGd, f, Some(ctx.zetas[zeta] / lmax), Some(r_mult)),
                Variant::Conic { f } => (Estimator::Conic, f, None, None),
            };
            rows.push(ResultRow {
                estimator,
                a_family: md.a_family,
                rho_a: (md.a_family != AFamily::Identity).then_some(md.a_rho),
                b_family: md.b_family,
                rho_bstar: (md.b_family == BFamily::Ar1).then_some(md.b_rho),
                tau_b: cell.tau_b,
                m: cell.m,
                n: cell.n,
                d: cell.d,
                rescaled_n: cell.n as f64 / (cell.d as f64 * (cell.m as f64).ln()),
                f,
                zeta_mult,
                r_mult,
                trials,
                failures: trials - ok.len(),
                nonconverged: ok.iter().filter(|o| !o.converged).count(),
                rel_l1_error: l1,
                rel_l1_stderr: l1_se,
                rel_l2_error: l2,
                rel_l2_stderr: l2_se,
                runtime_ms,
            });
        }
    }
    Ok(rows)
}

/// Runs the sweep and writes `sweep.csv` and `timing.csv` into `out_dir`.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<Vec<ResultRow>> {
    let rows = sweep(cfg, workers)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("sweep.csv"), sweep_csv(&rows))?;
    std::fs::write(out_dir.join("timing.csv"), timing_csv(&rows))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_stderr(&[]).0.is_nan());
        assert!(mean_stderr(&[1.0]).1.is_nan());
    }

    #[test]
    fn variant_order_is_f_then_zeta_then_radius() {
        let text = "[model]\ntau_b = 0.3\n[dims]\nm = 32\nn = 50\n[estimator]\nkind = \"both\"\n\
                    f_grid = [0.1, 0.2]\nzeta = [\"zeta2\", 2.0]\nr_multipliers = [1, 5, 9]\n";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let v = variants(&cfg);
        assert_eq!(v.len(), 2 * 2 * 3 + 2);
        assert_eq!(v[0], Variant::Lasso { f: 0.1, zeta: 0, r_mult: 1.0 });
        assert_eq!(v[4], Variant::Lasso { f: 0.1, zeta: 1, r_mult: 5.0 });
        assert_eq!(v[13], Variant::Conic { f: 0.2 });
    }
}
