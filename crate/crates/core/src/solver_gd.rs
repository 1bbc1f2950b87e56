//! Composite gradient descent for the corrected Lasso
//! `min 1/2 b^T Gamma b - gamma^T b + lambda ||b||_1` subject to `||b||_1 <= R`.

use std::io::Write;

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, EivError, Result};
use crate::linalg::{self, norm_l1, norm_l2};
use crate::rng;
use crate::surrogate::SurrogatePair;

/// Iterates may exceed the radius by at most this much.
pub const FEASIBILITY_SLACK: f64 = 1e-10;
/// Relative objective blow-up that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

pub fn soft_threshold(v: ArrayView1<'_, f64>, kappa: f64) -> Array1<f64> {
    v.mapv(|x| x.signum() * (x.abs() - kappa).max(0.0))
}

/// Euclidean projection onto `{b : ||b||_1 <= R}` by the sorted-threshold rule.
pub fn project_l1_ball(v: ArrayView1<'_, f64>, radius: f64) -> Array1<f64> {
    let l1 = norm_l1(v);
    if l1 <= radius {
        return v.to_owned();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cum += u;
        let t = (cum - radius) / (k + 1) as f64;
        if u > t {
            theta = t;
        } else {
            break;
        }
    }
    let mut out = soft_threshold(v, theta.max(0.0));
    let n1 = norm_l1(out.view());
    if n1 > radius {
        out *= radius / n1;
    }
    out
}

/// Exact minimizer of `1/2 ||b - v||^2 + k ||b||_1` over `||b||_1 <= R`.
///
/// Soft-thresholding by `k` first; when that leaves the ball the extra
/// threshold is the one that lands on the boundary, which is the l1
/// projection of the thresholded vector.
pub fn composite_prox(v: ArrayView1<'_, f64>, lambda_over_zeta: f64, radius: f64) -> Array1<f64> {
    let u = soft_threshold(v, lambda_over_zeta);
    project_l1_ball(u.view(), radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    pub lambda: f64,
    pub radius: f64,
    /// Inverse step size.
    pub zeta: f64,
    pub max_iters: usize,
    pub tol_rel_obj: f64,
    /// Window over which the relative objective change is measured.
    pub window: usize,
    /// Keep iterates so that `||b^t - b_hat||` can be filled in.
    pub record_trace: bool,
    pub beta0: Option<Array1<f64>>,
}

impl GdConfig {
    pub fn new(lambda: f64, radius: f64, zeta: f64) -> Self {
        Self {
            lambda,
            radius,
            zeta,
            max_iters: 5000,
            tol_rel_obj: 1e-9,
            window: 10,
            record_trace: false,
            beta0: None,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(EivError::invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(self.radius > 0.0) {
            return Err(EivError::invalid(format!("R must be positive, got {}", self.radius)));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(EivError::invalid(format!("zeta must be positive, got {}", self.zeta)));
        }
        if self.max_iters == 0 || self.window == 0 || !(self.tol_rel_obj > 0.0) {
            return Err(EivError::invalid("max_iters, window and tol_rel_obj must be positive"));
        }
        if let Some(b) = &self.beta0 {
            check_dim("len(beta0)", m, b.len())?;
        }
        Ok(())
    }
}

/// `1.5 * lambda_max`, the default step parameter.
pub fn default_zeta(lambda_max: f64) -> f64 {
    1.5 * lambda_max
}

/// Gaussian start of Euclidean length `scale`, projected onto the l1 ball.
pub fn random_init(m: usize, scale: f64, radius: f64, seed: u64) -> Array1<f64> {
    let mut r = rng::stream(seed, "gd-init", &[]);
    let mut v = Array1::from_shape_simple_fn(m, || r.sample::<f64, _>(StandardNormal));
    let nv = norm_l2(v.view());
    if nv > 0.0 {
        v *= scale / nv;
    }
    project_l1_ball(v.view(), radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub objective: f64,
    /// `||b^t - b_hat||_2`; NaN unless iterates were recorded.
    pub opt_error: f64,
    /// `||b^t - b*||_2`; NaN without `b*`.
    pub stat_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GdStatus {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    /// One record per iterate `t = 0..=iterations_run`.
    pub records: Vec<TraceRecord>,
    pub iterations_run: usize,
    pub converged: bool,
    pub status: GdStatus,
    /// The objective rose in at least a quarter of the final window steps
    /// without converging.
    pub oscillating: bool,
}

impl SolverTrace {
    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.objective)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,objective,opt_error,stat_error")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.t, r.objective, r.opt_error, r.stat_error)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GdOutput {
    pub beta_hat: Array1<f64>,
    pub trace: SolverTrace,
}

/// `phi(b) = L(b) + lambda ||b||_1`.
pub fn objective(pair: &SurrogatePair, beta: ArrayView1<'_, f64>, lambda: f64) -> Result<f64> {
    Ok(pair.loss_and_gradient(beta)?.0 + lambda * norm_l1(beta))
}

/// Runs the iteration to completion and reports divergence through
/// [`GdStatus::Diverged`] instead of an error.
pub fn solve_with_status(pair: &SurrogatePair, cfg: &GdConfig, beta_star: Option<ArrayView1<'_, f64>>) -> Result<GdOutput> {
    let m = pair.m;
    cfg.validate(m)?;
    if let Some(bs) = beta_star {
        check_dim("len(beta_star)", m, bs.len())?;
    }
    let mut beta = match &cfg.beta0 {
        Some(b) => project_l1_ball(b.view(), cfg.radius),
        None => Array1::zeros(m),
    };
    let step = 1.0 / cfg.zeta;
    let shrink = cfg.lambda / cfg.zeta;
    let stat = |b: &Array1<f64>| beta_star.map_or(f64::NAN, |bs| norm_l2((b - &bs).view()));

    let mut gb = Array1::zeros(m);
    let eval = |b: &Array1<f64>, gb: &mut Array1<f64>| {
        linalg::matvec_into(pair.gamma_hat.view(), b.view(), gb);
        0.5 * gb.dot(b) - pair.gamma_vec.dot(b) + cfg.lambda * norm_l1(b.view())
    };
    let phi0 = eval(&beta, &mut gb);
    let blowup = phi0 + DIVERGENCE_FACTOR * phi0.abs().max(1.0);
    let mut objectives = vec![phi0];
    let mut stats = vec![stat(&beta)];
    let mut iterates = if cfg.record_trace { vec![beta.clone()] } else { Vec::new() };
    let mut status = GdStatus::MaxIterations;

    for t in 1..=cfg.max_iters {
        // gb holds Gamma b^{t-1}; the gradient is gb - gamma.
        let mut v = beta.clone();
        v.zip_mut_with(&gb, |b, &g| *b -= step * g);
        v.scaled_add(step, &pair.gamma_vec);
        beta = composite_prox(v.view(), shrink, cfg.radius);
        let phi = eval(&beta, &mut gb);
        objectives.push(phi);
        stats.push(stat(&beta));
        if cfg.record_trace {
            iterates.push(beta.clone());
        }
        if !phi.is_finite() || phi > blowup {
            status = GdStatus::Diverged;
            break;
        }
        if t >= cfg.window {
            // The last step is checked too: an even window cannot see a 2-cycle.
            let tol = cfg.tol_rel_obj * phi.abs().max(1.0);
            let old = objectives[t - cfg.window];
            if (old - phi).abs() <= tol && (objectives[t - 1] - phi).abs() <= tol {
                status = GdStatus::Converged;
                break;
            }
        }
    }

    let iterations_run = objectives.len() - 1;
    let tail = (4 * cfg.window).min(iterations_run);
    let rises = objectives[objectives.len() - 1 - tail..]
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-12 * w[0].abs().max(1.0))
        .count();
    let oscillating = status != GdStatus::Converged && tail > 0 && 4 * rises >= tail;

    let records = (0..=iterations_run)
        .map(|t| TraceRecord {
            t,
            objective: objectives[t],
            opt_error: if cfg.record_trace {
                norm_l2((&iterates[t] - &beta).view())
            } else {
                f64::NAN
            },
            stat_error: stats[t],
        })
        .collect();
    Ok(GdOutput {
        beta_hat: beta,
        trace: SolverTrace {
            records,
            iterations_run,
            converged: status == GdStatus::Converged,
            status,
            oscillating,
        },
    })
}

/// Like [`solve_with_status`] but divergence is an error.
pub fn solve(pair: &SurrogatePair, cfg: &GdConfig, beta_star: Option<ArrayView1<'_, f64>>) -> Result<GdOutput> {
    let out = solve_with_status(pair, cfg, beta_star)?;
    if out.trace.status == GdStatus::Diverged {
        let recs = &out.trace.records;
        return Err(EivError::Diverged {
            iteration: out.trace.iterations_run,
            objective: recs[recs.len() - 1].objective,
            initial: recs[0].objective,
        });
    }
    Ok(out)
}
