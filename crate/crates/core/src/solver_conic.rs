//! The conic selector
//! `min ||b||_1 + lambda t  s.t.  ||gamma - Gamma b||_inf <= mu t + omega,  ||b||_2 <= t`
//! solved by ADMM in consensus form.
//!
//! With `x = (b, t)` the three blocks are `z1 = x` (l1 + linear term, `t >= 0`),
//! `z2 = x` (second-order cone) and `z3 = (gamma - Gamma b, t)` (the scaled
//! infinity-norm cone). The x-update solves with `2 I + Gamma^2`, which is
//! diagonal in the eigenbasis of `Gamma`, computed once per surrogate.
//! The penalty `rho` is fixed; steps are over-relaxed and, for `mu > 0`,
//! Anderson-accelerated with a residual safeguard.

use std::collections::VecDeque;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayViewMut1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, EivError, Result};
use crate::linalg::{self, norm_inf, norm_l1, norm_l2};
use crate::solver_gd::soft_threshold;
use crate::surrogate::SurrogatePair;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicConfig {
    pub lambda_conic: f64,
    pub mu: f64,
    pub omega: f64,
    pub max_iters: usize,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub admm_rho: f64,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    #[serde(default = "default_relaxation")]
    pub relaxation: f64,
}

fn default_relaxation() -> f64 {
    1.6
}

impl Default for ConicConfig {
    fn default() -> Self {
        Self {
            lambda_conic: 1.0,
            mu: 0.0,
            omega: 0.0,
            max_iters: 20_000,
            tol_feas: 1e-6,
            tol_gap: 1e-6,
            admm_rho: 1.0,
            relaxation: default_relaxation(),
        }
    }
}

impl ConicConfig {
    pub fn new(mu: f64, omega: f64) -> Self {
        Self {
            mu,
            omega,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.mu) && ok(self.omega)) {
            return Err(EivError::invalid(format!("mu, omega must be nonnegative, got {}, {}", self.mu, self.omega)));
        }
        if !(self.lambda_conic > 0.0 && self.lambda_conic.is_finite()) {
            return Err(EivError::invalid("conic lambda must be positive"));
        }
        if !(self.tol_feas > 0.0 && self.tol_gap > 0.0 && self.admm_rho > 0.0) || self.max_iters == 0 {
            return Err(EivError::invalid("tolerances, rho and max_iters must be positive"));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(EivError::invalid(format!("relaxation must lie in (0, 2), got {}", self.relaxation)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub beta_hat: Vec<f64>,
    pub t_hat: f64,
    pub objective: f64,
    pub feas_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ConicSolution {
    pub fn beta(&self) -> Array1<f64> {
        Array1::from(self.beta_hat.clone())
    }
}

/// `max(0, ||gamma - Gamma b||_inf - mu t - omega, ||b||_2 - t)`.
pub fn check_cone_constraint(pair: &SurrogatePair, beta: ArrayView1<'_, f64>, t: f64, mu: f64, omega: f64) -> Result<f64> {
    let res = pair.oracle_residual(beta)?;
    Ok(0.0f64.max(res - mu * t - omega).max(norm_l2(beta) - t))
}

/// Projection of `(r0, t0)` onto `{(r, t) : ||r||_inf <= mu t + omega}`.
pub fn project_inf_cone(r0: &mut Array1<f64>, t0: f64, mu: f64, omega: f64) -> f64 {
    if mu == 0.0 {
        r0.mapv_inplace(|v| v.clamp(-omega, omega));
        return t0;
    }
    let mut a: Vec<f64> = r0.iter().map(|v| v.abs()).collect();
    a.sort_unstable_by(|x, y| y.total_cmp(x));
    // With the k largest coordinates clipped, stationarity in t gives
    // t (1 + k mu^2) = t0 + mu (S_k - k omega).
    let mut t = t0;
    let mut sum = 0.0;
    let mut found = false;
    for k in 0..=a.len() {
        if k > 0 {
            sum += a[k - 1];
        }
        let kf = k as f64;
        let tk = (t0 + mu * (sum - kf * omega)) / (1.0 + kf * mu * mu);
        let b = mu * tk + omega;
        let upper = if k == 0 { f64::INFINITY } else { a[k - 1] };
        let lower = a.get(k).copied().unwrap_or(0.0);
        if b <= upper && b >= lower {
            t = tk;
            found = true;
            break;
        }
    }
    if !found || mu * t + omega < 0.0 {
        t = t.max(-omega / mu);
    }
    let b = (mu * t + omega).max(0.0);
    r0.mapv_inplace(|v| v.clamp(-b, b));
    t
}

/// Projection onto the second-order cone `{(b, t) : ||b||_2 <= t}`.
fn project_soc(v: &mut Array1<f64>, s: f64) -> f64 {
    let nv = norm_l2(v.view());
    if nv <= s {
        return s;
    }
    if nv <= -s {
        v.fill(0.0);
        return 0.0;
    }
    let a = 0.5 * (nv + s);
    v.mapv_inplace(|x| x * a / nv);
    a
}

/// ADMM iterate `(z1, z2, z3, u1, u2, u3)` with their `t` parts, stored flat;
/// reusable as a warm start for nearby `(mu, omega)`.
#[derive(Debug, Clone)]
pub struct AdmmState {
    m: usize,
    w: Array1<f64>,
}

impl AdmmState {
    fn zeros(m: usize) -> Self {
        Self {
            m,
            w: Array1::zeros(6 * m + 6),
        }
    }

    fn vec(&self, block: usize) -> ArrayView1<'_, f64> {
        self.w.slice(s![block * self.m..(block + 1) * self.m])
    }

    fn vec_mut(&mut self, block: usize) -> ArrayViewMut1<'_, f64> {
        let m = self.m;
        self.w.slice_mut(s![block * m..(block + 1) * m])
    }

    fn t(&self, block: usize) -> f64 {
        self.w[6 * self.m + block]
    }

    fn set_t(&mut self, block: usize, v: f64) {
        self.w[6 * self.m + block] = v;
    }
}

const Z1: usize = 0;
const Z2: usize = 1;
const Z3: usize = 2;
const U1: usize = 3;
const U2: usize = 4;
const U3: usize = 5;

/// Anderson acceleration memory.
const AA_MEMORY: usize = 8;

/// Residuals of one ADMM step.
#[derive(Debug, Clone)]
struct StepInfo {
    primal: f64,
    dual: f64,
    /// Residual of the infinity-cone block, used for infeasibility detection.
    r3: Array1<f64>,
}

/// Eigenbasis of `Gamma_hat` shared by all solves on one surrogate.
#[derive(Debug, Clone)]
pub struct ConicWorkspace<'a> {
    pair: &'a SurrogatePair,
    q: Array2<f64>,
    qt: Array2<f64>,
    eig: Array1<f64>,
}

struct Candidate {
    beta: Array1<f64>,
    t: f64,
    objective: f64,
    feas: f64,
}

/// One ADMM run inside a batch.
struct Run<'c> {
    cfg: &'c ConicConfig,
    tol_p: f64,
    tol_d: f64,
    /// Current iterate, its image `g = T(x)` and residual `f = g - x`.
    x: AdmmState,
    g: AdmmState,
    f: Array1<f64>,
    fnorm: f64,
    info: StepInfo,
    dx: VecDeque<Array1<f64>>,
    df: VecDeque<Array1<f64>>,
    /// The last proposal was a rejected Anderson mix.
    rejected: bool,
    evals: usize,
    last_candidate: usize,
    best: Option<Candidate>,
    prev_r3: Option<Array1<f64>>,
    stall: usize,
    outcome: Option<Result<bool>>,
}

impl Run<'_> {
    fn accelerate(&self) -> bool {
        self.cfg.mu > 0.0
    }

    /// Infeasibility, convergence and budget checks on the current step.
    fn check(&mut self, ws: &ConicWorkspace<'_>) {
        if self.cfg.mu == 0.0 {
            // Infeasible problems make the scaled dual drift by a constant
            // nonzero step.
            if let Some(p) = &self.prev_r3 {
                let drift = norm_inf((&self.info.r3 - p).view());
                let step = norm_inf(self.info.r3.view());
                if self.evals > 100 && step > 1e3 * self.tol_p && drift <= 1e-6 * step {
                    self.stall += 1;
                } else {
                    self.stall = 0;
                }
            }
            if self.stall >= 50 {
                self.outcome = Some(Err(EivError::InfeasibleProblem(format!(
                    "min ||gamma - Gamma b||_inf exceeds omega = {}: residual drift {:.3e}",
                    self.cfg.omega,
                    norm_inf(self.info.r3.view())
                ))));
                return;
            }
            self.prev_r3 = Some(self.info.r3.clone());
        }
        let done = self.info.primal <= self.tol_p && self.info.dual <= self.tol_d;
        let out_of_budget = self.evals >= self.cfg.max_iters;
        if done || out_of_budget || self.evals >= self.last_candidate + 10 {
            self.last_candidate = self.evals;
            let cand = ws.repair(self.g.vec(Z1).to_owned(), self.cfg);
            let better = match &self.best {
                None => true,
                Some(b) => (cand.feas, cand.objective) < (b.feas, b.objective),
            };
            if better {
                self.best = Some(cand);
            }
        }
        if done {
            self.outcome = Some(Ok(true));
        } else if out_of_budget {
            self.outcome = Some(Ok(false));
        }
    }

    /// The next point to evaluate and whether it is an Anderson mix.
    fn propose(&self) -> (AdmmState, bool) {
        if self.accelerate() && !self.rejected && !self.df.is_empty() {
            if let Some(w) = anderson_mix(&self.g.w, &self.f, &self.dx, &self.df) {
                return (AdmmState { m: self.g.m, w }, true);
            }
        }
        (self.g.clone(), false)
    }

    fn absorb(&mut self, p: AdmmState, mixed: bool, gp: AdmmState, info: StepInfo) {
        self.evals += 1;
        let fp = &gp.w - &p.w;
        let fpnorm = norm_l2(fp.view());
        if mixed && fpnorm > self.fnorm {
            self.rejected = true;
            return;
        }
        self.rejected = false;
        if self.accelerate() {
            push_history(&mut self.dx, &mut self.df, &p.w - &self.x.w, &fp - &self.f);
        }
        self.x = p;
        self.g = gp;
        self.f = fp;
        self.fnorm = fpnorm;
        self.info = info;
    }
}

impl<'a> ConicWorkspace<'a> {
    pub fn new(pair: &'a SurrogatePair) -> Result<Self> {
        let (eig, q) = linalg::sym_eigen(pair.gamma_hat.view())?;
        let qt = q.t().as_standard_layout().into_owned();
        Ok(Self { pair, q, qt, eig })
    }

    /// Smallest feasible `t` for `beta` and the resulting candidate.
    fn repair(&self, beta: Array1<f64>, cfg: &ConicConfig) -> Candidate {
        let mut gb = Array1::zeros(beta.len());
        linalg::matvec_into(self.pair.gamma_hat.view(), beta.view(), &mut gb);
        let res = Zip::from(&self.pair.gamma_vec)
            .and(&gb)
            .fold(0.0f64, |acc, &g, &h| acc.max((g - h).abs()));
        let nb = norm_l2(beta.view());
        let (t, feas) = if cfg.mu > 0.0 {
            (nb.max((res - cfg.omega).max(0.0) / cfg.mu), 0.0)
        } else {
            (nb, (res - cfg.omega).max(0.0))
        };
        Candidate {
            objective: norm_l1(beta.view()) + cfg.lambda_conic * t,
            beta,
            t,
            feas,
        }
    }

    /// One over-relaxed ADMM step from each of `points`. The x-updates share
    /// one pass over `Q^T` and one over `Q`.
    fn step_batch(&self, points: &[(&AdmmState, &ConicConfig)]) -> Vec<(AdmmState, StepInfo)> {
        let m = self.pair.m;
        let k = points.len();
        let gamma = &self.pair.gamma_vec;
        let mut ab = Array2::zeros((m, 2 * k));
        for (j, (st, _)) in points.iter().enumerate() {
            let (z1, z2, z3) = (st.vec(Z1), st.vec(Z2), st.vec(Z3));
            let (u1, u2, u3) = (st.vec(U1), st.vec(U2), st.vec(U3));
            for i in 0..m {
                ab[[i, 2 * j]] = z1[i] - u1[i] + z2[i] - u2[i];
                ab[[i, 2 * j + 1]] = z3[i] - u3[i] - gamma[i];
            }
        }
        let q_ab = linalg::matmul(self.qt.view(), ab.view());
        // c = Q^T beta and Lambda c = Q^T Gamma beta, solving with 2 I + Gamma^2
        let mut cc = Array2::zeros((m, 2 * k));
        for i in 0..m {
            let l = self.eig[i];
            let d = 1.0 / (2.0 + l * l);
            for j in 0..k {
                let c = d * (q_ab[[i, 2 * j]] - l * q_ab[[i, 2 * j + 1]]);
                cc[[i, 2 * j]] = c;
                cc[[i, 2 * j + 1]] = l * c;
            }
        }
        let bg = linalg::matmul(self.q.view(), cc.view());
        points
            .iter()
            .enumerate()
            .map(|(j, (st, cfg))| self.finish_step(st, cfg, bg.column(2 * j), bg.column(2 * j + 1)))
            .collect()
    }

    fn finish_step(
        &self,
        st: &AdmmState,
        cfg: &ConicConfig,
        beta: ArrayView1<'_, f64>,
        gbeta: ArrayView1<'_, f64>,
    ) -> (AdmmState, StepInfo) {
        let m = self.pair.m;
        let rho = cfg.admm_rho;
        let alpha = cfg.relaxation;
        let (z1, z2, z3) = (st.vec(Z1), st.vec(Z2), st.vec(Z3));
        let (u1, u2, u3) = (st.vec(U1), st.vec(U2), st.vec(U3));
        let t = (st.t(Z1) - st.t(U1) + st.t(Z2) - st.t(U2) + st.t(Z3) - st.t(U3)) / 3.0;
        let r = Zip::from(&self.pair.gamma_vec).and(&gbeta).map_collect(|&g, &h| g - h);

        // relaxed block values
        let relax = |x: f64, z: f64| alpha * x + (1.0 - alpha) * z;
        let x1 = Zip::from(&beta).and(&z1).map_collect(|&b, &z| relax(b, z));
        let x2 = Zip::from(&beta).and(&z2).map_collect(|&b, &z| relax(b, z));
        let x3 = Zip::from(&r).and(&z3).map_collect(|&v, &z| relax(v, z));
        let (x1t, x2t, x3t) = (relax(t, st.t(Z1)), relax(t, st.t(Z2)), relax(t, st.t(Z3)));

        let nz1 = soft_threshold((&x1 + &u1).view(), 1.0 / rho);
        let nz1t = (x1t + st.t(U1) - cfg.lambda_conic / rho).max(0.0);
        let mut nz2 = &x2 + &u2;
        let nz2t = project_soc(&mut nz2, x2t + st.t(U2));
        let mut nz3 = &x3 + &u3;
        let nz3t = project_inf_cone(&mut nz3, x3t + st.t(U3), cfg.mu, cfg.omega);

        let mut out = AdmmState::zeros(m);
        out.vec_mut(U1).assign(&(&u1 + &x1 - &nz1));
        out.vec_mut(U2).assign(&(&u2 + &x2 - &nz2));
        out.vec_mut(U3).assign(&(&u3 + &x3 - &nz3));
        out.set_t(U1, st.t(U1) + x1t - nz1t);
        out.set_t(U2, st.t(U2) + x2t - nz2t);
        out.set_t(U3, st.t(U3) + x3t - nz3t);

        // residuals of the unrelaxed iterate
        let r3 = &r - &nz3;
        let primal = norm_inf((&beta - &nz1).view())
            .max(norm_inf((&beta - &nz2).view()))
            .max(norm_inf(r3.view()))
            .max((t - nz1t).abs().max((t - nz2t).abs()).max((t - nz3t).abs()));
        let dual = rho
            * norm_inf((&nz1 - &z1).view())
                .max(norm_inf((&nz2 - &z2).view()))
                .max(norm_inf((&nz3 - &z3).view()))
                .max((nz1t - st.t(Z1)).abs().max((nz2t - st.t(Z2)).abs()).max((nz3t - st.t(Z3)).abs()));

        out.vec_mut(Z1).assign(&nz1);
        out.vec_mut(Z2).assign(&nz2);
        out.vec_mut(Z3).assign(&nz3);
        out.set_t(Z1, nz1t);
        out.set_t(Z2, nz2t);
        out.set_t(Z3, nz3t);
        (out, StepInfo { primal, dual, r3 })
    }

    pub fn solve(&self, cfg: &ConicConfig) -> Result<ConicSolution> {
        self.solve_warm(cfg, None).map(|(s, _)| s)
    }

    /// Runs ADMM from `warm` (or zero) and returns the solution together
    /// with the final iterate.
    pub fn solve_warm(&self, cfg: &ConicConfig, warm: Option<&AdmmState>) -> Result<(ConicSolution, AdmmState)> {
        let warm = warm.map(|w| vec![w.clone()]);
        self.solve_batch(std::slice::from_ref(cfg), warm.as_deref())?
            .pop()
            .expect("one result per config")
    }

    /// Solves one problem per entry of `cfgs` on this surrogate, in lockstep
    /// so that the dense products are shared.
    ///
    /// For `mu > 0` each fixed-point iteration is accelerated by safeguarded
    /// Anderson mixing: a mixed point is kept only when its fixed-point
    /// residual is no larger than that of the current iterate, otherwise the
    /// plain step is taken next. Each evaluation of the ADMM map counts as
    /// one iteration. Per-problem failures (infeasibility) are reported in
    /// place; the outer error is for invalid input.
    pub fn solve_batch(
        &self,
        cfgs: &[ConicConfig],
        warm: Option<&[AdmmState]>,
    ) -> Result<Vec<Result<(ConicSolution, AdmmState)>>> {
        let m = self.pair.m;
        for c in cfgs {
            c.validate()?;
        }
        if let Some(w) = warm {
            check_dim("warm starts", cfgs.len(), w.len())?;
            for s in w {
                check_dim("warm start length", m, s.m)?;
            }
        }
        let scale = 1.0f64.max(norm_inf(self.pair.gamma_vec.view()));
        let starts: Vec<AdmmState> = match warm {
            Some(w) => w.to_vec(),
            None => vec![AdmmState::zeros(m); cfgs.len()],
        };
        let first = {
            let pts: Vec<_> = starts.iter().zip(cfgs).collect();
            self.step_batch(&pts)
        };
        let mut runs: Vec<Run<'_>> = starts
            .into_iter()
            .zip(first)
            .zip(cfgs)
            .map(|((x, (g, info)), cfg)| {
                let f = &g.w - &x.w;
                Run {
                    cfg,
                    tol_p: cfg.tol_feas * scale,
                    tol_d: cfg.tol_gap * scale,
                    fnorm: norm_l2(f.view()),
                    x,
                    g,
                    f,
                    info,
                    dx: VecDeque::new(),
                    df: VecDeque::new(),
                    rejected: false,
                    evals: 1,
                    last_candidate: 0,
                    best: None,
                    prev_r3: None,
                    stall: 0,
                    outcome: None,
                }
            })
            .collect();

        loop {
            for r in runs.iter_mut().filter(|r| r.outcome.is_none()) {
                r.check(self);
            }
            let active: Vec<usize> = (0..runs.len()).filter(|&i| runs[i].outcome.is_none()).collect();
            if active.is_empty() {
                break;
            }
            let proposals: Vec<(AdmmState, bool)> = active.iter().map(|&i| runs[i].propose()).collect();
            let images = {
                let pts: Vec<_> = proposals.iter().zip(&active).map(|((p, _), &i)| (p, runs[i].cfg)).collect();
                self.step_batch(&pts)
            };
            for ((i, (p, mixed)), (gp, info)) in active.into_iter().zip(proposals).zip(images) {
                runs[i].absorb(p, mixed, gp, info);
            }
        }

        Ok(runs
            .into_iter()
            .map(|r| {
                let converged = r.outcome.expect("every run finishes")?;
                let bst = r.best.expect("at least one candidate evaluated");
                let feas = check_cone_constraint(self.pair, bst.beta.view(), bst.t, r.cfg.mu, r.cfg.omega)?;
                Ok((
                    ConicSolution {
                        beta_hat: bst.beta.to_vec(),
                        t_hat: bst.t,
                        objective: bst.objective,
                        feas_residual: feas,
                        iterations: r.evals,
                        converged: converged && feas <= r.cfg.tol_feas * scale,
                    },
                    r.g,
                ))
            })
            .collect())
    }
}

fn push_history(dx: &mut VecDeque<Array1<f64>>, df: &mut VecDeque<Array1<f64>>, a: Array1<f64>, b: Array1<f64>) {
    if dx.len() == AA_MEMORY {
        dx.pop_front();
        df.pop_front();
    }
    dx.push_back(a);
    df.push_back(b);
}

/// Type-II Anderson mixing: `g - (dX + dF) c` with `c` the regularized least
/// squares fit of `f` by the columns of `dF`.
fn anderson_mix(
    g: &Array1<f64>,
    f: &Array1<f64>,
    dx: &VecDeque<Array1<f64>>,
    df: &VecDeque<Array1<f64>>,
) -> Option<Array1<f64>> {
    let k = df.len();
    let mut h = Array2::zeros((k, k));
    let mut rhs = Array1::zeros(k);
    for i in 0..k {
        rhs[i] = df[i].dot(f);
        for j in 0..=i {
            let v = df[i].dot(&df[j]);
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }
    let reg = 1e-10 * h.diag().sum().max(f64::MIN_POSITIVE);
    for i in 0..k {
        h[[i, i]] += reg;
    }
    let inv = linalg::spd_inverse(h.view()).ok()?;
    let c = inv.dot(&rhs);
    if c.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut out = g.clone();
    for i in 0..k {
        out.scaled_add(-c[i], &dx[i]);
        out.scaled_add(-c[i], &df[i]);
    }
    Some(out)
}

pub fn solve_conic(pair: &SurrogatePair, cfg: &ConicConfig) -> Result<ConicSolution> {
    ConicWorkspace::new(pair)?.solve(cfg)
}
