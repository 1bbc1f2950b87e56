//! Experiment configuration: TOML with flat sections
//! `[model]`, `[dims]`, `[signal]`, `[estimator]`, `[run]` and `[trace]`.

use std::path::{Path, PathBuf};

use eiv_core::{CovarianceSpec, EntryDist};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// A scalar or a list in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AFamily {
    Ar1,
    StarBlock,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BFamily {
    Ar1,
    RandomPrecision,
    Identity,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    LassoGd,
    Conic,
    Both,
}

impl EstimatorKind {
    pub fn lasso(self) -> bool {
        matches!(self, EstimatorKind::LassoGd | EstimatorKind::Both)
    }

    pub fn conic(self) -> bool {
        matches!(self, EstimatorKind::Conic | EstimatorKind::Both)
    }
}

/// Sparsity: a fixed value or `"sqrt"` for `floor(sqrt(m))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SparsitySpec {
    Fixed(usize),
    Formula(String),
}

impl Default for SparsitySpec {
    fn default() -> Self {
        SparsitySpec::Formula("sqrt".into())
    }
}

impl SparsitySpec {
    pub fn resolve(&self, m: usize) -> usize {
        match self {
            SparsitySpec::Fixed(d) => *d,
            SparsitySpec::Formula(_) => (m as f64).sqrt().floor() as usize,
        }
    }
}

/// Step-size choice: a named preset or a multiple of `lambda_max(A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZetaChoice {
    Multiplier(f64),
    Preset(String),
}

impl ZetaChoice {
    /// `zeta1 = lmax + lmin / 2`, `zeta2 = 1.5 lmax`, `zeta3 = 2 lmax`.
    pub fn resolve(&self, lmax: f64, lmin: f64) -> f64 {
        match self {
            ZetaChoice::Multiplier(c) => c * lmax,
            ZetaChoice::Preset(p) => match p.as_str() {
                "zeta1" => lmax + 0.5 * lmin,
                "zeta3" => 2.0 * lmax,
                _ => 1.5 * lmax,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "ar1_a")]
    pub a_family: AFamily,
    #[serde(default = "default_rho")]
    pub a_rho: f64,
    /// Star-Block: coordinates per block (one hub plus leaves).
    #[serde(default = "default_hub_block")]
    pub a_hub_block: usize,
    #[serde(default)]
    pub a_num_blocks: Option<usize>,
    #[serde(default = "ar1_b")]
    pub b_family: BFamily,
    #[serde(default = "default_rho")]
    pub b_rho: f64,
    #[serde(default = "one")]
    pub b_c_diag: f64,
    #[serde(default = "default_w_min")]
    pub b_w_min: f64,
    #[serde(default = "default_w_max")]
    pub b_w_max: f64,
    pub tau_b: OneOrMany<f64>,
}

fn ar1_a() -> AFamily {
    AFamily::Ar1
}
fn ar1_b() -> BFamily {
    BFamily::Ar1
}
fn default_rho() -> f64 {
    0.3
}
fn default_hub_block() -> usize {
    17
}
fn one() -> f64 {
    1.0
}
fn default_w_min() -> f64 {
    0.1
}
fn default_w_max() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub m: OneOrMany<usize>,
    #[serde(default)]
    pub n: Option<OneOrMany<usize>>,
    /// Sample sizes as `n = ceil(r d log m)`; exclusive with `n`.
    #[serde(default)]
    pub rescaled_n: Option<OneOrMany<f64>>,
    #[serde(default)]
    pub d: SparsitySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    #[serde(default = "default_beta_length")]
    pub beta_length: f64,
    #[serde(default = "one")]
    pub sigma_eps: f64,
    /// Redraw `beta*` for every trial instead of once per `(m, d)`.
    #[serde(default)]
    pub beta_per_trial: bool,
    #[serde(default)]
    pub entry_dist: EntryDist,
}

fn default_beta_length() -> f64 {
    5.0
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            beta_length: default_beta_length(),
            sigma_eps: 1.0,
            beta_per_trial: false,
            entry_dist: EntryDist::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub kind: EstimatorKind,
    #[serde(default = "default_f_grid")]
    pub f_grid: OneOrMany<f64>,
    #[serde(default = "default_zeta")]
    pub zeta: OneOrMany<ZetaChoice>,
    #[serde(default = "default_r_mult")]
    pub r_multipliers: OneOrMany<f64>,
    /// Factor on `D0 sqrt(log m / n)` giving `omega`.
    #[serde(default = "default_omega_factor")]
    pub omega_factor: f64,
    #[serde(default = "default_gd_max_iters")]
    pub gd_max_iters: usize,
    #[serde(default = "default_gd_tol")]
    pub gd_tol: f64,
    #[serde(default = "default_conic_tol")]
    pub conic_tol: f64,
    #[serde(default = "default_conic_max_iters")]
    pub conic_max_iters: usize,
    #[serde(default = "one")]
    pub conic_rho: f64,
}

/// `0.05, 0.10, ..., 0.80`.
pub fn default_f_values() -> Vec<f64> {
    (1..=16).map(|i| f64::from(i) * 0.05).collect()
}

fn default_f_grid() -> OneOrMany<f64> {
    OneOrMany::Many(default_f_values())
}
fn default_zeta() -> OneOrMany<ZetaChoice> {
    OneOrMany::One(ZetaChoice::Preset("zeta2".into()))
}
fn default_r_mult() -> OneOrMany<f64> {
    OneOrMany::One(1.0)
}
fn default_omega_factor() -> f64 {
    0.1
}
fn default_gd_max_iters() -> usize {
    5000
}
fn default_gd_tol() -> f64 {
    1e-9
}
fn default_conic_tol() -> f64 {
    1e-4
}
fn default_conic_max_iters() -> usize {
    5000
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::LassoGd,
            f_grid: default_f_grid(),
            zeta: default_zeta(),
            r_multipliers: default_r_mult(),
            omega_factor: default_omega_factor(),
            gd_max_iters: default_gd_max_iters(),
            gd_tol: default_gd_tol(),
            conic_tol: default_conic_tol(),
            conic_max_iters: default_conic_max_iters(),
            conic_rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_trials() -> usize {
    100
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            master_seed: 0,
            output_dir: default_output_dir(),
        }
    }
}

/// Iterate-trace settings; `n = ceil(rho d log m)` for each `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    #[serde(default = "default_trace_rho")]
    pub rho: OneOrMany<f64>,
    #[serde(default = "default_inits")]
    pub inits: usize,
    #[serde(default = "default_trace_f")]
    pub f: f64,
    #[serde(default = "default_trace_zeta")]
    pub zeta: ZetaChoice,
    #[serde(default = "default_trace_iters")]
    pub max_iters: usize,
    #[serde(default = "default_trace_tol")]
    pub tol: f64,
}

fn default_trace_rho() -> OneOrMany<f64> {
    OneOrMany::Many(vec![1.0, 2.0, 3.0, 6.0, 12.0, 25.0])
}
fn default_inits() -> usize {
    10
}
fn default_trace_f() -> f64 {
    0.2
}
fn default_trace_zeta() -> ZetaChoice {
    ZetaChoice::Preset("zeta2".into())
}
fn default_trace_iters() -> usize {
    2000
}
fn default_trace_tol() -> f64 {
    1e-13
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            rho: default_trace_rho(),
            inits: default_inits(),
            f: default_trace_f(),
            zeta: default_trace_zeta(),
            max_iters: default_trace_iters(),
            tol: default_trace_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub dims: DimsConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub trace: TraceConfig,
}

fn bad(key: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn nonempty<T>(key: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(bad(key, "grid must be nonempty"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .or_else(|| e.span().map(|s| text[s].trim().to_string()))
                .unwrap_or_default();
            bad(&key, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let taus = self.model.tau_b.to_vec();
        nonempty("model.tau_b", &taus)?;
        if taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(bad("model.tau_b", "trace parameters must be finite and nonnegative"));
        }
        if !(self.model.a_rho.abs() < 1.0) {
            return Err(bad("model.a_rho", "need |rho| < 1"));
        }
        if !(self.model.b_rho.abs() < 1.0) {
            return Err(bad("model.b_rho", "need |rho| < 1"));
        }
        if self.model.b_family == BFamily::RandomPrecision
            && !(0.0 < self.model.b_w_min && self.model.b_w_min <= self.model.b_w_max)
        {
            return Err(bad("model.b_w_min", "need 0 < b_w_min <= b_w_max"));
        }
        let ms = self.dims.m.to_vec();
        nonempty("dims.m", &ms)?;
        if ms.iter().any(|&m| m < 2) {
            return Err(bad("dims.m", "need m >= 2"));
        }
        match (&self.dims.n, &self.dims.rescaled_n) {
            (Some(n), None) => {
                nonempty("dims.n", &n.to_vec())?;
                if n.to_vec().contains(&0) {
                    return Err(bad("dims.n", "need n >= 1"));
                }
            }
            (None, Some(r)) => {
                nonempty("dims.rescaled_n", &r.to_vec())?;
                if r.to_vec().iter().any(|v| !(*v > 0.0)) {
                    return Err(bad("dims.rescaled_n", "values must be positive"));
                }
            }
            (Some(_), Some(_)) => return Err(bad("dims.n", "give either n or rescaled_n, not both")),
            (None, None) => return Err(bad("dims.n", "missing: give n or rescaled_n")),
        }
        if let SparsitySpec::Formula(f) = &self.dims.d {
            if f != "sqrt" {
                return Err(bad("dims.d", format!("expected an integer or \"sqrt\", got {f:?}")));
            }
        }
        for &m in &ms {
            let d = self.dims.d.resolve(m);
            if d == 0 || d > m {
                return Err(bad("dims.d", format!("sparsity {d} out of range for m = {m}")));
            }
        }
        if !(self.signal.beta_length > 0.0) {
            return Err(bad("signal.beta_length", "must be positive"));
        }
        if !(self.signal.sigma_eps >= 0.0) {
            return Err(bad("signal.sigma_eps", "must be nonnegative"));
        }
        let est = &self.estimator;
        nonempty("estimator.f_grid", &est.f_grid.to_vec())?;
        if est.f_grid.to_vec().iter().any(|f| !(*f >= 0.0)) {
            return Err(bad("estimator.f_grid", "factors must be nonnegative"));
        }
        let zetas = est.zeta.to_vec();
        nonempty("estimator.zeta", &zetas)?;
        for z in zetas.iter().chain(std::iter::once(&self.trace.zeta)) {
            match z {
                ZetaChoice::Multiplier(c) if !(*c > 0.0) => {
                    return Err(bad("estimator.zeta", "multipliers must be positive"));
                }
                ZetaChoice::Preset(p) if !matches!(p.as_str(), "zeta1" | "zeta2" | "zeta3") => {
                    return Err(bad("estimator.zeta", format!("unknown preset {p:?}")));
                }
                _ => {}
            }
        }
        let rs = est.r_multipliers.to_vec();
        nonempty("estimator.r_multipliers", &rs)?;
        if rs.iter().any(|r| !(*r > 0.0)) {
            return Err(bad("estimator.r_multipliers", "multipliers must be positive"));
        }
        if est.gd_max_iters == 0 || est.conic_max_iters == 0 {
            return Err(bad("estimator.gd_max_iters", "iteration limits must be positive"));
        }
        if !(est.gd_tol > 0.0 && est.conic_tol > 0.0 && est.conic_rho > 0.0) {
            return Err(bad("estimator.conic_tol", "tolerances and rho must be positive"));
        }
        if self.run.trials == 0 {
            return Err(bad("run.trials", "need at least one trial"));
        }
        if self.trace.inits == 0 {
            return Err(bad("trace.inits", "need at least one start"));
        }
        nonempty("trace.rho", &self.trace.rho.to_vec())?;
        Ok(())
    }

    /// Sample sizes for sparsity `d` at dimension `m`.
    pub fn sample_sizes(&self, m: usize, d: usize) -> Vec<usize> {
        match (&self.dims.n, &self.dims.rescaled_n) {
            (Some(n), _) => n.to_vec(),
            (None, Some(r)) => r.to_vec().iter().map(|&r| rescaled_to_n(r, d, m)).collect(),
            (None, None) => Vec::new(),
        }
    }

    pub fn a_spec(&self, m: usize) -> Result<CovarianceSpec> {
        let md = &self.model;
        Ok(match md.a_family {
            AFamily::Ar1 => CovarianceSpec::ar1(m, md.a_rho)?,
            AFamily::StarBlock => CovarianceSpec::star_block(m, md.a_rho, md.a_hub_block, md.a_num_blocks)?,
            AFamily::Identity => CovarianceSpec::identity(m),
        })
    }

    /// `B` of dimension `n` with `tr(B) / n = tau_b`.
    pub fn b_spec(&self, n: usize, tau_b: f64, seed: u64) -> Result<CovarianceSpec> {
        let md = &self.model;
        let base = match md.b_family {
            BFamily::Zero => return Ok(CovarianceSpec::zeros(n)),
            BFamily::Ar1 => CovarianceSpec::ar1(n, md.b_rho)?,
            BFamily::Identity => CovarianceSpec::identity(n),
            BFamily::RandomPrecision => CovarianceSpec::random_precision(n, md.b_c_diag, md.b_w_min, md.b_w_max, seed)?,
        };
        if tau_b == 0.0 {
            return Ok(CovarianceSpec::zeros(n));
        }
        Ok(base.scale_to_trace(n, tau_b)?)
    }
}

/// `ceil(r d log m)`.
pub fn rescaled_to_n(r: f64, d: usize, m: usize) -> usize {
    (r * d as f64 * (m as f64).ln()).ceil() as usize
}
