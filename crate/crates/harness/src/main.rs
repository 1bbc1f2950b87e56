use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use eiv_core::diagnostics::{falsify_lower_re, falsify_upper_re};
use eiv_core::linalg::{norm_l1, norm_l2};
use eiv_core::simulate::InstanceMeta;
use eiv_core::solver_conic::{solve_conic, ConicConfig};
use eiv_core::solver_gd::{self, GdConfig, GdStatus};
use eiv_core::{build_surrogate, estimate_tau_b, gen_beta, io, EntryDist, Factorization, InstanceSampler};
use eiv_harness::calib::{self, Scales};
use eiv_harness::config::{
    AFamily, BFamily, DimsConfig, ExperimentConfig, ModelConfig, OneOrMany, RunConfig, SparsitySpec, ZetaChoice,
};
use eiv_harness::{default_workers, run_iterate_trace, run_sweep, HarnessError};
use ndarray::{Array1, Array2};
use serde_json::json;

const EXIT_NONCONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "eiv", version, about = "Sparse regression with errors in covariates")]
struct Cli {
    /// Worker threads for sweeps and traces.
    #[arg(long, global = true, env = "EIV_THREADS")]
    workers: Option<usize>,
    /// Exit with status 3 when any solve fails to converge.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one instance and write it as CSV files plus meta.json.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corrected Lasso by composite gradient descent.
    Lasso {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 0.2)]
        f: f64,
        /// Explicit penalty; overrides `--f`.
        #[arg(long)]
        lambda: Option<f64>,
        /// `zeta / lambda_max(A)`.
        #[arg(long, default_value_t = 1.5)]
        zeta_mult: f64,
        /// `R = r_mult ||beta*|| sqrt(d)`.
        #[arg(long, default_value_t = 1.0)]
        r_mult: f64,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
        /// Write the objective and error trace here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Conic selector.
    Conic {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 0.2)]
        f: f64,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
    },
    /// Monte-Carlo sweep from a TOML config; writes sweep.csv and timing.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterate traces from random starts; writes trace.csv and trace_runs.csv.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized search for violations of the lower and upper RE conditions.
    Diagnose {
        /// Square matrix as CSV.
        #[arg(long)]
        gamma: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        smoothness: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 256)]
    m: usize,
    #[arg(long, default_value_t = 600)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, value_parser = parse_a_family, default_value = "ar1")]
    a_family: AFamily,
    #[arg(long, default_value_t = 0.3)]
    a_rho: f64,
    #[arg(long, value_parser = parse_b_family, default_value = "ar1")]
    b_family: BFamily,
    #[arg(long, default_value_t = 0.3)]
    b_rho: f64,
    #[arg(long, default_value_t = 0.3)]
    tau_b: f64,
    #[arg(long, default_value_t = 5.0)]
    beta_length: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Directory written by `simulate`; otherwise an instance is drawn from
    /// the model flags.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_a_family(s: &str) -> Result<AFamily, String> {
    parse_enum(s)
}

fn parse_b_family(s: &str) -> Result<BFamily, String> {
    parse_enum(s)
}

impl ModelArgs {
    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        let cfg = ExperimentConfig {
            model: ModelConfig {
                a_family: self.a_family,
                a_rho: self.a_rho,
                a_hub_block: 17,
                a_num_blocks: None,
                b_family: self.b_family,
                b_rho: self.b_rho,
                b_c_diag: 1.0,
                b_w_min: 0.1,
                b_w_max: 0.3,
                tau_b: OneOrMany::One(self.tau_b),
            },
            dims: DimsConfig {
                m: OneOrMany::One(self.m),
                n: Some(OneOrMany::One(self.n)),
                rescaled_n: None,
                d: SparsitySpec::Fixed(self.d),
            },
            signal: Default::default(),
            estimator: Default::default(),
            run: RunConfig {
                master_seed: self.seed,
                ..Default::default()
            },
            trace: Default::default(),
        };
        let mut cfg = cfg;
        cfg.signal.beta_length = self.beta_length;
        cfg.signal.sigma_eps = self.sigma;
        cfg.validate()?;
        Ok(cfg)
    }

    fn sampler(&self, cfg: &ExperimentConfig) -> Result<(InstanceSampler, Scales), HarnessError> {
        let a = Arc::new(cfg.a_spec(self.m)?);
        let b = Arc::new(cfg.b_spec(self.n, self.tau_b, self.seed)?);
        let scales = Scales::from_specs(&a, &b)?;
        Ok((InstanceSampler::new(a, b, Factorization::Cholesky)?, scales))
    }
}

/// Observed data plus what the penalties need.
struct Loaded {
    x: Array2<f64>,
    y: Array1<f64>,
    beta_star: Array1<f64>,
    d: usize,
    trace_a: f64,
    scales: Scales,
}

fn load(input: &InputArgs) -> Result<Loaded, HarnessError> {
    if let Some(dir) = &input.instance {
        return load_dir(dir);
    }
    let ma = &input.model;
    let cfg = ma.config()?;
    let (sampler, scales) = ma.sampler(&cfg)?;
    let beta = gen_beta(ma.m, ma.d, ma.beta_length, ma.seed)?;
    let inst = sampler.sample(&beta, ma.d, ma.sigma, EntryDist::Gaussian, ma.seed)?;
    Ok(Loaded {
        trace_a: inst.a_spec.trace(),
        x: inst.x,
        y: inst.y,
        beta_star: inst.beta_star,
        d: ma.d,
        scales,
    })
}

fn load_dir(dir: &Path) -> Result<Loaded, HarnessError> {
    let text = std::fs::read_to_string(dir.join("meta.json"))?;
    let meta: InstanceMeta = serde_json::from_str(&text).map_err(|e| HarnessError::Config {
        key: "meta.json".into(),
        msg: e.to_string(),
    })?;
    Ok(Loaded {
        x: io::read_matrix(&dir.join("X.csv"))?,
        y: io::read_vector(&dir.join("y.csv"))?,
        beta_star: io::read_vector(&dir.join("beta_star.csv"))?,
        d: meta.d,
        trace_a: meta.trace_a,
        scales: Scales {
            lambda_max_a: meta.lambda_max_a,
            lambda_min_a: meta.lambda_min_a,
            a_max: meta.a_max,
            b_norm: meta.b_norm,
            tau_b: meta.tau_b,
        },
    })
}

fn errors(beta_hat: &Array1<f64>, beta_star: &Array1<f64>) -> (f64, f64) {
    let diff = beta_hat - beta_star;
    (
        norm_l1(diff.view()) / norm_l1(beta_star.view()),
        norm_l2(diff.view()) / norm_l2(beta_star.view()),
    )
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn run(cli: Cli) -> Result<u8, HarnessError> {
    let workers = cli.workers.filter(|&w| w > 0).unwrap_or_else(default_workers);
    match cli.command {
        Command::Simulate { model, out } => {
            let cfg = model.config()?;
            let (sampler, _) = model.sampler(&cfg)?;
            let beta = gen_beta(model.m, model.d, model.beta_length, model.seed)?;
            let inst = sampler.sample(&beta, model.d, model.sigma, EntryDist::Gaussian, model.seed)?;
            inst.write_dir(&out)?;
            print_json(&json!({ "out": out, "n": model.n, "m": model.m, "d": model.d }));
            Ok(0)
        }
        Command::Lasso {
            input,
            f,
            lambda,
            zeta_mult,
            r_mult,
            max_iters,
            trace_out,
        } => {
            let data = load(&input)?;
            let (n, m) = data.x.dim();
            let tau_hat = estimate_tau_b(data.x.view(), data.trace_a);
            let pair = build_surrogate(data.x.view(), data.y.view(), tau_hat)?;
            let beta_norm = norm_l2(data.beta_star.view());
            let p = calib::penalties(&data.scales, 0.1, f, tau_hat, beta_norm, m, n);
            let lambda = lambda.unwrap_or(p.lasso_lambda);
            let radius = calib::radius(r_mult, beta_norm, data.d);
            let zeta = ZetaChoice::Multiplier(zeta_mult).resolve(data.scales.lambda_max_a, data.scales.lambda_min_a);
            let mut gd = GdConfig::new(lambda, radius, zeta);
            gd.max_iters = max_iters;
            gd.record_trace = trace_out.is_some();
            let out = solver_gd::solve_with_status(&pair, &gd, Some(data.beta_star.view()))?;
            if let Some(path) = trace_out {
                out.trace.write_csv(std::fs::File::create(path)?)?;
            }
            let (rel_l1, rel_l2) = errors(&out.beta_hat, &data.beta_star);
            print_json(&json!({
                "tau_hat_b": tau_hat,
                "lambda": lambda,
                "radius": radius,
                "zeta": zeta,
                "status": out.trace.status,
                "iterations": out.trace.iterations_run,
                "rel_l1_error": rel_l1,
                "rel_l2_error": rel_l2,
                "beta_hat": out.beta_hat.to_vec(),
            }));
            let ok = out.trace.status == GdStatus::Converged;
            Ok(if cli.strict && !ok { EXIT_NONCONVERGED } else { 0 })
        }
        Command::Conic {
            input,
            f,
            mu,
            omega,
            tol,
            max_iters,
        } => {
            let data = load(&input)?;
            let (n, m) = data.x.dim();
            let tau_hat = estimate_tau_b(data.x.view(), data.trace_a);
            let pair = build_surrogate(data.x.view(), data.y.view(), tau_hat)?;
            let beta_norm = norm_l2(data.beta_star.view());
            let p = calib::penalties(&data.scales, 0.1, f, tau_hat, beta_norm, m, n);
            let mut cfg = ConicConfig::new(mu.unwrap_or(p.conic_mu), omega.unwrap_or(p.omega));
            cfg.tol_feas = tol;
            cfg.tol_gap = tol;
            cfg.max_iters = max_iters;
            let sol = solve_conic(&pair, &cfg)?;
            let beta_hat = sol.beta();
            let (rel_l1, rel_l2) = errors(&beta_hat, &data.beta_star);
            print_json(&json!({
                "tau_hat_b": tau_hat,
                "mu": cfg.mu,
                "omega": cfg.omega,
                "t_hat": sol.t_hat,
                "objective": sol.objective,
                "feas_residual": sol.feas_residual,
                "iterations": sol.iterations,
                "converged": sol.converged,
                "rel_l1_error": rel_l1,
                "rel_l2_error": rel_l2,
                "beta_hat": sol.beta_hat,
            }));
            Ok(if cli.strict && !sol.converged { EXIT_NONCONVERGED } else { 0 })
        }
        Command::Sweep { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let dir = out.unwrap_or_else(|| cfg.run.output_dir.clone());
            let rows = run_sweep(&cfg, &dir, workers)?;
            let nonconverged: usize = rows.iter().map(|r| r.nonconverged).sum();
            let failures: usize = rows.iter().map(|r| r.failures).sum();
            print_json(&json!({
                "out": dir,
                "rows": rows.len(),
                "failures": failures,
                "nonconverged": nonconverged,
            }));
            Ok(if cli.strict && nonconverged + failures > 0 { EXIT_NONCONVERGED } else { 0 })
        }
        Command::Trace { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let dir = out.unwrap_or_else(|| cfg.run.output_dir.clone());
            let runs = run_iterate_trace(&cfg, &dir, workers)?;
            let unconverged = runs.iter().filter(|r| !r.trace.converged).count();
            print_json(&json!({ "out": dir, "runs": runs.len(), "nonconverged": unconverged }));
            Ok(if cli.strict && unconverged > 0 { EXIT_NONCONVERGED } else { 0 })
        }
        Command::Diagnose {
            gamma,
            alpha,
            tau,
            smoothness,
            trials,
            seed,
        } => {
            let g = io::read_matrix(&gamma)?;
            let lower = falsify_lower_re(g.view(), alpha, tau, trials, seed)?;
            let upper = smoothness
                .map(|s| falsify_upper_re(g.view(), s, tau, trials, seed))
                .transpose()?;
            print_json(&json!({ "lower_re": lower, "upper_re": upper }));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
