//! Calibration scalars: rates, regularity constants, penalty levels and the
//! contraction quantities of composite gradient descent.
//!
//! All functions here are pure. The absolute constants `C`, `C0` default to
//! one, `K = 1` corresponds to standard Gaussian entries and `M_eps = 1` to
//! `N(0, 1)` noise.

use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceSpec, Extremal};
use crate::error::{EivError, Result};

/// Eigenvalues of `A` below this fraction of `lambda_max(A)` count as zero.
pub const DEGENERATE_EIG_RATIO: f64 = 1e-10;

/// Absolute constants entering the rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// psi_2 norm of the design entries.
    pub k: f64,
    pub c0: f64,
    /// psi_2 bound on the regression noise.
    pub m_eps: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            k: 1.0,
            c0: 1.0,
            m_eps: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateScalars {
    /// `C0 K sqrt(log m / n)`.
    pub rho_n: f64,
    /// `2 C0 K^2 sqrt(log m / (m n))`.
    pub r_mm: f64,
    pub k: f64,
    pub c0: f64,
    pub m_eps: f64,
    pub m: f64,
    pub n: f64,
    pub log_m: f64,
}

impl RateScalars {
    /// `sqrt(log m / n)`.
    pub fn sqrt_log_m_over_n(&self) -> f64 {
        (self.log_m / self.n).sqrt()
    }
}

pub fn compute_rates(m: usize, n: usize, cfg: &RateConfig) -> Result<RateScalars> {
    rates_from_real(m as f64, n as f64, cfg)
}

/// [`compute_rates`] for real-valued dimensions (useful for closed-form checks).
pub fn rates_from_real(m: f64, n: f64, cfg: &RateConfig) -> Result<RateScalars> {
    if !(m >= 2.0) {
        return Err(EivError::invalid(format!("need m >= 2 so that log m > 0, got {m}")));
    }
    if !(n >= 1.0) {
        return Err(EivError::invalid(format!("need n >= 1, got {n}")));
    }
    if !(cfg.k > 0.0 && cfg.c0 > 0.0 && cfg.m_eps > 0.0) {
        return Err(EivError::invalid("K, C0 and M_eps must be positive"));
    }
    let log_m = m.ln();
    Ok(RateScalars {
        rho_n: cfg.c0 * cfg.k * (log_m / n).sqrt(),
        r_mm: 2.0 * cfg.c0 * cfg.k * cfg.k * (log_m / (m * n)).sqrt(),
        k: cfg.k,
        c0: cfg.c0,
        m_eps: cfg.m_eps,
        m,
        n,
        log_m,
    })
}

/// Options for [`compute_regularity`].
#[derive(Debug, Clone, Copy)]
pub struct RegularityOptions {
    /// The absolute constant `C` in the sparsity rule and in `M_A`.
    pub c: f64,
    /// Support budget for sparse eigenvalues (see [`CovarianceSpec::sparse_eigenvalue`]).
    pub sparse_budget: usize,
    pub seed: u64,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            sparse_budget: 50_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityConstants {
    pub m: usize,
    pub n: usize,
    pub lambda_min_a: f64,
    pub lambda_max_a: f64,
    /// `||B||_2`.
    pub lambda_max_b: f64,
    pub a_max: f64,
    pub b_max: f64,
    /// `tr(B) / n`.
    pub tau_b: f64,
    pub s0: usize,
    /// Whether every sparse eigenvalue used in the `s0` search was exact.
    pub s0_exact: bool,
    pub m_a: f64,
    pub m_plus: f64,
    /// `rho_max(s0, A) + tau_B`.
    pub vp_s0: f64,
    pub vp_s0_plus1: f64,
    /// Lower-RE curvature `(5/8) lambda_min(A)`.
    pub alpha: f64,
    /// Lower-RE tolerance `(lambda_min(A) - alpha) / s0`.
    pub tau_tol: f64,
    /// Upper-RE smoothness `(11/8) lambda_max(A)`.
    pub smoothness: f64,
    pub d0: f64,
    pub d0_prime: f64,
    pub d1: f64,
    pub d2: f64,
    pub d_ora: f64,
    /// `sqrt(tau_B) + D_ora / sqrt(m)`.
    pub tau_b_plus_half: f64,
    /// Effective rank `tr(B) / ||B||_2` (zero when `B = 0`).
    pub effective_rank_b: f64,
    pub c: f64,
}

/// Regularity constants of the pair `(A, B)` at sample size `n`.
///
/// `s0` is the largest `s` in `[1, m]` with
/// `sqrt(s) (rho_max(s, A) + tau_B) <= lambda_min(A) / (32 C) sqrt(n / log m)`,
/// found by a linear scan with early exit; it is clamped to 1 when no `s`
/// qualifies.
pub fn compute_regularity(
    a: &CovarianceSpec,
    b: &CovarianceSpec,
    n: usize,
    opts: &RegularityOptions,
) -> Result<RegularityConstants> {
    let m = a.dim();
    if m < 2 {
        return Err(EivError::invalid(format!("need m >= 2, got {m}")));
    }
    if b.dim() != n {
        return Err(EivError::DimensionMismatch {
            what: "dim(B) must equal n",
            expected: n,
            got: b.dim(),
        });
    }
    if !(opts.c > 0.0) {
        return Err(EivError::invalid("C must be positive"));
    }
    let eig = a.eigen()?;
    let lambda_max_a = eig.lambda_max();
    let lambda_min_a = eig.lambda_min();
    if lambda_min_a <= DEGENERATE_EIG_RATIO * lambda_max_a.abs() {
        return Err(EivError::DegenerateCurvature(lambda_min_a));
    }
    let lambda_max_b = if b.matrix().iter().all(|&x| x == 0.0) {
        0.0
    } else {
        b.lambda_max()?
    };
    let tau_b = b.trace() / n as f64;
    let log_m = (m as f64).ln();
    let rhs = lambda_min_a / (32.0 * opts.c) * (n as f64 / log_m).sqrt();

    let mut exact_all = true;
    let mut vp = Vec::with_capacity(8);
    let mut running = f64::NEG_INFINITY;
    let mut s0 = 0;
    for s in 1..=m {
        let (rho, exact) = a.sparse_eigenvalue(s, Extremal::Max, opts.sparse_budget, opts.seed)?;
        exact_all &= exact;
        // rho_max(s, A) is nondecreasing in s; enforce it for sampled bounds.
        running = running.max(rho);
        let phi = running + tau_b;
        vp.push(phi);
        if (s as f64).sqrt() * phi <= rhs {
            s0 = s;
        } else {
            break;
        }
    }
    let s0 = s0.max(1);
    let vp_s0 = vp[s0 - 1];
    let vp_s0_plus1 = if s0 < m {
        match vp.get(s0) {
            Some(&v) => v,
            None => {
                let (rho, exact) = a.sparse_eigenvalue(s0 + 1, Extremal::Max, opts.sparse_budget, opts.seed)?;
                exact_all &= exact;
                rho.max(vp_s0 - tau_b) + tau_b
            }
        }
    } else {
        vp_s0
    };

    let a_max = a.max_diag();
    let b_max = b.max_diag();
    let alpha = 0.625 * lambda_min_a;
    let tau_tol = (lambda_min_a - alpha) / s0 as f64;
    let d_ora = 2.0 * (lambda_max_a.sqrt() + lambda_max_b.sqrt());
    Ok(RegularityConstants {
        m,
        n,
        lambda_min_a,
        lambda_max_a,
        lambda_max_b,
        a_max,
        b_max,
        tau_b,
        s0,
        s0_exact: exact_all,
        m_a: 64.0 * opts.c * vp_s0 / lambda_min_a,
        m_plus: 32.0 * opts.c * vp_s0_plus1 / lambda_min_a,
        vp_s0,
        vp_s0_plus1,
        alpha,
        tau_tol,
        smoothness: 1.375 * lambda_max_a,
        d0: tau_b.sqrt() + a_max.sqrt(),
        d0_prime: lambda_max_b.sqrt() + a_max.sqrt(),
        d1: a.frobenius() / (m as f64).sqrt() + b.frobenius() / (n as f64).sqrt(),
        d2: 2.0 * (lambda_max_a + lambda_max_b),
        d_ora,
        tau_b_plus_half: tau_b.sqrt() + d_ora / (m as f64).sqrt(),
        effective_rank_b: if lambda_max_b > 0.0 { b.trace() / lambda_max_b } else { 0.0 },
        c: opts.c,
    })
}

/// Which penalty calibration to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyVariant {
    /// `psi = C0 D2 K (K ||beta*|| + M_eps)`, `lambda = 4 psi sqrt(log m / n)`.
    Basic,
    /// `psi = C0 D0' K (M_eps + tau_B^{+/2} K ||beta*||)`, `lambda = 2 psi sqrt(log m / n)`.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPlan {
    pub variant: PenaltyVariant,
    pub psi_basic: f64,
    pub psi_oracle: f64,
    pub lambda_lasso: f64,
    /// `2 D2 K rho_n`.
    pub mu_basic: f64,
    /// `D0 M_eps rho_n`.
    pub omega: f64,
    /// `D0' tilde_tau_B^{1/2} K rho_n`.
    pub mu_oracle: f64,
    /// `hat_tau_B^{1/2} + C6 r_mm^{1/2}`.
    pub tilde_tau_b_half: f64,
    pub c6: f64,
    pub beta_norm_bound: f64,
    /// Set when `C6 < D_ora`, below the recommended range.
    pub c6_below_d_ora: bool,
}

impl PenaltyPlan {
    /// `(mu, omega)` for the conic estimator under this plan's variant.
    pub fn conic_parameters(&self) -> (f64, f64) {
        match self.variant {
            PenaltyVariant::Basic => (self.mu_basic, self.omega),
            PenaltyVariant::Oracle => (self.mu_oracle, self.omega),
        }
    }
}

pub fn compute_penalty_plan(
    reg: &RegularityConstants,
    rates: &RateScalars,
    beta_norm: f64,
    tau_hat_b: f64,
    c6: f64,
    variant: PenaltyVariant,
) -> Result<PenaltyPlan> {
    for (name, v) in [("beta_norm", beta_norm), ("tau_hat_B", tau_hat_b), ("C6", c6)] {
        if !v.is_finite() || v < 0.0 {
            return Err(EivError::invalid(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    let (k, c0, m_eps) = (rates.k, rates.c0, rates.m_eps);
    let psi_basic = c0 * reg.d2 * k * (k * beta_norm + m_eps);
    let psi_oracle = c0 * reg.d0_prime * k * (m_eps + reg.tau_b_plus_half * k * beta_norm);
    let root = rates.sqrt_log_m_over_n();
    let lambda_lasso = match variant {
        PenaltyVariant::Basic => 4.0 * psi_basic * root,
        PenaltyVariant::Oracle => 2.0 * psi_oracle * root,
    };
    let tilde_tau_b_half = tau_hat_b.sqrt() + c6 * rates.r_mm.sqrt();
    Ok(PenaltyPlan {
        variant,
        psi_basic,
        psi_oracle,
        lambda_lasso,
        mu_basic: 2.0 * reg.d2 * k * rates.rho_n,
        omega: reg.d0 * m_eps * rates.rho_n,
        mu_oracle: reg.d0_prime * tilde_tau_b_half * k * rates.rho_n,
        tilde_tau_b_half,
        c6,
        beta_norm_bound: beta_norm,
        c6_below_d_ora: c6 < reg.d_ora,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionPlan {
    pub alpha_l: f64,
    pub alpha_u: f64,
    pub tau_l: f64,
    pub tau_u: f64,
    pub zeta: f64,
    /// `64 d tau_u`.
    pub nu: f64,
    /// `alpha_l - 64 d tau_l`.
    pub alpha_l_bar: f64,
    /// `128 d tau_u / alpha_l_bar`.
    pub z: f64,
    pub kappa: f64,
    pub xi: f64,
    pub d: usize,
    pub radius: f64,
}

impl ContractionPlan {
    /// Builds the plan from raw RSC/RSM parameters, rejecting the regimes
    /// where the composite iteration is not guaranteed to contract.
    pub fn new(
        alpha_l: f64,
        alpha_u: f64,
        tau_l: f64,
        tau_u: f64,
        d: usize,
        zeta: f64,
        radius: f64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(EivError::invalid("sparsity d must be at least 1"));
        }
        if !(alpha_l > 0.0 && alpha_u > 0.0 && tau_l >= 0.0 && tau_u >= 0.0 && radius > 0.0) {
            return Err(EivError::invalid("need alpha_l, alpha_u, R > 0 and tau_l, tau_u >= 0"));
        }
        if !(zeta >= alpha_u) {
            return Err(EivError::invalid(format!("step parameter zeta = {zeta} is below alpha_u = {alpha_u}")));
        }
        let df = d as f64;
        let nu = 64.0 * df * tau_u;
        let alpha_l_bar = alpha_l - 64.0 * df * tau_l;
        if alpha_l_bar <= 0.0 {
            return Err(EivError::InfeasibleContraction(format!(
                "alpha_l - 64 d tau_l = {alpha_l_bar:.4e} <= 0"
            )));
        }
        let z = 128.0 * df * tau_u / alpha_l_bar;
        if z >= 1.0 {
            return Err(EivError::InfeasibleContraction(format!("z = 128 d tau_u / alpha_l_bar = {z:.4e} >= 1")));
        }
        let q = alpha_l_bar / (4.0 * zeta);
        let kappa = (1.0 - q + z) / (1.0 - z);
        if kappa >= 1.0 {
            return Err(EivError::InfeasibleContraction(format!("kappa = {kappa:.6} >= 1")));
        }
        let xi = 2.0 * tau_l.max(tau_u) * (q + 2.0 * z + 5.0) / (1.0 - z);
        Ok(Self {
            alpha_l,
            alpha_u,
            tau_l,
            tau_u,
            zeta,
            nu,
            alpha_l_bar,
            z,
            kappa,
            xi,
            d,
            radius,
        })
    }

    /// Smallest penalty allowed by the contraction argument: `16 R xi / (1 - kappa)`.
    pub fn lambda_floor(&self) -> f64 {
        16.0 * self.radius * self.xi / (1.0 - self.kappa)
    }
}

/// Contraction plan with `alpha_l = (5/8) lambda_min(A)`,
/// `alpha_u = (11/8) lambda_max(A)` and `tau_l = tau_u` equal to the
/// Lower-RE tolerance of `reg`.
pub fn compute_contraction(reg: &RegularityConstants, d: usize, zeta: f64, radius: f64) -> Result<ContractionPlan> {
    ContractionPlan::new(reg.alpha, reg.smoothness, reg.tau_tol, reg.tau_tol, d, zeta, radius)
}

/// Iteration count `ceil(T*(delta))` after which the excess objective is
/// below `delta^2`, floored at one.
pub fn iterations_to_tolerance(plan: &ContractionPlan, phi_gap_0: f64, lambda: f64, delta_sq: f64) -> Result<usize> {
    if !(plan.kappa > 0.0 && plan.kappa < 1.0) {
        return Err(EivError::invalid(format!("kappa must lie in (0,1), got {}", plan.kappa)));
    }
    if !(delta_sq > 0.0 && phi_gap_0 > 0.0 && lambda > 0.0) {
        return Err(EivError::invalid("phi gap, lambda and delta^2 must be positive"));
    }
    let ratio = lambda * plan.radius / delta_sq;
    if !(ratio > 1.0) {
        return Err(EivError::invalid(format!("need lambda R / delta^2 > 1, got {ratio}")));
    }
    let inv_log = 1.0 / (1.0 / plan.kappa).ln();
    let t = 2.0 * (phi_gap_0 / delta_sq).ln() * inv_log + ratio.ln().ln() * (1.0 + std::f64::consts::LN_2 * inv_log);
    // Guard against 5.000000000001 rounding up.
    let t = (t - 1e-9).ceil();
    Ok(if t < 1.0 { 1 } else { t as usize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::f64::consts::E;

    #[test]
    fn rates_closed_forms() {
        let cfg = RateConfig::default();
        let r = rates_from_real(E * E, 4.0, &cfg).unwrap();
        assert!((r.rho_n - 0.5f64.sqrt()).abs() < 1e-12);
        let r = rates_from_real(E * E, 2.0, &cfg).unwrap();
        assert!((r.rho_n - 1.0).abs() < 1e-12);
        let r = compute_rates(1024, 1024, &cfg).unwrap();
        let want = 2.0 * (1024f64).ln().sqrt() / 1024.0;
        assert!((r.r_mm - want).abs() < 1e-15);
        assert!((r.r_mm - 0.005145).abs() < 5e-6);
        assert!(compute_rates(1, 10, &cfg).is_err());
    }

    #[test]
    fn rates_monotone() {
        let cfg = RateConfig::default();
        for m in [3usize, 10, 100] {
            for n in [1usize, 5, 50] {
                let r = compute_rates(m, n, &cfg).unwrap();
                let rn = compute_rates(m, n + 1, &cfg).unwrap();
                let rm = compute_rates(m + 1, n, &cfg).unwrap();
                assert!(rn.rho_n < r.rho_n && rn.r_mm < r.r_mm);
                assert!(rm.rho_n > r.rho_n);
            }
        }
    }

    #[test]
    fn r_mm_increases_in_m_where_log_m_over_m_does() {
        // log(m)/m decreases for m >= 3, so r_mm falls with m there; the
        // increasing direction only holds for rho_n.
        let cfg = RateConfig::default();
        let a = compute_rates(3, 10, &cfg).unwrap();
        let b = compute_rates(30, 10, &cfg).unwrap();
        assert!(b.rho_n > a.rho_n);
        assert!(b.r_mm < a.r_mm);
    }

    #[test]
    fn identity_s0_rule() {
        let opts = RegularityOptions {
            c: 1.0 / 32.0,
            ..Default::default()
        };
        for &(m, n) in &[(50usize, 100usize), (20, 400), (64, 30)] {
            let a = CovarianceSpec::identity(m);
            let b = CovarianceSpec::zeros(n);
            let reg = compute_regularity(&a, &b, n, &opts).unwrap();
            let want = ((n as f64 / (m as f64).ln()).floor() as usize).clamp(1, m);
            assert_eq!(reg.s0, want, "m={m} n={n}");
            assert!((reg.alpha - 0.625).abs() < 1e-15);
            assert!((reg.tau_tol - 0.375 / reg.s0 as f64).abs() < 1e-15);
            assert_eq!(reg.tau_b, 0.0);
        }
    }

    #[test]
    fn degenerate_a_rejected() {
        let mut m = Array2::<f64>::eye(3);
        m[[2, 2]] = 0.0;
        let a = CovarianceSpec::from_matrix(m).unwrap();
        let b = CovarianceSpec::zeros(5);
        assert!(matches!(
            compute_regularity(&a, &b, 5, &RegularityOptions::default()),
            Err(EivError::DegenerateCurvature(_))
        ));
    }

    #[test]
    fn derived_constants_on_identity() {
        let a = CovarianceSpec::identity(16);
        let b = CovarianceSpec::identity(9).scaled(0.25).unwrap();
        let reg = compute_regularity(&a, &b, 9, &RegularityOptions::default()).unwrap();
        assert!((reg.tau_b - 0.25).abs() < 1e-15);
        assert!((reg.d0 - 1.5).abs() < 1e-12);
        assert!((reg.d0_prime - 1.5).abs() < 1e-12);
        assert!((reg.d2 - 2.5).abs() < 1e-12);
        assert!((reg.d_ora - 3.0).abs() < 1e-12);
        assert!((reg.tau_b_plus_half - (0.5 + 0.75)).abs() < 1e-12);
        assert!((reg.d1 - (1.0 + 0.25)).abs() < 1e-12);
        assert!((reg.effective_rank_b - 9.0).abs() < 1e-9);
        assert!(reg.d0 <= reg.d0_prime + 1e-15);
        assert!((reg.m_a - 64.0 * reg.vp_s0).abs() < 1e-12);
    }

    fn plan_inputs() -> (RegularityConstants, RateScalars) {
        let a = CovarianceSpec::identity(16);
        let b = CovarianceSpec::zeros(8);
        let reg = compute_regularity(&a, &b, 8, &RegularityOptions::default()).unwrap();
        let rates = compute_rates(16, 8, &RateConfig::default()).unwrap();
        (reg, rates)
    }

    #[test]
    fn penalty_zero_signal_and_noise() {
        let (reg, _) = plan_inputs();
        let rates = rates_from_real(
            16.0,
            8.0,
            &RateConfig {
                m_eps: f64::MIN_POSITIVE,
                ..Default::default()
            },
        )
        .unwrap();
        let p = compute_penalty_plan(&reg, &rates, 0.0, 0.0, 1.0, PenaltyVariant::Basic).unwrap();
        assert!(p.psi_basic < 1e-300 && p.lambda_lasso < 1e-300);
    }

    #[test]
    fn penalty_hand_values() {
        let (mut reg, rates) = plan_inputs();
        reg.d2 = 1.0;
        let p = compute_penalty_plan(&reg, &rates, 0.0, 0.0, 2.0, PenaltyVariant::Basic).unwrap();
        assert!((p.psi_basic - 1.0).abs() < 1e-15);
        assert!((p.lambda_lasso - 4.0 * rates.sqrt_log_m_over_n()).abs() < 1e-15);

        let mut rates2 = rates;
        rates2.r_mm = 0.01;
        let p = compute_penalty_plan(&reg, &rates2, 5.0, 0.0, 2.0, PenaltyVariant::Oracle).unwrap();
        assert!((p.tilde_tau_b_half - 0.2).abs() < 1e-15);
        assert!((p.lambda_lasso - 2.0 * p.psi_oracle * rates.sqrt_log_m_over_n()).abs() < 1e-15);
        assert!((p.mu_oracle - reg.d0_prime * 0.2 * rates.rho_n).abs() < 1e-15);
        assert!((p.omega - reg.d0 * rates.rho_n).abs() < 1e-15);
        assert!((p.mu_basic - 2.0 * reg.d2 * rates.rho_n).abs() < 1e-15);
        assert!(compute_penalty_plan(&reg, &rates, f64::NAN, 0.0, 1.0, PenaltyVariant::Basic).is_err());
    }

    #[test]
    fn contraction_hand_values() {
        let p = ContractionPlan::new(1.0, 1.0, 0.0, 0.0, 3, 1.0, 1.0).unwrap();
        assert_eq!(p.nu, 0.0);
        assert_eq!(p.z, 0.0);
        assert!((p.kappa - 0.75).abs() < 1e-15);
        let p = ContractionPlan::new(1.0, 1.0, 0.0, 0.0, 3, 4.0, 1.0).unwrap();
        assert!((p.kappa - 0.9375).abs() < 1e-15);
        let err = ContractionPlan::new(1.0, 1.0, 0.0, 0.01, 1, 1.0, 1.0);
        assert!(matches!(err, Err(EivError::InfeasibleContraction(_))));
        assert!(ContractionPlan::new(1.0, 2.0, 0.0, 0.0, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn kappa_grows_with_zeta_and_xi_bound() {
        let mut prev = 0.0;
        for i in 0..50 {
            let zeta = 1.0 + 0.2 * i as f64;
            let p = ContractionPlan::new(1.0, 1.0, 1e-5, 1e-5, 5, zeta, 1.0).unwrap();
            assert!(p.kappa > prev);
            assert!(p.xi > 10.0 * 1e-5);
            prev = p.kappa;
        }
    }

    #[test]
    fn t_star_hand_values() {
        let base = ContractionPlan::new(1.0, 1.0, 0.0, 0.0, 1, 1.0, 1.0).unwrap();
        let mut plan = base.clone();
        plan.kappa = 0.5;
        // 2 log 4 / log 2 + log log e^e (1 + log 2 / log 2) = 4 + 2
        let delta_sq = 0.1;
        let lambda = E.powf(E) * delta_sq / plan.radius;
        assert_eq!(iterations_to_tolerance(&plan, 4.0 * delta_sq, lambda, delta_sq).unwrap(), 6);
        // both terms vanish
        let lambda = E * delta_sq;
        assert_eq!(iterations_to_tolerance(&plan, delta_sq, lambda, delta_sq).unwrap(), 1);
        // kappa = 1/e: ceil(log log(ratio) (1 + log 2))
        plan.kappa = 1.0 / E;
        let ratio: f64 = 1e6;
        let want = (ratio.ln().ln() * (1.0 + std::f64::consts::LN_2)).ceil() as usize;
        assert_eq!(iterations_to_tolerance(&plan, delta_sq, ratio * delta_sq, delta_sq).unwrap(), want);
        plan.kappa = 1.0;
        assert!(iterations_to_tolerance(&plan, 1.0, 10.0, 0.1).is_err());
    }
}
