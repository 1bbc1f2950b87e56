//! Penalty calibration used by the experiments.
//!
//! With `r = sqrt(log m / n)`:
//! `omega = c_omega D0 r`,
//! Lasso `lambda = f D0' hat_tau^{1/2} ||beta*|| r + omega`,
//! conic `mu = f D0' hat_tau^{1/2} r` with the conic `lambda = 1`,
//! where `D0 = tau_B^{1/2} + a_max^{1/2}` and `D0' = ||B||^{1/2} + a_max^{1/2}`.

use eiv_core::{CovarianceSpec, Result};
use serde::{Deserialize, Serialize};

/// Population quantities of `(A, B)` that the penalties depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub lambda_max_a: f64,
    pub lambda_min_a: f64,
    pub a_max: f64,
    pub b_norm: f64,
    pub tau_b: f64,
}

impl Scales {
    pub fn from_specs(a: &CovarianceSpec, b: &CovarianceSpec) -> Result<Self> {
        Ok(Self {
            lambda_max_a: a.lambda_max()?,
            lambda_min_a: a.lambda_min()?,
            a_max: a.max_diag(),
            b_norm: b.lambda_max()?,
            tau_b: b.trace() / b.dim() as f64,
        })
    }

    pub fn d0(&self) -> f64 {
        self.tau_b.sqrt() + self.a_max.sqrt()
    }

    pub fn d0_prime(&self) -> f64 {
        self.b_norm.sqrt() + self.a_max.sqrt()
    }
}

pub fn root_log_m_over_n(m: usize, n: usize) -> f64 {
    ((m as f64).ln() / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    pub omega: f64,
    pub lasso_lambda: f64,
    pub conic_mu: f64,
}

pub fn penalties(s: &Scales, omega_factor: f64, f: f64, tau_hat: f64, beta_norm: f64, m: usize, n: usize) -> Penalties {
    let r = root_log_m_over_n(m, n);
    let omega = omega_factor * s.d0() * r;
    let conic_mu = f * s.d0_prime() * tau_hat.max(0.0).sqrt() * r;
    Penalties {
        omega,
        lasso_lambda: conic_mu * beta_norm + omega,
        conic_mu,
    }
}

/// `R = c ||beta*|| sqrt(d)`.
pub fn radius(r_mult: f64, beta_norm: f64, d: usize) -> f64 {
    r_mult * beta_norm * (d as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_formulas() {
        let s = Scales {
            lambda_max_a: 2.0,
            lambda_min_a: 0.5,
            a_max: 1.0,
            b_norm: 0.64,
            tau_b: 0.25,
        };
        assert!((s.d0() - 1.5).abs() < 1e-15);
        assert!((s.d0_prime() - 1.8).abs() < 1e-15);
        let (m, n) = (100, 400);
        let r = (100f64.ln() / 400.0).sqrt();
        let p = penalties(&s, 0.1, 0.5, 0.36, 5.0, m, n);
        assert!((p.omega - 0.15 * r).abs() < 1e-15);
        assert!((p.conic_mu - 0.5 * 1.8 * 0.6 * r).abs() < 1e-15);
        assert!((p.lasso_lambda - (0.54 * 5.0 * r + 0.15 * r)).abs() < 1e-14);
        assert_eq!(radius(2.0, 5.0, 9), 30.0);
    }
}
