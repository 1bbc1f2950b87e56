//! Bias-corrected moments `(Gamma_hat, gamma_hat)` and the corrected
//! quadratic loss.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{check_dim, EivError, Result};
use crate::linalg;

/// Estimate of `tau_B = tr(B) / n`: `(||X||_F^2 - n tr(A))_+ / (m n)`.
///
/// The clamp is applied to the trace estimate before dividing by `n`.
pub fn estimate_tau_b(x: ArrayView2<'_, f64>, trace_a: f64) -> f64 {
    let (n, m) = x.dim();
    let fro2: f64 = x.iter().map(|v| v * v).sum();
    let tr_b = ((fro2 - n as f64 * trace_a) / m as f64).max(0.0);
    tr_b / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogatePair {
    /// `X^T X / n - tau_hat_B I`, bit-wise symmetric.
    pub gamma_hat: Array2<f64>,
    /// `X^T y / n`.
    pub gamma_vec: Array1<f64>,
    pub tau_hat_b: f64,
    pub n: usize,
    pub m: usize,
}

pub fn build_surrogate(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, tau_hat_b: f64) -> Result<SurrogatePair> {
    let (n, m) = x.dim();
    check_dim("len(y) must equal rows(X)", n, y.len())?;
    if !(tau_hat_b >= 0.0 && tau_hat_b.is_finite()) {
        return Err(EivError::invalid(format!("tau_hat_B must be finite and nonnegative, got {tau_hat_b}")));
    }
    let inv_n = 1.0 / n as f64;
    let mut gamma_hat = linalg::gram(x);
    gamma_hat.mapv_inplace(|v| v * inv_n);
    for i in 0..m {
        gamma_hat[[i, i]] -= tau_hat_b;
    }
    linalg::symmetrize(&mut gamma_hat);
    let gamma_vec = x.t().dot(&y) * inv_n;
    Ok(SurrogatePair {
        gamma_hat,
        gamma_vec,
        tau_hat_b,
        n,
        m,
    })
}

impl SurrogatePair {
    /// `(1/2 b^T Gamma b - gamma^T b, Gamma b - gamma)`.
    pub fn loss_and_gradient(&self, beta: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
        check_dim("len(beta)", self.m, beta.len())?;
        let mut grad = Array1::zeros(self.m);
        linalg::matvec_into(self.gamma_hat.view(), beta, &mut grad);
        let value = 0.5 * grad.dot(&beta) - self.gamma_vec.dot(&beta);
        grad -= &self.gamma_vec;
        Ok((value, grad))
    }

    /// `||gamma_hat - Gamma_hat beta*||_inf`.
    pub fn oracle_residual(&self, beta_star: ArrayView1<'_, f64>) -> Result<f64> {
        let (_, grad) = self.loss_and_gradient(beta_star)?;
        Ok(linalg::norm_inf(grad.view()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn tau_estimator_examples() {
        assert_eq!(estimate_tau_b(Array2::<f64>::eye(2).view(), 2.0), 0.0);
        assert!((estimate_tau_b(Array2::<f64>::ones((2, 2)).view(), 1.0) - 0.5).abs() < 1e-15);
        // ||X||_F^2 = 4 = n tr(A)
        assert_eq!(estimate_tau_b(Array2::<f64>::ones((2, 2)).view(), 2.0), 0.0);
    }

    #[test]
    fn surrogate_hand_example() {
        let x = Array2::<f64>::eye(2);
        let p = build_surrogate(x.view(), array![1.0, 0.0].view(), 0.0).unwrap();
        assert_eq!(p.gamma_hat, Array2::<f64>::eye(2) * 0.5);
        assert_eq!(p.gamma_vec, array![0.5, 0.0]);
        assert!(build_surrogate(x.view(), array![1.0].view(), 0.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let p = SurrogatePair {
            gamma_hat: Array2::eye(2),
            gamma_vec: array![1.0, 0.0],
            tau_hat_b: 0.0,
            n: 1,
            m: 2,
        };
        let (v, g) = p.loss_and_gradient(array![0.0, 0.0].view()).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, array![-1.0, 0.0]);
        assert_eq!(p.oracle_residual(array![0.0, 0.0].view()).unwrap(), 1.0);
        assert_eq!(p.oracle_residual(array![1.0, 0.0].view()).unwrap(), 0.0);
        let q = SurrogatePair {
            gamma_vec: array![0.0, 0.0],
            ..p
        };
        let (v, g) = q.loss_and_gradient(array![1.0, 0.0].view()).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g, array![1.0, 0.0]);
    }
}
