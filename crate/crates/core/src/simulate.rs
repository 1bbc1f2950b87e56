//! Synthetic instances of the errors-in-variables model
//! `y = X0 beta* + eps`, `X = X0 + W`, `X0 = Z1 A^{1/2}`, `W = B^{1/2} Z2`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceSpec, Factorization};
use crate::error::{check_dim, EivError, Result};
use crate::io;
use crate::linalg;
use crate::rng::{self, StreamRng};

/// Magnitudes of the nonzero entries of `beta*` before rescaling are drawn
/// uniformly from this interval; signs are fair coin flips.
pub const BETA_MAGNITUDE_RANGE: (f64, f64) = (0.5, 1.5);

/// Distribution of the white-noise entries of `Z1`, `Z2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDist {
    #[default]
    Gaussian,
    Rademacher,
}

impl EntryDist {
    fn fill(self, rng: &mut StreamRng, rows: usize, cols: usize) -> Array2<f64> {
        match self {
            EntryDist::Gaussian => Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal)),
            EntryDist::Rademacher => {
                Array2::from_shape_simple_fn((rows, cols), || if rng.random::<bool>() { 1.0 } else { -1.0 })
            }
        }
    }
}

/// A `d`-sparse vector of length `m` with `||beta||_2 = length`.
pub fn gen_beta(m: usize, d: usize, length: f64, seed: u64) -> Result<Array1<f64>> {
    if d == 0 || d > m {
        return Err(EivError::invalid(format!("support size must lie in [1, {m}], got {d}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(EivError::invalid(format!("beta length must be positive, got {length}")));
    }
    let mut rng = rng::stream(seed, "beta", &[]);
    let support = sample(&mut rng, m, d);
    let (lo, hi) = BETA_MAGNITUDE_RANGE;
    let mut beta = Array1::zeros(m);
    for j in support.iter() {
        let mag: f64 = rng.random_range(lo..=hi);
        beta[j] = if rng.random::<bool>() { mag } else { -mag };
    }
    let norm = linalg::norm_l2(beta.view());
    beta.mapv_inplace(|x| x * length / norm);
    Ok(beta)
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub x0: Array2<f64>,
    pub w: Array2<f64>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub beta_star: Array1<f64>,
    pub eps: Array1<f64>,
    pub a_spec: Arc<CovarianceSpec>,
    pub b_spec: Arc<CovarianceSpec>,
    pub seed: u64,
    pub d: usize,
    pub sigma_eps: f64,
    pub entry_dist: EntryDist,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    /// Writes `X.csv`, `X0.csv`, `W.csv`, `y.csv`, `beta_star.csv`, `eps.csv`
    /// and `meta.json` into `dir` (created if missing).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::write_matrix(&dir.join("X.csv"), self.x.view())?;
        io::write_matrix(&dir.join("X0.csv"), self.x0.view())?;
        io::write_matrix(&dir.join("W.csv"), self.w.view())?;
        io::write_vector(&dir.join("y.csv"), self.y.view())?;
        io::write_vector(&dir.join("beta_star.csv"), self.beta_star.view())?;
        io::write_vector(&dir.join("eps.csv"), self.eps.view())?;
        let meta = InstanceMeta {
            n: self.n(),
            m: self.m(),
            d: self.d,
            seed: self.seed,
            sigma_eps: self.sigma_eps,
            entry_dist: self.entry_dist,
            beta_norm: linalg::norm_l2(self.beta_star.view()),
            trace_a: self.a_spec.trace(),
            a_max: self.a_spec.max_diag(),
            lambda_max_a: self.a_spec.lambda_max()?,
            lambda_min_a: self.a_spec.lambda_min()?,
            tau_b: self.b_spec.trace() / self.n() as f64,
            b_norm: self.b_spec.lambda_max()?,
            beta_magnitudes: format!(
                "uniform[{}, {}] with random signs, rescaled",
                BETA_MAGNITUDE_RANGE.0, BETA_MAGNITUDE_RANGE.1
            ),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| EivError::Parse(e.to_string()))?;
        fs::write(dir.join("meta.json"), json)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub sigma_eps: f64,
    pub entry_dist: EntryDist,
    pub beta_norm: f64,
    pub trace_a: f64,
    pub a_max: f64,
    pub lambda_max_a: f64,
    pub lambda_min_a: f64,
    pub tau_b: f64,
    /// Spectral norm of `B`.
    pub b_norm: f64,
    pub beta_magnitudes: String,
}

/// How white noise is colored by one covariance factor.
#[derive(Debug, Clone)]
enum Coloring {
    Identity,
    Zero,
    Dense(Array2<f64>),
    /// The Cholesky factor of `c * AR(rho)` applied as the AR recursion,
    /// linear instead of quadratic in the dimension.
    Ar1 { rho: f64, scale: f64 },
}

impl Coloring {
    fn new(spec: &CovarianceSpec, kind: Factorization) -> Result<Self> {
        let s = spec.matrix();
        if s.iter().all(|&v| v == 0.0) {
            return Ok(Coloring::Zero);
        }
        if is_identity(s) {
            return Ok(Coloring::Identity);
        }
        match (kind, spec.ar1_params()) {
            (Factorization::Cholesky, Some((rho, scale))) => Ok(Coloring::Ar1 { rho, scale }),
            _ => Ok(Coloring::Dense(spec.factor(kind)?)),
        }
    }
}

/// `z <- F z` along axis 0 for `F` the lower Cholesky factor of `c * AR(rho)`.
fn ar1_color_rows(z: &mut Array2<f64>, rho: f64, scale: f64) {
    let innov = (1.0 - rho * rho).sqrt();
    for i in 1..z.nrows() {
        let (prev, mut rest) = z.view_mut().split_at(ndarray::Axis(0), i);
        let prev = prev.row(i - 1);
        Zip::from(rest.row_mut(0)).and(&prev).for_each(|c, &p| *c = rho * p + innov * *c);
    }
    if scale != 1.0 {
        let r = scale.sqrt();
        z.mapv_inplace(|v| v * r);
    }
}

/// Holds the factors of `A` and `B` so that many instances can be drawn
/// without refactoring.
#[derive(Debug, Clone)]
pub struct InstanceSampler {
    a: Arc<CovarianceSpec>,
    b: Arc<CovarianceSpec>,
    a_color: Coloring,
    b_color: Coloring,
}

fn is_identity(m: &Array2<f64>) -> bool {
    m.indexed_iter().all(|((i, j), &v)| v == if i == j { 1.0 } else { 0.0 })
}

impl InstanceSampler {
    /// With [`Factorization::Cholesky`], AR(1) specs are colored by their
    /// recursion, which is the same linear map as the dense Cholesky factor.
    pub fn new(a: Arc<CovarianceSpec>, b: Arc<CovarianceSpec>, kind: Factorization) -> Result<Self> {
        let a_color = Coloring::new(&a, kind)?;
        let b_color = Coloring::new(&b, kind)?;
        Ok(Self {
            a,
            b,
            a_color,
            b_color,
        })
    }

    pub fn m(&self) -> usize {
        self.a.dim()
    }

    pub fn n(&self) -> usize {
        self.b.dim()
    }

    pub fn sample(
        &self,
        beta_star: &Array1<f64>,
        d: usize,
        sigma_eps: f64,
        dist: EntryDist,
        seed: u64,
    ) -> Result<ProblemInstance> {
        let (n, m) = (self.n(), self.m());
        check_dim("beta_star", m, beta_star.len())?;
        if !(sigma_eps >= 0.0 && sigma_eps.is_finite()) {
            return Err(EivError::invalid(format!("sigma_eps must be nonnegative, got {sigma_eps}")));
        }
        let z1 = dist.fill(&mut rng::stream(seed, "z1", &[]), n, m);
        // rows of X0 are F_A z
        let x0 = match &self.a_color {
            Coloring::Zero => Array2::zeros((n, m)),
            Coloring::Identity => z1,
            Coloring::Dense(f) => linalg::matmul(z1.view(), f.t()),
            Coloring::Ar1 { rho, scale } => {
                let mut zt = z1.reversed_axes();
                ar1_color_rows(&mut zt, *rho, *scale);
                zt.reversed_axes()
            }
        };
        let w = match &self.b_color {
            Coloring::Zero => Array2::zeros((n, m)),
            other => {
                let mut z2 = dist.fill(&mut rng::stream(seed, "z2", &[]), n, m);
                match other {
                    Coloring::Dense(f) => linalg::matmul(f.view(), z2.view()),
                    Coloring::Ar1 { rho, scale } => {
                        ar1_color_rows(&mut z2, *rho, *scale);
                        z2
                    }
                    _ => z2,
                }
            }
        };
        let mut eps_rng = rng::stream(seed, "eps", &[]);
        let eps = Array1::from_shape_simple_fn(n, || sigma_eps * eps_rng.sample::<f64, _>(StandardNormal));
        let mut y = x0.dot(beta_star);
        y += &eps;
        let mut x = x0.clone();
        Zip::from(&mut x).and(&w).for_each(|a, &b| *a += b);
        Ok(ProblemInstance {
            x0,
            w,
            x,
            y,
            beta_star: beta_star.clone(),
            eps,
            a_spec: Arc::clone(&self.a),
            b_spec: Arc::clone(&self.b),
            seed,
            d,
            sigma_eps,
            entry_dist: dist,
        })
    }
}

/// One instance from `(A, B, beta*)`; `d` is read off the support of `beta*`.
/// Uses the symmetric square roots of `A` and `B`.
pub fn gen_instance(
    a: &CovarianceSpec,
    b: &CovarianceSpec,
    beta_star: &Array1<f64>,
    sigma_eps: f64,
    dist: EntryDist,
    seed: u64,
) -> Result<ProblemInstance> {
    let sampler = InstanceSampler::new(Arc::new(a.clone()), Arc::new(b.clone()), Factorization::SymmetricRoot)?;
    let d = beta_star.iter().filter(|&&v| v != 0.0).count();
    sampler.sample(beta_star, d, sigma_eps, dist, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_norm_support_determinism() {
        for (m, d, seed) in [(10, 1, 0u64), (50, 7, 3), (1024, 10, 99)] {
            let b = gen_beta(m, d, 5.0, seed).unwrap();
            assert!((linalg::norm_l2(b.view()) - 5.0).abs() < 1e-12);
            assert_eq!(b.iter().filter(|&&v| v != 0.0).count(), d);
            assert_eq!(b, gen_beta(m, d, 5.0, seed).unwrap());
        }
        let b = gen_beta(4, 1, 5.0, 1).unwrap();
        assert!(b.iter().any(|&v| (v.abs() - 5.0).abs() < 1e-12));
        assert!(gen_beta(3, 4, 1.0, 0).is_err());
    }

    #[test]
    fn identity_reductions() {
        let m = 5;
        let n = 7;
        let a = CovarianceSpec::identity(m);
        let b = CovarianceSpec::zeros(n);
        let mut e1 = Array1::zeros(m);
        e1[0] = 1.0;
        let inst = gen_instance(&a, &b, &e1, 0.0, EntryDist::Gaussian, 11).unwrap();
        assert_eq!(inst.y, inst.x0.column(0));
        assert_eq!(inst.x, inst.x0);
        assert!(inst.w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn instance_invariants_and_rademacher() {
        let a = CovarianceSpec::ar1(6, 0.4).unwrap();
        let b = CovarianceSpec::ar1(9, 0.2).unwrap().scaled(0.3).unwrap();
        let beta = gen_beta(6, 2, 5.0, 1).unwrap();
        let inst = gen_instance(&a, &b, &beta, 1.0, EntryDist::Rademacher, 5).unwrap();
        assert_eq!(inst.x, &inst.x0 + &inst.w);
        assert_eq!(inst.y, inst.x0.dot(&beta) + &inst.eps);
        let inst2 = gen_instance(&a, &b, &beta, 1.0, EntryDist::Rademacher, 5).unwrap();
        assert_eq!(inst.x, inst2.x);
        assert_eq!(inst.y, inst2.y);

        let a = CovarianceSpec::identity(4);
        let z = gen_instance(&a, &CovarianceSpec::zeros(20), &Array1::zeros(4), 0.0, EntryDist::Rademacher, 2)
            .unwrap();
        assert!(z.x0.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn ar1_recursion_matches_dense_cholesky() {
        let a = CovarianceSpec::ar1(7, 0.6).unwrap();
        let b = CovarianceSpec::ar1(9, 0.3).unwrap().scale_to_trace(9, 0.7).unwrap();
        let a_dense = CovarianceSpec::from_matrix(a.matrix().clone()).unwrap();
        let b_dense = CovarianceSpec::from_matrix(b.matrix().clone()).unwrap();
        assert!(b.ar1_params().is_some() && b_dense.ar1_params().is_none());
        let beta = gen_beta(7, 2, 5.0, 0).unwrap();
        let fast = InstanceSampler::new(Arc::new(a), Arc::new(b), Factorization::Cholesky).unwrap();
        let slow = InstanceSampler::new(Arc::new(a_dense), Arc::new(b_dense), Factorization::Cholesky).unwrap();
        let u = fast.sample(&beta, 2, 1.0, EntryDist::Gaussian, 4).unwrap();
        let v = slow.sample(&beta, 2, 1.0, EntryDist::Gaussian, 4).unwrap();
        assert!(u.x0.iter().zip(v.x0.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
        assert!(u.w.iter().zip(v.w.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = CovarianceSpec::identity(3);
        let b = CovarianceSpec::zeros(4);
        assert!(gen_instance(&a, &b, &Array1::zeros(5), 1.0, EntryDist::Gaussian, 0).is_err());
    }
}
