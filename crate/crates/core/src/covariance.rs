//! Covariance models and spectral utilities.
//!
//! A [`CovarianceSpec`] holds a dense symmetric matrix together with a lazily
//! computed eigendecomposition. It houses both the column covariance `A`
//! (signal, `m x m`) and the row covariance `B` (measurement error, `n x n`)
//! of the Kronecker-sum model `A (+) B = A (x) I_n + I_m (x) B`.

use std::sync::OnceLock;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EivError, Result};
use crate::linalg;
use crate::rng;

/// Relative tolerance for the symmetry check at construction.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues below `-PSD_TOL * lambda_max` mark a matrix as indefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Eigenvalues below `-SQRT_TOL * lambda_max` are rejected by [`CovarianceSpec::sqrt`].
pub const SQRT_TOL: f64 = 1e-8;

/// Cached symmetric eigendecomposition: eigenvalues nonincreasing, eigenvectors
/// as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl Eigen {
    pub fn lambda_max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    matrix: Array2<f64>,
    eigen: OnceLock<Eigen>,
    lambda_max: OnceLock<f64>,
    /// `(rho, c)` when the matrix is `c` times an AR(1) correlation.
    ar1: Option<(f64, f64)>,
}

/// Which factor of `S` is used to color white noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Factorization {
    /// The unique symmetric PSD root `S^{1/2}`.
    #[default]
    SymmetricRoot,
    /// The lower Cholesky factor `L` with `L L^T = S`. Same Gaussian law,
    /// cubic cost with a much smaller constant.
    Cholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremal {
    Max,
    Min,
}

impl CovarianceSpec {
    /// Wraps a dense matrix, checking squareness, finiteness and symmetry.
    ///
    /// Positive semidefiniteness is checked when the spectrum is first
    /// needed (see [`CovarianceSpec::eigen`]).
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(EivError::invalid(format!("covariance must be square, got {r}x{c}")));
        }
        if r == 0 {
            return Err(EivError::invalid("covariance must have positive dimension"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(EivError::invalid("covariance has non-finite entries"));
        }
        let scale = matrix.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in (i + 1)..r {
                if (matrix[[i, j]] - matrix[[j, i]]).abs() > SYMMETRY_TOL * scale {
                    return Err(EivError::invalid(format!(
                        "covariance is not symmetric at ({i},{j}): {} vs {}",
                        matrix[[i, j]],
                        matrix[[j, i]]
                    )));
                }
            }
        }
        let mut matrix = matrix;
        linalg::symmetrize(&mut matrix);
        Ok(Self {
            matrix,
            eigen: OnceLock::new(),
            lambda_max: OnceLock::new(),
            ar1: None,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(Array2::eye(dim)).expect("identity is a valid covariance")
    }

    /// The zero matrix: the noiseless-measurement limit `B = 0`.
    pub fn zeros(dim: usize) -> Self {
        Self::from_matrix(Array2::zeros((dim, dim))).expect("zero is a valid covariance")
    }

    /// AR(1) correlation: entry `(i, j)` is `rho^|i-j|`.
    pub fn ar1(dim: usize, rho: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(EivError::invalid(format!("AR(1) parameter must satisfy |rho| < 1, got {rho}")));
        }
        let m = Array2::from_shape_fn((dim, dim), |(i, j)| rho.powi(i.abs_diff(j) as i32));
        let mut out = Self::from_matrix(m)?;
        out.ar1 = Some((rho, 1.0));
        Ok(out)
    }

    /// `(rho, c)` if this is `c` times an AR(1) correlation built by [`CovarianceSpec::ar1`].
    pub fn ar1_params(&self) -> Option<(f64, f64)> {
        self.ar1
    }

    /// Block-diagonal Star-Block correlation.
    ///
    /// Each block has `hub_block` coordinates: one hub and `hub_block - 1`
    /// leaves. Hub-leaf entries are `rho`, leaf-leaf entries `rho^2`, the
    /// diagonal is one. `num_blocks` defaults to `dim / hub_block`; the
    /// remaining coordinates are independent unit-variance singletons.
    pub fn star_block(dim: usize, rho: f64, hub_block: usize, num_blocks: Option<usize>) -> Result<Self> {
        if hub_block < 2 {
            return Err(EivError::invalid(format!("star block size must be at least 2, got {hub_block}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(EivError::invalid(format!("star-block rho must lie in (0,1), got {rho}")));
        }
        let blocks = num_blocks.unwrap_or(dim / hub_block);
        if blocks * hub_block > dim {
            return Err(EivError::invalid(format!(
                "{blocks} blocks of size {hub_block} do not fit in dimension {dim}"
            )));
        }
        let mut m = Array2::eye(dim);
        for b in 0..blocks {
            let start = b * hub_block;
            let hub = start;
            for i in start..start + hub_block {
                for j in start..start + hub_block {
                    if i == j {
                        continue;
                    }
                    m[[i, j]] = if i == hub || j == hub { rho } else { rho * rho };
                }
            }
        }
        Self::from_matrix(m)
    }

    /// Inverse of a random sparse precision matrix.
    ///
    /// Starts from `Pi = c_diag I`, then for `ceil(dim ln dim)` distinct random
    /// off-diagonal pairs `(i, j)` draws `w ~ U[w_min, w_max]`, subtracts `w`
    /// from `pi_ij, pi_ji` and adds it to `pi_ii, pi_jj`. The update keeps `Pi`
    /// strictly diagonally dominant, so the inverse always exists.
    pub fn random_precision(dim: usize, c_diag: f64, w_min: f64, w_max: f64, seed: u64) -> Result<Self> {
        if !(c_diag > 0.0) {
            return Err(EivError::invalid(format!("c_diag must be positive, got {c_diag}")));
        }
        if !(w_min > 0.0 && w_min < w_max) {
            return Err(EivError::invalid(format!("need 0 < w_min < w_max, got [{w_min}, {w_max}]")));
        }
        let mut pi = Array2::eye(dim) * c_diag;
        let pairs = dim * dim.saturating_sub(1) / 2;
        let wanted = ((dim as f64) * (dim as f64).ln()).ceil().max(0.0) as usize;
        let edges = wanted.min(pairs);
        if edges > 0 {
            let mut rng = rng::stream(seed, "random-precision", &[dim as u64]);
            for k in sample(&mut rng, pairs, edges).into_iter() {
                let (i, j) = unrank_pair(k, dim);
                let w = rng.random_range(w_min..=w_max);
                pi[[i, j]] -= w;
                pi[[j, i]] -= w;
                pi[[i, i]] += w;
                pi[[j, j]] += w;
            }
        }
        let b = linalg::spd_inverse(pi.view())?;
        Self::from_matrix(b)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().sum()
    }

    pub fn max_diag(&self) -> f64 {
        self.matrix.diag().fold(f64::NEG_INFINITY, |a, &x| a.max(x))
    }

    pub fn frobenius(&self) -> f64 {
        linalg::frobenius(self.matrix.view())
    }

    /// `c * S` for `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(EivError::invalid(format!("scale factor must be finite and nonnegative, got {c}")));
        }
        let mut out = Self::from_matrix(&self.matrix * c)?;
        out.ar1 = self.ar1.map(|(rho, s)| (rho, s * c));
        if let Some(e) = self.eigen.get() {
            let _ = out.eigen.set(Eigen {
                values: &e.values * c,
                vectors: e.vectors.clone(),
            });
        }
        if let Some(l) = self.lambda_max.get() {
            let _ = out.lambda_max.set(l * c);
        }
        Ok(out)
    }

    /// Rescales so that `tr(S') / n == tau_target`.
    pub fn scale_to_trace(&self, n: usize, tau_target: f64) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(EivError::invalid(format!("cannot rescale a matrix with trace {tr}")));
        }
        if !(tau_target >= 0.0) {
            return Err(EivError::invalid(format!("trace target must be nonnegative, got {tau_target}")));
        }
        self.scaled(tau_target * n as f64 / tr)
    }

    /// Eigendecomposition, computed once and cached. Fails if the matrix has
    /// an eigenvalue below `-PSD_TOL * lambda_max`.
    pub fn eigen(&self) -> Result<&Eigen> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        let (values, vectors) = linalg::sym_eigen(self.matrix.view())?;
        let max = values[0];
        let min = values[values.len() - 1];
        if min < -PSD_TOL * max.abs().max(f64::MIN_POSITIVE) {
            return Err(EivError::NotPositiveSemidefinite { min_eig: min, max_eig: max });
        }
        let _ = self.lambda_max.set(max);
        Ok(self.eigen.get_or_init(|| Eigen { values, vectors }))
    }

    pub fn lambda_min(&self) -> Result<f64> {
        if let (None, Some((rho, c))) = (self.eigen.get(), self.ar1) {
            return Ok(c / ar1_precision_extreme(self.dim(), rho, true));
        }
        Ok(self.eigen()?.lambda_min())
    }

    /// Spectral norm. Uses the cached decomposition when available, the
    /// tridiagonal AR(1) precision for AR(1) specs, and Lanczos for other
    /// large matrices.
    pub fn lambda_max(&self) -> Result<f64> {
        if let Some(&l) = self.lambda_max.get() {
            return Ok(l);
        }
        if let Some((rho, c)) = self.ar1 {
            let l = c / ar1_precision_extreme(self.dim(), rho, false);
            return Ok(*self.lambda_max.get_or_init(|| l));
        }
        if self.dim() <= 512 {
            return Ok(self.eigen()?.lambda_max());
        }
        let l = linalg::lanczos_lambda_max(self.matrix.view(), 1e-10, 2000)?;
        Ok(*self.lambda_max.get_or_init(|| l))
    }

    /// Symmetric PSD square root via the eigendecomposition, with tiny
    /// negative eigenvalues clamped to zero.
    pub fn sqrt(&self) -> Result<Array2<f64>> {
        let e = self.eigen()?;
        let max = e.lambda_max().abs().max(f64::MIN_POSITIVE);
        if e.lambda_min() < -SQRT_TOL * max {
            return Err(EivError::NotPositiveSemidefinite {
                min_eig: e.lambda_min(),
                max_eig: e.lambda_max(),
            });
        }
        let roots = e.values.mapv(|v| v.max(0.0).sqrt());
        let mut scaled = e.vectors.clone();
        for (mut col, r) in scaled.columns_mut().into_iter().zip(roots.iter()) {
            col *= *r;
        }
        let mut root = linalg::matmul(scaled.view(), e.vectors.t());
        linalg::symmetrize(&mut root);
        Ok(root)
    }

    /// A factor `F` with `F F^T = S`.
    pub fn factor(&self, kind: Factorization) -> Result<Array2<f64>> {
        if self.matrix.iter().all(|&x| x == 0.0) {
            return Ok(Array2::zeros(self.matrix.dim()));
        }
        match kind {
            Factorization::SymmetricRoot => self.sqrt(),
            Factorization::Cholesky => linalg::cholesky_lower(self.matrix.view()),
        }
    }

    /// Extremal `d`-sparse quadratic form `t^T S t` over unit `t`.
    ///
    /// Exact (support enumeration with a per-support eigendecomposition) when
    /// `C(dim, d) <= budget`; otherwise the best value found by truncated power
    /// iterations and about `budget / d^2` random supports, which is a lower bound for
    /// `Max` and an upper bound for `Min`. The flag reports which case applied.
    pub fn sparse_eigenvalue(&self, d: usize, which: Extremal, budget: usize, seed: u64) -> Result<(f64, bool)> {
        let p = self.dim();
        if d == 0 || d > p {
            return Err(EivError::invalid(format!("sparsity must lie in [1, {p}], got {d}")));
        }
        if d == p {
            let e = self.eigen()?;
            return Ok((pick(which, e.lambda_max(), e.lambda_min()), true));
        }
        if d == 1 {
            let diag = self.matrix.diag();
            let v = match which {
                Extremal::Max => diag.fold(f64::NEG_INFINITY, |a, &x| a.max(x)),
                Extremal::Min => diag.fold(f64::INFINITY, |a, &x| a.min(x)),
            };
            return Ok((v, true));
        }
        if binomial(p, d).is_some_and(|c| c <= budget as u128) {
            let mut best = init(which);
            let mut support: Vec<usize> = (0..d).collect();
            loop {
                best = better(which, best, self.support_extremal(&support, which)?);
                if !next_combination(&mut support, p) {
                    break;
                }
            }
            return Ok((best, true));
        }
        Ok((self.sparse_eigenvalue_search(d, which, budget, seed)?, false))
    }

    fn support_extremal(&self, support: &[usize], which: Extremal) -> Result<f64> {
        let k = support.len();
        if k == 2 {
            let (a, b, c) = (
                self.matrix[[support[0], support[0]]],
                self.matrix[[support[1], support[1]]],
                self.matrix[[support[0], support[1]]],
            );
            let mid = 0.5 * (a + b);
            let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
            return Ok(pick(which, mid + rad, mid - rad));
        }
        let sub = Array2::from_shape_fn((k, k), |(i, j)| self.matrix[[support[i], support[j]]]);
        let vals = linalg::sym_eigenvalues(sub.view())?;
        Ok(pick(which, vals[0], vals[k - 1]))
    }

    fn sparse_eigenvalue_search(&self, d: usize, which: Extremal, budget: usize, seed: u64) -> Result<f64> {
        let p = self.dim();
        let mut best = init(which);
        // Truncated power iteration on S (max) or on shift*I - S (min).
        let shift = match which {
            Extremal::Max => 0.0,
            Extremal::Min => self.lambda_max()?,
        };
        let mut rng = rng::stream(seed, "sparse-eigen", &[d as u64]);
        let starts = 8.min(p);
        let diag = self.matrix.diag().to_owned();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| match which {
            Extremal::Max => diag[j].total_cmp(&diag[i]),
            Extremal::Min => diag[i].total_cmp(&diag[j]),
        });
        for s in 0..starts + 4 {
            let mut v = Array1::<f64>::zeros(p);
            if s < starts {
                v[order[s]] = 1.0;
            } else {
                for x in v.iter_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
            }
            let support = self.truncated_power(v, d, shift, 200);
            best = better(which, best, self.support_extremal(&support, which)?);
        }
        // Random supports cost O(d^3) each; keep total work near budget * d.
        let draws = (budget / (d * d)).max(16);
        for _ in 0..draws {
            let mut support = sample(&mut rng, p, d).into_vec();
            support.sort_unstable();
            best = better(which, best, self.support_extremal(&support, which)?);
        }
        Ok(best)
    }

    fn truncated_power(&self, mut v: Array1<f64>, d: usize, shift: f64, iters: usize) -> Vec<usize> {
        let p = self.dim();
        let mut w = Array1::zeros(p);
        let mut support: Vec<usize> = Vec::new();
        for _ in 0..iters {
            linalg::matvec_into(self.matrix.view(), v.view(), &mut w);
            if shift != 0.0 {
                w = &v * shift - &w;
            }
            let mut idx: Vec<usize> = (0..p).collect();
            idx.select_nth_unstable_by(d - 1, |&i, &j| w[j].abs().total_cmp(&w[i].abs()));
            let mut next: Vec<usize> = idx[..d].to_vec();
            next.sort_unstable();
            v.fill(0.0);
            for &i in &next {
                v[i] = w[i];
            }
            let nv = linalg::norm_l2(v.view());
            if nv == 0.0 {
                return next;
            }
            v /= nv;
            if next == support {
                break;
            }
            support = next;
        }
        support
    }

    /// Restriction to the leading `k x k` block.
    pub fn leading(&self, k: usize) -> Result<Self> {
        Self::from_matrix(self.matrix.slice(s![..k, ..k]).to_owned())
    }
}

/// Largest or smallest eigenvalue of the inverse of the `dim x dim` AR(1)
/// correlation, which is tridiagonal.
fn ar1_precision_extreme(dim: usize, rho: f64, top: bool) -> f64 {
    if dim == 1 {
        return 1.0;
    }
    let s = 1.0 - rho * rho;
    let mut diag = vec![(1.0 + rho * rho) / s; dim];
    diag[0] = 1.0 / s;
    diag[dim - 1] = 1.0 / s;
    let off = vec![-rho / s; dim - 1];
    linalg::tridiagonal_extreme(&diag, &off, top)
}

fn pick(which: Extremal, max: f64, min: f64) -> f64 {
    match which {
        Extremal::Max => max,
        Extremal::Min => min,
    }
}

fn init(which: Extremal) -> f64 {
    pick(which, f64::NEG_INFINITY, f64::INFINITY)
}

fn better(which: Extremal, a: f64, b: f64) -> f64 {
    match which {
        Extremal::Max => a.max(b),
        Extremal::Min => a.min(b),
    }
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
pub fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Maps a rank in `0..n(n-1)/2` to the pair `(i, j)`, `i < j`.
fn unrank_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
        let diff = a - b;
        linalg::frobenius(diff.view()) <= tol * linalg::frobenius(b.view()).max(1.0)
    }

    #[test]
    fn ar1_small_matches_definition() {
        let a = CovarianceSpec::ar1(3, 0.5).unwrap();
        let want = array![[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]];
        assert_eq!(a.matrix(), &want);
        assert_eq!(CovarianceSpec::ar1(4, 0.0).unwrap().matrix(), &Array2::<f64>::eye(4));
        assert!(CovarianceSpec::ar1(3, 1.0).is_err());
        assert!(CovarianceSpec::ar1(3, -1.2).is_err());
    }

    #[test]
    fn ar1_extremes_match_dense_eigen() {
        for (dim, rho, c) in [(1, 0.3, 2.0), (2, -0.6, 1.0), (50, 0.3, 0.3), (300, 0.7, 1.7), (300, 0.0, 0.5)] {
            let fast = CovarianceSpec::ar1(dim, rho).unwrap().scaled(c).unwrap();
            let dense = CovarianceSpec::from_matrix(fast.matrix().clone()).unwrap();
            let (lmax, lmin) = (dense.lambda_max().unwrap(), dense.lambda_min().unwrap());
            assert!((fast.lambda_max().unwrap() - lmax).abs() < 1e-12 * lmax, "{dim} {rho}");
            assert!((fast.lambda_min().unwrap() - lmin).abs() < 1e-10 * lmax, "{dim} {rho}");
        }
    }

    #[test]
    fn ar1_min_eigenvalue_ratio() {
        let l3 = CovarianceSpec::ar1(256, 0.3).unwrap().lambda_min().unwrap();
        let l7 = CovarianceSpec::ar1(256, 0.7).unwrap().lambda_min().unwrap();
        // Toeplitz limit (1 - rho) / (1 + rho): 0.5385 vs 0.1765.
        assert!((l3 / l7 - 3.0).abs() < 0.1, "ratio {}", l3 / l7);
    }

    #[test]
    fn star_block_pair_and_topology() {
        let s = CovarianceSpec::star_block(2, 0.4, 2, None).unwrap();
        assert_eq!(s.matrix(), &array![[1.0, 0.4], [0.4, 1.0]]);

        let big = CovarianceSpec::star_block(1024, 0.3, 17, Some(32)).unwrap();
        let m = big.matrix();
        // hub of block 0 touches its 16 leaves at rho
        assert_eq!((1..17).filter(|&j| m[[0, j]] == 0.3).count(), 16);
        assert!((m[[1, 2]] - 0.09).abs() < 1e-15);
        // across blocks and on singletons: zero
        assert_eq!(m[[0, 17]], 0.0);
        assert_eq!(m[[600, 601]], 0.0);
        assert_eq!(m[[600, 600]], 1.0);
        assert!(CovarianceSpec::star_block(10, 0.3, 1, None).is_err());
    }

    #[test]
    fn star_block_is_psd() {
        let s = CovarianceSpec::star_block(60, 0.3, 17, Some(3)).unwrap();
        assert!(s.lambda_min().unwrap() >= -1e-12);
    }

    #[test]
    fn random_precision_basics() {
        let one = CovarianceSpec::random_precision(1, 2.0, 0.1, 0.3, 3).unwrap();
        assert!((one.matrix()[[0, 0]] - 0.5).abs() < 1e-15);

        let a = CovarianceSpec::random_precision(30, 1.0, 0.1, 0.3, 11).unwrap();
        let b = CovarianceSpec::random_precision(30, 1.0, 0.1, 0.3, 11).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!(a.lambda_min().unwrap() > 0.0);
        assert!(CovarianceSpec::random_precision(5, 1.0, 0.3, 0.1, 1).is_err());
    }

    #[test]
    fn single_edge_update_keeps_precision_pd() {
        // 3x3 precision with one weighted edge: eigenvalues of Pi are
        // c, c, c + 2w, all >= c.
        let (c, w) = (1.0, 0.25);
        let mut pi = Array2::<f64>::eye(3) * c;
        pi[[0, 1]] -= w;
        pi[[1, 0]] -= w;
        pi[[0, 0]] += w;
        pi[[1, 1]] += w;
        let vals = linalg::sym_eigenvalues(pi.view()).unwrap();
        assert!(vals.iter().all(|&v| v >= c - 1e-12));
        assert!((vals[0] - (c + 2.0 * w)).abs() < 1e-12);
    }

    #[test]
    fn scale_to_trace_hits_target() {
        let b = CovarianceSpec::identity(5).scale_to_trace(5, 0.3).unwrap();
        assert!(close(b.matrix(), &(Array2::eye(5) * 0.3), 1e-15));
        let r = CovarianceSpec::random_precision(40, 1.0, 0.1, 0.3, 5).unwrap();
        let s = r.scale_to_trace(40, 0.7).unwrap();
        assert!((s.trace() / 40.0 - 0.7).abs() < 1e-12);
        // correlation structure preserved
        let ratio = s.matrix()[[0, 1]] / r.matrix()[[0, 1]];
        assert!((s.matrix()[[2, 3]] - ratio * r.matrix()[[2, 3]]).abs() < 1e-14);
        assert!(CovarianceSpec::zeros(3).scale_to_trace(3, 0.3).is_err());
    }

    #[test]
    fn sqrt_cases() {
        let i = CovarianceSpec::identity(4);
        assert!(close(&i.sqrt().unwrap(), &Array2::eye(4), 1e-14));
        let d = CovarianceSpec::from_matrix(array![[4.0, 0.0], [0.0, 9.0]]).unwrap();
        assert!(close(&d.sqrt().unwrap(), &array![[2.0, 0.0], [0.0, 3.0]], 1e-14));
        let a = CovarianceSpec::ar1(3, 0.5).unwrap();
        let r = a.sqrt().unwrap();
        assert!(close(&r.dot(&r), a.matrix(), 1e-8));
        let bad = CovarianceSpec::from_matrix(array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(bad.sqrt().is_err());
    }

    #[test]
    fn sqrt_is_homogeneous() {
        let a = CovarianceSpec::ar1(6, 0.4).unwrap();
        let r = a.sqrt().unwrap();
        let r4 = a.scaled(4.0).unwrap().sqrt().unwrap();
        assert!(close(&r4, &(&r * 2.0), 1e-10));
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(CovarianceSpec::from_matrix(array![[1.0, 0.2], [0.3, 1.0]]).is_err());
    }

    #[test]
    fn sparse_eigenvalue_edges() {
        let a = CovarianceSpec::from_matrix(array![[1.0, 0.2, 0.0], [0.2, 3.0, 0.1], [0.0, 0.1, 2.0]]).unwrap();
        assert_eq!(a.sparse_eigenvalue(1, Extremal::Max, 100, 0).unwrap(), (3.0, true));
        assert_eq!(a.sparse_eigenvalue(1, Extremal::Min, 100, 0).unwrap(), (1.0, true));
        let e = a.eigen().unwrap();
        let (v, exact) = a.sparse_eigenvalue(3, Extremal::Max, 1, 0).unwrap();
        assert!(exact && (v - e.lambda_max()).abs() < 1e-14);
        assert!(a.sparse_eigenvalue(4, Extremal::Max, 1, 0).is_err());
    }

    #[test]
    fn sparse_eigenvalue_matches_brute_force_pairs() {
        let a = CovarianceSpec::ar1(6, 0.5).unwrap();
        // Oracle: every 2x2 principal submatrix, top eigenvalue by numeric eigensolve.
        let mut oracle = f64::NEG_INFINITY;
        for i in 0..6 {
            for j in (i + 1)..6 {
                let sub = array![
                    [a.matrix()[[i, i]], a.matrix()[[i, j]]],
                    [a.matrix()[[j, i]], a.matrix()[[j, j]]]
                ];
                oracle = oracle.max(linalg::sym_eigenvalues(sub.view()).unwrap()[0]);
            }
        }
        let (v, exact) = a.sparse_eigenvalue(2, Extremal::Max, 15, 0).unwrap();
        assert!(exact);
        assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn sparse_eigenvalue_monotone_and_bracketed() {
        let a = CovarianceSpec::ar1(10, 0.6).unwrap();
        let e = a.eigen().unwrap();
        let mut prev_max = f64::NEG_INFINITY;
        let mut prev_min = f64::INFINITY;
        for d in 1..=10 {
            let (mx, _) = a.sparse_eigenvalue(d, Extremal::Max, 1_000, 0).unwrap();
            let (mn, _) = a.sparse_eigenvalue(d, Extremal::Min, 1_000, 0).unwrap();
            assert!(mx >= prev_max - 1e-12 && mn <= prev_min + 1e-12);
            assert!(a.max_diag() <= mx + 1e-12 && mx <= e.lambda_max() + 1e-12);
            prev_max = mx;
            prev_min = mn;
        }
    }

    #[test]
    fn sparse_eigenvalue_search_is_close_on_ar1() {
        let a = CovarianceSpec::ar1(40, 0.5).unwrap();
        let (exact, ok) = a.sparse_eigenvalue(3, Extremal::Max, 10_000, 0).unwrap();
        assert!(ok);
        let (approx, ok2) = a.sparse_eigenvalue(3, Extremal::Max, 50, 1).unwrap();
        assert!(!ok2);
        assert!(approx <= exact + 1e-12 && approx >= exact - 1e-9);
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut c, 6) {
            count += 1;
        }
        assert_eq!(count, 15);
        assert_eq!(binomial(6, 2), Some(15));
        assert_eq!(binomial(1024, 3), Some(178_433_024));
    }

    #[test]
    fn unrank_covers_pairs() {
        let n = 5;
        let pairs: Vec<_> = (0..10).map(|k| unrank_pair(k, n)).collect();
        assert_eq!(pairs[0], (0, 1));
        assert_eq!(pairs[9], (3, 4));
        let mut sorted = pairs.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
    }
}
