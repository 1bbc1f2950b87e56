//! Thin bridge between `ndarray` storage and `faer` kernels.
//!
//! Everything in the crate stores matrices as row-major `Array2<f64>`; the
//! dense factorizations and large products are delegated to `faer`.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{EivError, Result};

fn with_faer<R>(a: ArrayView2<'_, f64>, f: impl FnOnce(MatRef<'_, f64>) -> R) -> R {
    let (r, c) = a.dim();
    match a.as_slice() {
        Some(s) => f(MatRef::from_row_major_slice(s, r, c)),
        None => {
            let owned = a.as_standard_layout();
            f(MatRef::from_row_major_slice(
                owned.as_slice().expect("standard layout"),
                r,
                c,
            ))
        }
    }
}

fn to_ndarray(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `a * b`.
pub fn matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    with_faer(a, |fa| with_faer(b, |fb| to_ndarray((fa * fb).as_ref())))
}

/// `x^T x`.
pub fn gram(x: ArrayView2<'_, f64>) -> Array2<f64> {
    with_faer(x, |fx| to_ndarray((fx.transpose() * fx).as_ref()))
}

/// Symmetric eigendecomposition; eigenvalues are returned in nonincreasing
/// order with eigenvectors as the matching columns.
pub fn sym_eigen(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    let evd = with_faer(a, |fa| fa.self_adjoint_eigen(Side::Lower))
        .map_err(|e| EivError::Linalg(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let values = Array1::from_iter(order.iter().map(|&k| s[k]));
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| u[(i, order[j])]);
    Ok((values, vectors))
}

/// Eigenvalues only, nonincreasing.
pub fn sym_eigenvalues(a: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let mut vals = with_faer(a, |fa| fa.self_adjoint_eigenvalues(Side::Lower))
        .map_err(|e| EivError::Linalg(format!("eigenvalue computation failed: {e:?}")))?;
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(Array1::from(vals))
}

/// Lower Cholesky factor `L` with `L L^T = a`.
pub fn cholesky_lower(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let llt = with_faer(a, |fa| fa.llt(Side::Lower))
        .map_err(|e| EivError::Linalg(format!("cholesky failed: {e:?}")))?;
    let l = llt.L();
    let mut out = to_ndarray(l);
    for i in 0..out.nrows() {
        for j in (i + 1)..out.ncols() {
            out[[i, j]] = 0.0;
        }
    }
    Ok(out)
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let llt = with_faer(a, |fa| fa.llt(Side::Lower))
        .map_err(|e| EivError::Linalg(format!("cholesky failed: {e:?}")))?;
    let inv = llt.solve(Mat::<f64>::identity(n, n));
    let mut out = to_ndarray(inv.as_ref());
    symmetrize(&mut out);
    Ok(out)
}

/// Replaces `m` by `(m + m^T) / 2` so the result is bit-wise symmetric.
pub fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// `m v` for a row-major matrix, written into `out`.
pub fn matvec_into(m: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>, out: &mut Array1<f64>) {
    Zip::from(out).and(m.rows()).for_each(|o, row| *o = row.dot(&v));
}

pub fn norm_l1(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_l2(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn norm_inf(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn frobenius(m: ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest eigenvalue of a symmetric matrix by Lanczos with full
/// reorthogonalization, stopping when the top Ritz value changes by at most
/// `rel_tol` (relative) over five steps or after `max_steps` steps.
pub fn lanczos_lambda_max(a: ArrayView2<'_, f64>, rel_tol: f64, max_steps: usize) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let k_max = max_steps.clamp(1, n);
    // Start from the row sums: positive overlap with the Perron vector for
    // the nonnegative covariance families used here.
    let mut v = Array1::from_iter(a.rows().into_iter().map(|r| r.sum().abs() + 1.0));
    let nv = norm_l2(v.view());
    v /= nv;
    let mut basis: Vec<Array1<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = Array1::zeros(n);
    let mut history: Vec<f64> = Vec::new();
    for j in 0..k_max {
        matvec_into(a, basis[j].view(), &mut w);
        let alpha = basis[j].dot(&w);
        alphas.push(alpha);
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.scaled_add(-c, q);
            }
        }
        let beta = norm_l2(w.view());
        let last = j + 1 == k_max;
        let breakdown = beta <= 1e-14 * alphas.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        if j % 5 == 4 || last || breakdown {
            let theta = tridiagonal_extreme(&alphas, &betas, true);
            if breakdown || last {
                return Ok(theta);
            }
            if let Some(&prev) = history.last() {
                if (theta - prev).abs() <= rel_tol * theta.abs() {
                    return Ok(theta);
                }
            }
            history.push(theta);
        }
        betas.push(beta);
        basis.push(&w / beta);
    }
    unreachable!("the last step returns")
}

/// Number of eigenvalues strictly below `x` of the symmetric tridiagonal
/// matrix with diagonal `diag` and off-diagonal `off` (Sturm sequence).
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for (i, &a) in diag.iter().enumerate() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = a - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest (`top`) or smallest eigenvalue of a symmetric tridiagonal matrix
/// by bisection on the Sturm count, to machine precision.
pub fn tridiagonal_extreme(diag: &[f64], off: &[f64], top: bool) -> f64 {
    let k = diag.len();
    assert!(k > 0 && off.len() + 1 >= k, "tridiagonal_extreme: bad lengths");
    let radius = |i: usize| {
        let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < k { off[i].abs() } else { 0.0 };
        l + r
    };
    let mut lo = (0..k).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..k).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = sturm_count(diag, &off[..k - 1], mid);
        let below = if top { c == k } else { c >= 1 };
        if below {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
