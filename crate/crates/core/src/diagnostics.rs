//! Randomized falsification of restricted-eigenvalue type conditions.
//!
//! These routines search for violating directions; finding none is evidence,
//! not a certificate. Lower-RE is a nonconvex global minimization and is only
//! exact on the directions that are enumerated (coordinate vectors, all
//! 2-sparse directions, eigenvectors). The `exact` flag reports when the
//! enumeration covers the whole problem.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{binomial, next_combination};
use crate::error::{EivError, Result};
use crate::linalg::{self, norm_inf, norm_l1, norm_l2};
use crate::rng::{self, StreamRng};

/// All 2-sparse directions are enumerated up to this dimension.
pub const PAIR_ENUMERATION_MAX_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    LowerRe,
    UpperRe,
    ReClassic,
    LqSensitivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReProbeResult {
    pub condition: Condition,
    /// Curvature `alpha` (lower) or smoothness (upper).
    pub curvature: f64,
    pub tau: f64,
    pub worst_margin: f64,
    /// Unit-norm direction attaining `worst_margin`.
    pub witness: Vec<f64>,
    pub exact: bool,
    pub samples_used: usize,
}

impl ReProbeResult {
    pub fn violated(&self) -> bool {
        self.worst_margin < 0.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("probe result serializes")
    }
}

/// `theta^T Gamma theta - alpha ||theta||_2^2 + tau ||theta||_1^2`.
pub fn lower_re_margin(gamma: ArrayView2<'_, f64>, theta: ArrayView1<'_, f64>, alpha: f64, tau: f64) -> f64 {
    let q = theta.dot(&gamma.dot(&theta));
    let n1 = norm_l1(theta);
    q - alpha * theta.dot(&theta) + tau * n1 * n1
}

/// `smoothness ||theta||_2^2 + tau ||theta||_1^2 - theta^T Gamma theta`.
pub fn upper_re_margin(gamma: ArrayView2<'_, f64>, theta: ArrayView1<'_, f64>, smoothness: f64, tau: f64) -> f64 {
    let q = theta.dot(&gamma.dot(&theta));
    let n1 = norm_l1(theta);
    smoothness * theta.dot(&theta) + tau * n1 * n1 - q
}

struct Search {
    best: f64,
    witness: Array1<f64>,
    samples: usize,
}

impl Search {
    fn new(m: usize) -> Self {
        Self {
            best: f64::INFINITY,
            witness: Array1::zeros(m),
            samples: 0,
        }
    }

    fn offer(&mut self, margin: f64, theta: impl FnOnce() -> Array1<f64>) {
        self.samples += 1;
        if margin < self.best {
            self.best = margin;
            self.witness = theta();
        }
    }
}

fn symmetric_part(g: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (r, c) = g.dim();
    if r != c || r == 0 {
        return Err(EivError::invalid(format!("Gamma must be square and nonempty, got {r}x{c}")));
    }
    let mut s = g.to_owned();
    linalg::symmetrize(&mut s);
    Ok(s)
}

/// Minimizes `theta^T G theta - a ||theta||^2 + tau ||theta||_1^2` over unit
/// `theta` by enumeration plus random search.
fn falsify(g: &Array2<f64>, a: f64, tau: f64, trials: usize, seed: u64, tag: &str) -> Result<(Search, bool)> {
    let m = g.nrows();
    let mut s = Search::new(m);
    let unit = |i: usize| {
        let mut e = Array1::zeros(m);
        e[i] = 1.0;
        e
    };
    for i in 0..m {
        s.offer(g[[i, i]] - a + tau, || unit(i));
    }
    if m <= PAIR_ENUMERATION_MAX_DIM {
        // On a fixed quadrant of the (i, j) plane the margin is the quadratic
        // form of a 2x2 matrix; its minimum is the smaller eigenvalue when the
        // eigenvector lies in the quadrant and a coordinate vector otherwise.
        for i in 0..m {
            for j in (i + 1)..m {
                for sign in [1.0, -1.0] {
                    let p = g[[i, i]] - a + tau;
                    let q = g[[j, j]] - a + tau;
                    let c = g[[i, j]] + sign * tau;
                    let mid = 0.5 * (p + q);
                    let rad = (0.25 * (p - q) * (p - q) + c * c).sqrt();
                    let lmin = mid - rad;
                    // eigenvector of [[p, c], [c, q]] for lmin
                    let (vx, vy) = if c.abs() > 0.0 { (c, lmin - p) } else if p <= q { (1.0, 0.0) } else { (0.0, 1.0) };
                    if vx * vy * sign > 0.0 {
                        let nv = (vx * vx + vy * vy).sqrt();
                        s.offer(lmin, || {
                            let mut t = Array1::zeros(m);
                            t[i] = vx / nv;
                            t[j] = vy / nv;
                            t
                        });
                    }
                }
            }
        }
    }
    let (vals, vecs) = linalg::sym_eigen(g.view())?;
    for k in 0..m {
        let v = vecs.column(k);
        let n1 = norm_l1(v);
        s.offer(vals[k] - a + tau * n1 * n1, || v.to_owned());
    }
    // Truncations of the lowest eigenvectors: sparse directions with
    // small quadratic form.
    let low = m.min(8);
    for k in (m - low)..m {
        let v = vecs.column(k);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&x, &y| v[y].abs().total_cmp(&v[x].abs()));
        let mut size = 2;
        while size < m {
            let mut t = Array1::zeros(m);
            for &i in &order[..size] {
                t[i] = v[i];
            }
            let nt = norm_l2(t.view());
            if nt > 0.0 {
                t /= nt;
                let margin = margin_of(g, t.view(), a, tau);
                s.offer(margin, || t);
            }
            size *= 2;
        }
    }
    let mut r = rng::stream(seed, tag, &[]);
    let max_sparse = ((m as f64).sqrt().ceil() as usize).clamp(1, m);
    for k in 0..trials {
        let theta = if k % 2 == 0 {
            let mut t = Array1::from_shape_simple_fn(m, || r.sample::<f64, _>(StandardNormal));
            let nt = norm_l2(t.view());
            t /= nt;
            t
        } else {
            let size = r.random_range(1..=max_sparse);
            let mut t = Array1::zeros(m);
            for i in sample(&mut r, m, size).iter() {
                t[i] = r.sample::<f64, _>(StandardNormal);
            }
            let nt = norm_l2(t.view());
            if nt == 0.0 {
                continue;
            }
            t /= nt;
            t
        };
        let margin = margin_of(g, theta.view(), a, tau);
        s.offer(margin, || theta);
    }
    let exact = m <= 2 || tau == 0.0;
    Ok((s, exact))
}

fn margin_of(g: &Array2<f64>, t: ArrayView1<'_, f64>, a: f64, tau: f64) -> f64 {
    lower_re_margin(g.view(), t, a, tau)
}

/// Searches for `theta` with `theta^T Gamma theta < alpha ||theta||^2 - tau ||theta||_1^2`.
/// `Gamma` is symmetrized first.
pub fn falsify_lower_re(gamma: ArrayView2<'_, f64>, alpha: f64, tau: f64, trials: usize, seed: u64) -> Result<ReProbeResult> {
    let g = symmetric_part(gamma)?;
    let (s, exact) = falsify(&g, alpha, tau, trials, seed, "lower-re")?;
    let margin = lower_re_margin(g.view(), s.witness.view(), alpha, tau);
    Ok(ReProbeResult {
        condition: Condition::LowerRe,
        curvature: alpha,
        tau,
        worst_margin: margin,
        witness: s.witness.to_vec(),
        exact,
        samples_used: s.samples,
    })
}

/// Searches for `theta` with `theta^T Gamma theta > smoothness ||theta||^2 + tau ||theta||_1^2`.
pub fn falsify_upper_re(
    gamma: ArrayView2<'_, f64>,
    smoothness: f64,
    tau: f64,
    trials: usize,
    seed: u64,
) -> Result<ReProbeResult> {
    let g = symmetric_part(gamma)?;
    let neg = -&g;
    let (s, exact) = falsify(&neg, -smoothness, tau, trials, seed, "upper-re")?;
    let margin = upper_re_margin(g.view(), s.witness.view(), smoothness, tau);
    Ok(ReProbeResult {
        condition: Condition::UpperRe,
        curvature: smoothness,
        tau,
        worst_margin: margin,
        witness: s.witness.to_vec(),
        exact,
        samples_used: s.samples,
    })
}

/// Random element of the cone `||v_{J^c}||_1 <= k0 ||v_J||_1` with `|J| = s`:
/// `v_J` uniform on the sphere and off-support l1 mass `u k0 ||v_J||_1`,
/// `u ~ U[0, 1]`, spread over random coordinates.
pub fn sample_cone_vector(r: &mut StreamRng, p: usize, s: usize, k0: f64) -> (Array1<f64>, Vec<usize>) {
    let mut idx = sample(r, p, p.min(s + (p - s).min(2 * s.max(1)))).into_vec();
    let rest = idx.split_off(s.min(idx.len()));
    let mut v = Array1::zeros(p);
    for &i in &idx {
        v[i] = r.sample::<f64, _>(StandardNormal);
    }
    let nj = norm_l2(v.view());
    if nj > 0.0 {
        v /= nj;
    }
    if k0 > 0.0 && !rest.is_empty() {
        let l1 = idx.iter().map(|&i| v[i].abs()).sum::<f64>();
        let mass = r.random_range(0.0..=1.0) * k0 * l1;
        let w: Vec<f64> = rest.iter().map(|_| r.random_range(0.0..1.0f64)).collect();
        let ws: f64 = w.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        for (&i, wi) in rest.iter().zip(w) {
            let sgn = if r.random::<bool>() { 1.0 } else { -1.0 };
            v[i] = sgn * mass * wi / ws;
        }
    }
    idx.sort_unstable();
    (v, idx)
}

/// Upper-bound estimate of `1/K(s0, k0, A) = min ||A v||_2 / ||v_J||_2`
/// over `|J| <= s0` and `||v_{J^c}||_1 <= k0 ||v_J||_1`.
///
/// Every size-`s0` support is enumerated when there are at most `budget`
/// of them (the on-support minimum is `sqrt(lambda_min(A_J^T A_J))`);
/// otherwise `budget` random supports are used. Cone samples and greedy
/// extreme rays add off-support mass. Exact only for `k0 = 0` with full
/// enumeration.
pub fn estimate_re_constant(
    design: ArrayView2<'_, f64>,
    s0: usize,
    k0: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, bool)> {
    let (_, p) = design.dim();
    if s0 == 0 || s0 > p {
        return Err(EivError::invalid(format!("s0 must lie in [1, {p}], got {s0}")));
    }
    if !(k0 >= 0.0) {
        return Err(EivError::invalid("k0 must be nonnegative"));
    }
    let gram = linalg::gram(design);
    let ratio = |v: &Array1<f64>, j: &[usize]| {
        let vj: f64 = j.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
        let q = v.dot(&gram.dot(v)).max(0.0).sqrt();
        if vj > 0.0 { q / vj } else { f64::INFINITY }
    };
    let mut best = f64::INFINITY;
    let mut r = rng::stream(seed, "re-constant", &[]);
    let budget = samples.max(1);
    let enumerate = binomial(p, s0).is_some_and(|c| c <= budget as u128);

    let on_support = |j: &[usize], best: &mut f64| -> Result<()> {
        let sub = Array2::from_shape_fn((j.len(), j.len()), |(a, b)| gram[[j[a], j[b]]]);
        let (vals, vecs) = linalg::sym_eigen(sub.view())?;
        let k = j.len() - 1;
        *best = best.min(vals[k].max(0.0).sqrt());
        if k0 > 0.0 {
            // Greedy extreme ray: push mass onto the coordinate that most
            // reduces ||A v||.
            let mut v = Array1::zeros(p);
            for (a, &i) in j.iter().enumerate() {
                v[i] = vecs[[a, k]];
            }
            let l1 = norm_l1(v.view());
            let grad = gram.dot(&v);
            let mut jbest = None;
            let mut gmax = 0.0;
            for c in 0..p {
                if !j.contains(&c) && grad[c].abs() > gmax {
                    gmax = grad[c].abs();
                    jbest = Some(c);
                }
            }
            if let Some(c) = jbest {
                for step in 1..=10 {
                    let mut w = v.clone();
                    w[c] = -grad[c].signum() * k0 * l1 * step as f64 / 10.0;
                    *best = best.min(ratio(&w, j));
                }
            }
        }
        Ok(())
    };

    if enumerate {
        let mut j: Vec<usize> = (0..s0).collect();
        loop {
            on_support(&j, &mut best)?;
            if !next_combination(&mut j, p) {
                break;
            }
        }
    } else {
        for _ in 0..budget {
            let mut j = sample(&mut r, p, s0).into_vec();
            j.sort_unstable();
            on_support(&j, &mut best)?;
        }
    }
    for _ in 0..samples {
        let (v, j) = sample_cone_vector(&mut r, p, s0, k0);
        best = best.min(ratio(&v, &j));
    }
    Ok((best, enumerate && k0 == 0.0))
}

/// Sampled upper bound on `min ||Psi D||_inf / ||D||_q` over the cone
/// `||D_{T0^c}||_1 <= k0 ||D_{T0}||_1`, `T0` the `d0` largest entries.
/// The sample set does not depend on `q`.
pub fn estimate_lq_sensitivity(psi: ArrayView2<'_, f64>, d0: usize, k0: f64, q: f64, samples: usize, seed: u64) -> Result<f64> {
    let (_, p) = psi.dim();
    if !(1.0..=2.0).contains(&q) {
        return Err(EivError::invalid(format!("q must lie in [1, 2], got {q}")));
    }
    if d0 == 0 || d0 > p {
        return Err(EivError::invalid(format!("d0 must lie in [1, {p}], got {d0}")));
    }
    let qnorm = |v: &Array1<f64>| v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q);
    let mut best = f64::INFINITY;
    for j in 0..p {
        best = best.min(norm_inf(psi.column(j)));
    }
    let mut r = rng::stream(seed, "lq-sensitivity", &[]);
    for _ in 0..samples {
        let (v, _) = sample_cone_vector(&mut r, p, d0, k0);
        if !in_cone(v.view(), d0, k0) {
            continue;
        }
        let den = qnorm(&v);
        if den > 0.0 {
            best = best.min(norm_inf(psi.dot(&v).view()) / den);
        }
    }
    Ok(best)
}

fn top_split(x: ArrayView1<'_, f64>, d0: usize) -> (f64, f64, f64) {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let k = d0.min(mags.len());
    let top_l1: f64 = mags[..k].iter().sum();
    let top_l2: f64 = mags[..k].iter().map(|v| v * v).sum::<f64>().sqrt();
    let rest_l1: f64 = mags[k..].iter().sum();
    (top_l1, top_l2, rest_l1)
}

/// Membership in `{x : ||x_{T0^c}||_1 <= k0 ||x_{T0}||_1}`.
pub fn in_cone(x: ArrayView1<'_, f64>, d0: usize, k0: f64) -> bool {
    let (top_l1, _, rest_l1) = top_split(x, d0);
    rest_l1 <= k0 * top_l1 * (1.0 + 1e-12) + 1e-300
}

/// Checks `||x_{T0}||_2 >= ||x||_2 / sqrt(1 + k0)` for `x` in the cone.
pub fn cone_top_norm_check(x: ArrayView1<'_, f64>, d0: usize, k0: f64) -> Result<bool> {
    if d0 == 0 || !(k0 >= 0.0) {
        return Err(EivError::invalid("need d0 >= 1 and k0 >= 0"));
    }
    if !in_cone(x, d0, k0) {
        return Err(EivError::invalid("x is not in the cone"));
    }
    let (_, top_l2, _) = top_split(x, d0);
    let nx = norm_l2(x);
    Ok(top_l2 >= nx / (1.0 + k0).sqrt() - 1e-12 * nx)
}
