use std::sync::Arc;

use eiv_core::constants::{
    compute_penalty_plan, compute_rates, compute_regularity, PenaltyVariant, RateConfig, RegularityOptions,
};
use eiv_core::diagnostics::{
    cone_top_norm_check, estimate_lq_sensitivity, estimate_re_constant, falsify_lower_re, falsify_upper_re,
    lower_re_margin, sample_cone_vector, upper_re_margin,
};
use eiv_core::linalg::sym_eigenvalues;
use eiv_core::simulate::{gen_beta, EntryDist, InstanceSampler};
use eiv_core::surrogate::{build_surrogate, estimate_tau_b};
use eiv_core::{rng, CovarianceSpec, Factorization};
use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// For AR(1) with positive rho the best s-sparse support is a contiguous
/// block, so rho_max(s) is the top eigenvalue of the leading s x s block.
fn ar1_rho_max(a: &CovarianceSpec, s: usize) -> f64 {
    let block = a.matrix().slice(s![..s, ..s]).to_owned();
    sym_eigenvalues(block.view()).unwrap()[0]
}

#[test]
fn s0_matches_brute_scan_on_ar1() {
    let (m, n) = (256, 1200);
    let a = CovarianceSpec::ar1(m, 0.3).unwrap();
    let b = CovarianceSpec::ar1(n, 0.3).unwrap().scaled(0.3).unwrap();
    let tau_b = b.trace() / n as f64;
    let lmin = a.lambda_min().unwrap();
    for c in [1.0, 1.0 / 16.0, 1.0 / 32.0] {
        let reg = compute_regularity(&a, &b, n, &RegularityOptions { c, ..Default::default() }).unwrap();
        let rhs = lmin / (32.0 * c) * (n as f64 / (m as f64).ln()).sqrt();
        let holds = |s: usize| (s as f64).sqrt() * (ar1_rho_max(&a, s) + tau_b) <= rhs;
        let mut want = 0;
        for s in 1..=m {
            if holds(s) {
                want = s;
            } else {
                break;
            }
        }
        let want = want.max(1);
        assert_eq!(reg.s0, want, "C = {c}");
        assert!((reg.vp_s0 - (ar1_rho_max(&a, want) + tau_b)).abs() < 1e-9);
        if want < m && holds(want) {
            assert!(!holds(want + 1));
        }
    }
}

#[test]
fn oracle_psi_below_basic_psi_when_premises_hold() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for _ in 0..40 {
        let m = 64;
        let n = 80;
        let a = CovarianceSpec::ar1(m, r.random_range(0.0..0.8)).unwrap();
        let b = CovarianceSpec::ar1(n, r.random_range(0.0..0.8))
            .unwrap()
            .scaled(r.random_range(0.01..0.3))
            .unwrap();
        let reg = compute_regularity(&a, &b, n, &RegularityOptions::default()).unwrap();
        let rates = compute_rates(m, n, &RateConfig::default()).unwrap();
        let p = compute_penalty_plan(&reg, &rates, 5.0, reg.tau_b, reg.d_ora, PenaltyVariant::Oracle).unwrap();
        if reg.tau_b_plus_half <= 1.0 && reg.d0_prime <= reg.d2 {
            checked += 1;
            assert!(p.psi_oracle <= p.psi_basic);
        }
        assert!(reg.d0 <= reg.d0_prime + 1e-12);
    }
    assert!(checked > 0);
}

fn calibrated_gamma(m: usize, n: usize, seed: u64) -> (Array2<f64>, CovarianceSpec, CovarianceSpec) {
    let a = Arc::new(CovarianceSpec::ar1(m, 0.3).unwrap());
    let b = Arc::new(CovarianceSpec::ar1(n, 0.3).unwrap().scale_to_trace(n, 0.3).unwrap());
    let sampler = InstanceSampler::new(a.clone(), b.clone(), Factorization::Cholesky).unwrap();
    let beta = gen_beta(m, 4, 5.0, seed).unwrap();
    let inst = sampler.sample(&beta, 4, 1.0, EntryDist::Gaussian, seed).unwrap();
    let tau = estimate_tau_b(inst.x.view(), a.trace());
    let pair = build_surrogate(inst.x.view(), inst.y.view(), tau).unwrap();
    (pair.gamma_hat, (*a).clone(), (*b).clone())
}

#[test]
fn probes_are_deterministic_and_witnesses_recheck() {
    let (g, _, _) = calibrated_gamma(40, 60, 1);
    let lo1 = falsify_lower_re(g.view(), 0.8, 0.001, 500, 9).unwrap();
    let lo2 = falsify_lower_re(g.view(), 0.8, 0.001, 500, 9).unwrap();
    assert_eq!(lo1, lo2);
    let w = Array1::from(lo1.witness.clone());
    assert!((lower_re_margin(g.view(), w.view(), 0.8, 0.001) - lo1.worst_margin).abs() <= 1e-10);
    let up = falsify_upper_re(g.view(), 0.5, 0.0, 500, 9).unwrap();
    let w = Array1::from(up.witness.clone());
    assert!((upper_re_margin(g.view(), w.view(), 0.5, 0.0) - up.worst_margin).abs() <= 1e-10);
    assert!(up.violated());
}

#[test]
fn calibrated_surrogate_satisfies_upper_re() {
    let (m, n) = (64, 1500);
    let (g, a, b) = calibrated_gamma(m, n, 3);
    let reg = compute_regularity(&a, &b, n, &RegularityOptions::default()).unwrap();
    let r = falsify_upper_re(g.view(), reg.smoothness, reg.tau_tol, 100_000, 5).unwrap();
    assert!(!r.violated(), "{}", r.worst_margin);
}

#[test]
fn cone_top_norm_holds_on_random_cone_vectors() {
    let mut r = rng::stream(4, "cone", &[]);
    let mut tested = 0;
    while tested < 10_000 {
        let p = r.random_range(2..40);
        let d0 = r.random_range(1..=p.min(6));
        let k0 = r.random_range(0.0..3.0);
        let (v, _) = sample_cone_vector(&mut r, p, d0, k0);
        if let Ok(ok) = cone_top_norm_check(v.view(), d0, k0) {
            assert!(ok);
            tested += 1;
        }
    }
}

#[test]
fn lq_sensitivity_q1_below_q2_on_same_samples() {
    let (g, _, _) = calibrated_gamma(30, 50, 2);
    for seed in 0..5 {
        let k1 = estimate_lq_sensitivity(g.view(), 3, 1.0, 1.0, 300, seed).unwrap();
        let k2 = estimate_lq_sensitivity(g.view(), 3, 1.0, 2.0, 300, seed).unwrap();
        assert!(k1 <= k2 + 1e-15);
    }
}

#[test]
fn re_constant_respects_lower_re_bound() {
    // Gamma = D^T D with D a random design; if Lower-RE holds at (alpha, tau)
    // with tau (1 + k0)^2 s0 <= alpha / 2, then 1/K >= sqrt(alpha / 2).
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let (q, p, s0, k0) = (60, 20, 2, 1.0);
    for _ in 0..5 {
        let d = Array2::from_shape_simple_fn((q, p), || r.random_range(-1.0..1.0) / (q as f64 / 3.0).sqrt());
        let g = d.t().dot(&d);
        let alpha = 0.5 * sym_eigenvalues(g.view()).unwrap()[p - 1];
        let tau = alpha / (2.0 * (1.0 + k0) * (1.0 + k0) * s0 as f64);
        let probe = falsify_lower_re(g.view(), alpha, tau, 1000, 1).unwrap();
        assert!(!probe.violated());
        let (est, _) = estimate_re_constant(d.view(), s0, k0, 500, 2).unwrap();
        assert!(est >= (alpha / 2.0).sqrt() - 0.05, "{est} vs {}", (alpha / 2.0).sqrt());
    }
}
