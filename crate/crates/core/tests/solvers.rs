use std::sync::Arc;

use eiv_core::linalg::{norm_inf, norm_l1, norm_l2, sym_eigenvalues};
use eiv_core::simulate::{gen_beta, EntryDist, InstanceSampler};
use eiv_core::solver_conic::{check_cone_constraint, solve_conic, ConicConfig, ConicWorkspace};
use eiv_core::solver_gd::{composite_prox, project_l1_ball, soft_threshold, solve, GdConfig, FEASIBILITY_SLACK};
use eiv_core::surrogate::{build_surrogate, estimate_tau_b, SurrogatePair};
use eiv_core::{CovarianceSpec, Factorization};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn prox_objective(b: &Array1<f64>, v: &Array1<f64>, k: f64) -> f64 {
    0.5 * (b - v).mapv(|x| x * x).sum() + k * norm_l1(b.view())
}

/// Cyclic coordinate descent on `1/2 b^T G b - g^T b + lambda ||b||_1`.
fn lasso_cd(g: &Array2<f64>, c: &Array1<f64>, lambda: f64) -> Array1<f64> {
    let m = c.len();
    let mut b = Array1::<f64>::zeros(m);
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for j in 0..m {
            let partial = c[j] - g.row(j).dot(&b) + g[[j, j]] * b[j];
            let new = partial.signum() * (partial.abs() - lambda).max(0.0) / g[[j, j]];
            delta = delta.max((new - b[j]).abs());
            b[j] = new;
        }
        if delta < 1e-15 {
            break;
        }
    }
    b
}

#[test]
fn noiseless_gd_matches_coordinate_descent() {
    let (m, n, d) = (12, 60, 3);
    let a = Arc::new(CovarianceSpec::ar1(m, 0.3).unwrap());
    let b = Arc::new(CovarianceSpec::zeros(n));
    let sampler = InstanceSampler::new(a, b, Factorization::SymmetricRoot).unwrap();
    for trial in 0..20u64 {
        let beta = gen_beta(m, d, 5.0, trial).unwrap();
        let inst = sampler.sample(&beta, d, 1.0, EntryDist::Gaussian, 1000 + trial).unwrap();
        let pair = build_surrogate(inst.x.view(), inst.y.view(), 0.0).unwrap();
        let lambda = 2.0 * ((m as f64).ln() / n as f64).sqrt();
        let top = sym_eigenvalues(pair.gamma_hat.view()).unwrap()[0];
        let mut cfg = GdConfig::new(lambda, 1e6, 1.5 * top);
        cfg.max_iters = 200_000;
        cfg.tol_rel_obj = 1e-15;
        let out = solve(&pair, &cfg, None).unwrap();
        let oracle = lasso_cd(&pair.gamma_hat, &pair.gamma_vec, lambda);
        let gap = norm_inf((&out.beta_hat - &oracle).view());
        assert!(gap <= 1e-6, "trial {trial}: {gap}");
    }
}

#[test]
fn prox_matches_grid_on_random_3d() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let v = Array1::from_shape_simple_fn(3, || r.random_range(-2.0..2.0));
        let k = r.random_range(0.0..0.7);
        let radius = r.random_range(0.2..2.5);
        let p = composite_prox(v.view(), k, radius);
        // grid over the l1 ball
        // the step divides R so the vertices of the ball are grid points
        let steps = (radius / 0.002).ceil() as i64;
        let h = radius / steps as f64;
        let z_free = soft_threshold(array![v[2]].view(), k)[0];
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in -steps..=steps {
            for j in -steps..=steps {
                let x = i as f64 * h;
                let y = j as f64 * h;
                let rem = radius - x.abs() - y.abs();
                if rem < 0.0 {
                    continue;
                }
                // exact minimization in the third coordinate
                let z = z_free.clamp(-rem, rem);
                let f = 0.5 * ((x - v[0]).powi(2) + (y - v[1]).powi(2) + (z - v[2]).powi(2))
                    + k * (x.abs() + y.abs() + z.abs());
                if f < best.0 {
                    best = (f, [x, y, z]);
                }
            }
        }
        let best = (best.0, Array1::from(best.1.to_vec()));
        let fp = prox_objective(&p, &v, k);
        assert!(fp <= best.0 + 1e-12, "prox worse than grid");
        assert!(best.0 - fp <= 1e-3, "objective gap {}", best.0 - fp);
        // 1-strong convexity turns the objective gap into a distance bound
        assert!(norm_l2((&p - &best.1).view()) <= (2.0 * (best.0 - fp).max(0.0)).sqrt() + 1e-6);
    }
}

#[test]
fn prox_output_is_locally_optimal() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let m = 6;
        let v = Array1::from_shape_simple_fn(m, || r.random_range(-3.0..3.0));
        let k = r.random_range(0.0..1.0);
        let radius = r.random_range(0.5..4.0);
        let p = composite_prox(v.view(), k, radius);
        let base = prox_objective(&p, &v, k);
        for _ in 0..50 {
            let dir = Array1::from_shape_simple_fn(m, || r.random_range(-1.0..1.0));
            let dir = &dir * (1e-3 / norm_l2(dir.view()));
            let q = project_l1_ball((&p + &dir).view(), radius);
            assert!(prox_objective(&q, &v, k) >= base - 1e-8);
        }
    }
}

proptest! {
    #[test]
    fn projection_invariants(v in proptest::collection::vec(-10.0f64..10.0, 1..20), radius in 0.01f64..20.0) {
        let v = Array1::from(v);
        let p = project_l1_ball(v.view(), radius);
        prop_assert!(norm_l1(p.view()) <= radius + FEASIBILITY_SLACK);
        if norm_l1(v.view()) <= radius {
            prop_assert_eq!(&p, &v);
        }
        for (a, b) in p.iter().zip(v.iter()) {
            prop_assert!(a * b >= 0.0 && a.abs() <= b.abs() + 1e-12);
        }
    }

    #[test]
    fn prox_full_shrinkage(v in proptest::collection::vec(-10.0f64..10.0, 1..20), radius in 0.01f64..20.0) {
        let v = Array1::from(v);
        let k = norm_inf(v.view());
        prop_assert!(composite_prox(v.view(), k, radius).iter().all(|&x| x == 0.0));
        prop_assert_eq!(composite_prox(v.view(), 0.0, radius), project_l1_ball(v.view(), radius));
    }
}

fn calibrated_pair(m: usize, n: usize, d: usize, seed: u64) -> (SurrogatePair, Array1<f64>, Arc<CovarianceSpec>) {
    let a = Arc::new(CovarianceSpec::ar1(m, 0.3).unwrap());
    let b = Arc::new(CovarianceSpec::ar1(n, 0.3).unwrap().scale_to_trace(n, 0.3).unwrap());
    let sampler = InstanceSampler::new(a.clone(), b, Factorization::Cholesky).unwrap();
    let beta = gen_beta(m, d, 5.0, seed).unwrap();
    let inst = sampler.sample(&beta, d, 1.0, EntryDist::Gaussian, seed).unwrap();
    let tau = estimate_tau_b(inst.x.view(), a.trace());
    (build_surrogate(inst.x.view(), inst.y.view(), tau).unwrap(), beta, a)
}

#[test]
fn descent_when_zeta_dominates_surrogate_spectrum() {
    let (pair, beta, _) = calibrated_pair(64, 100, 4, 1);
    let top = sym_eigenvalues(pair.gamma_hat.view()).unwrap()[0];
    let mut cfg = GdConfig::new(0.2, 5.0 * 2.0, top);
    cfg.beta0 = Some(Array1::from_elem(64, 0.1));
    let out = solve(&pair, &cfg, Some(beta.view())).unwrap();
    let obj: Vec<f64> = out.trace.objectives().collect();
    for w in obj.windows(2) {
        assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0));
    }
}

#[test]
fn iterates_stay_feasible_and_error_contracts() {
    let (m, n, d) = (256, 1200, 16);
    let (pair, beta, a) = calibrated_pair(m, n, d, 7);
    let lmax = a.lambda_max().unwrap();
    let lambda = 0.5 * ((m as f64).ln() / n as f64).sqrt() * 5.0;
    let radius = 5.0 * (d as f64).sqrt();
    let mut cfg = GdConfig::new(lambda, radius, 1.5 * lmax);
    cfg.record_trace = true;
    cfg.beta0 = Some(eiv_core::solver_gd::random_init(m, 5.0, radius, 3));
    let mut iterates_ok = true;
    let out = solve(&pair, &cfg, Some(beta.view())).unwrap();
    assert!(out.trace.converged);
    if norm_l1(out.beta_hat.view()) > radius + FEASIBILITY_SLACK {
        iterates_ok = false;
    }
    assert!(iterates_ok);
    // log opt error over the first iterations decreases with negative slope
    let logs: Vec<f64> = out.trace.records.iter().take(20).map(|r| r.opt_error.ln()).collect();
    let slope = (logs[logs.len() - 1] - logs[0]) / (logs.len() - 1) as f64;
    assert!(slope < -0.1, "slope {slope}");
    let final_stat = out.trace.records.last().unwrap().stat_error;
    assert!(final_stat < 0.5 * 5.0);
}

#[test]
fn conic_optimality_and_monotonicity() {
    let (pair, beta, _) = calibrated_pair(32, 200, 3, 2);
    let root = ((32f64).ln() / 200.0).sqrt();
    let cfg = ConicConfig {
        mu: 0.5 * root,
        omega: 0.1 * root,
        max_iters: 100_000,
        tol_feas: 1e-8,
        tol_gap: 1e-8,
        ..ConicConfig::default()
    };
    let ws = ConicWorkspace::new(&pair).unwrap();
    let sol = ws.solve(&cfg).unwrap();
    assert!(sol.converged, "{sol:?}");
    let bh = sol.beta();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let delta = Array1::from_shape_simple_fn(32, || r.random_range(-1e-2..1e-2));
        let b2 = &bh + &delta;
        // smallest feasible t for b2
        let res = pair.oracle_residual(b2.view()).unwrap();
        let t2 = norm_l2(b2.view()).max((res - cfg.omega).max(0.0) / cfg.mu) + r.random_range(0.0..1e-2);
        assert_eq!(check_cone_constraint(&pair, b2.view(), t2, cfg.mu, cfg.omega).unwrap(), 0.0);
        let obj = norm_l1(b2.view()) + t2;
        assert!(obj >= sol.objective - 10.0 * cfg.tol_gap * 10.0, "{obj} < {}", sol.objective);
    }
    // larger omega or mu never increases the optimum
    let s_omega = ws.solve(&ConicConfig { omega: 2.0 * cfg.omega, ..cfg }).unwrap();
    let s_mu = ws.solve(&ConicConfig { mu: 2.0 * cfg.mu, ..cfg }).unwrap();
    assert!(s_omega.objective <= sol.objective + 1e-6);
    assert!(s_mu.objective <= sol.objective + 1e-6);
    // cone property when the truth is feasible
    let bn = norm_l2(beta.view());
    if check_cone_constraint(&pair, beta.view(), bn, cfg.mu, cfg.omega).unwrap() == 0.0 {
        let v = &bh - &beta;
        let (on, off): (f64, f64) = v.iter().zip(beta.iter()).fold((0.0, 0.0), |(a, b), (&vi, &bi)| {
            if bi != 0.0 { (a + vi.abs(), b) } else { (a, b + vi.abs()) }
        });
        assert!(off <= 2.0 * on + 1e-6 * norm_l1(v.view()));
    }
}

#[test]
fn conic_small_problems_match_grid() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let g: f64 = r.random_range(0.5..2.0);
        let c: f64 = r.random_range(-1.5..1.5);
        let mu = r.random_range(0.1..1.0);
        let omega = r.random_range(0.0..0.3);
        let pair = SurrogatePair {
            gamma_hat: array![[g]],
            gamma_vec: array![c],
            tau_hat_b: 0.0,
            n: 1,
            m: 1,
        };
        let sol = solve_conic(&pair, &ConicConfig::new(mu, omega)).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..=4000 {
            let b = -2.0 + 1e-3 * i as f64;
            // min feasible t is closed form; the grid on t is implied
            let t = b.abs().max(((c - g * b).abs() - omega).max(0.0) / mu);
            if t <= 4.0 {
                best = best.min(b.abs() + t);
            }
        }
        assert!((sol.objective - best).abs() <= 5e-3, "{} vs {best}", sol.objective);
    }
}
