use nalgebra::DMatrix;
use proptest::prelude::*;

use sfpca::adversarial::hellinger_affinity;
use sfpca::basis::{make_basis, smooth, CurveArray};
use sfpca::covariance::{empirical_gram, CovOperator, GramOperator};
use sfpca::estimator::{objective, solve_penalized, SolverConfig};
use sfpca::fnspace::{
    h_inner, norms, project_l1_ball, project_l2_ball, sign_map, soft_threshold, tensor_hs_norm, CoefVector,
};
use sfpca::harness::io::{read_rate_csv, write_rate_csv};
use sfpca::harness::RateRecord;
use sfpca::tuning::{lambda1_formula, oracle_lhs, TuningInputs, TuningMode};

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..6, 1usize..4)
}

fn coefs(m: usize, d: usize) -> impl Strategy<Value = CoefVector> {
    prop::collection::vec(-3.0f64..3.0, m * d).prop_map(move |v| CoefVector::new(v, m, d).unwrap())
}

fn triple() -> impl Strategy<Value = (CoefVector, CoefVector, CoefVector)> {
    shape().prop_flat_map(|(m, d)| (coefs(m, d), coefs(m, d), coefs(m, d)))
}

fn pair() -> impl Strategy<Value = (CoefVector, CoefVector)> {
    shape().prop_flat_map(|(m, d)| (coefs(m, d), coefs(m, d)))
}

fn gram() -> impl Strategy<Value = GramOperator> {
    shape().prop_flat_map(|(m, d)| {
        let k = m * d;
        prop::collection::vec(-1.0f64..1.0, k * (k + 2)).prop_map(move |v| {
            let x = DMatrix::from_vec(k, k + 2, v);
            GramOperator::new(&x * x.transpose(), m, d).unwrap()
        })
    })
}

fn combo(a: &CoefVector, b: &CoefVector, s: f64, t: f64) -> CoefVector {
    let v = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| s * x + t * y).collect();
    CoefVector::new(v, a.m(), a.d()).unwrap()
}

fn dist(a: &CoefVector, b: &CoefVector) -> f64 {
    combo(a, b, 1.0, -1.0).norm()
}

proptest! {
    #[test]
    fn inner_product_is_symmetric_and_bilinear((a, b, c) in triple(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        prop_assert!((h_inner(&a, &b).unwrap() - h_inner(&b, &a).unwrap()).abs() <= 1e-12);
        let lhs = h_inner(&combo(&a, &b, s, t), &c).unwrap();
        let rhs = s * h_inner(&a, &c).unwrap() + t * h_inner(&b, &c).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()) * 100.0);
    }

    #[test]
    fn tensor_norm_matches_outer_product((a, b) in pair()) {
        let outer = DMatrix::from_fn(a.len(), b.len(), |i, j| a.as_slice()[i] * b.as_slice()[j]);
        prop_assert!((tensor_hs_norm(&a, &b).unwrap() - outer.norm()).abs() <= 1e-10);
    }

    #[test]
    fn sign_pairing_is_coefficient_l1(a in shape().prop_flat_map(|(m, d)| coefs(m, d))) {
        let abs = CoefVector::new(a.as_slice().iter().map(|v| v.abs()).collect(), a.m(), a.d()).unwrap();
        let ones = CoefVector::new(vec![1.0; a.len()], a.m(), a.d()).unwrap();
        prop_assert_eq!(h_inner(&sign_map(&a), &a).unwrap(), h_inner(&abs, &ones).unwrap());
    }

    #[test]
    fn projections_are_idempotent_and_nonexpansive((a, b) in pair(), r in 0.0f64..4.0) {
        let pa = project_l1_ball(&a, r).unwrap();
        let pb = project_l1_ball(&b, r).unwrap();
        prop_assert!(dist(&project_l1_ball(&pa, r).unwrap(), &pa) <= 1e-12);
        prop_assert!(dist(&pa, &pb) <= dist(&a, &b) + 1e-12);
        let c = CoefVector::zeros(a.m(), a.d());
        let qa = project_l2_ball(&a, &c, r).unwrap();
        let qb = project_l2_ball(&b, &c, r).unwrap();
        prop_assert!(dist(&project_l2_ball(&qa, &c, r).unwrap(), &qa) <= 1e-12);
        prop_assert!(dist(&qa, &qb) <= dist(&a, &b) + 1e-12);
    }

    #[test]
    fn soft_threshold_shrinks_l1(a in shape().prop_flat_map(|(m, d)| coefs(m, d)), tau in 0.0f64..2.0) {
        prop_assert!(norms(&soft_threshold(&a, tau).unwrap()).l1_norm <= norms(&a).l1_norm);
    }

    #[test]
    fn riemann_orthonormality(m in 1usize..12, k in 2usize..10) {
        let b = make_basis(m, m * k).unwrap();
        prop_assert!(b.riemann_defect() <= 1e-12);
    }

    #[test]
    fn smoothing_is_linear(
        (m, k, d, n) in (1usize..5, 1usize..5, 1usize..3, 1usize..4),
        s in -2.0f64..2.0,
        t in -2.0f64..2.0,
        seed in 0u64..1000,
    ) {
        let p = m * k.max(2);
        let b = make_basis(m, p).unwrap();
        let len = n * d * p;
        let y1: Vec<f64> = (0..len).map(|i| ((i as u64 * 7 + seed) as f64).sin()).collect();
        let y2: Vec<f64> = (0..len).map(|i| ((i as u64 * 3 + seed) as f64).cos()).collect();
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(a, c)| s * a + t * c).collect();
        let a1 = smooth(&CurveArray::new(y1, n, d, p).unwrap(), &b).unwrap();
        let a2 = smooth(&CurveArray::new(y2, n, d, p).unwrap(), &b).unwrap();
        let am = smooth(&CurveArray::new(mix, n, d, p).unwrap(), &b).unwrap();
        for ((u, v), w) in a1.data().iter().zip(a2.data()).zip(am.data()) {
            prop_assert!((s * u + t * v - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn empirical_gram_is_symmetric_psd((m, k, d, n) in (1usize..5, 1usize..4, 1usize..3, 1usize..6), seed in 0u64..1000) {
        let p = m * (k + 1);
        let b = make_basis(m, p).unwrap();
        let y: Vec<f64> = (0..n * d * p).map(|i| ((i as u64 * 13 + seed) as f64 * 0.7).sin()).collect();
        let g = empirical_gram(&smooth(&CurveArray::new(y, n, d, p).unwrap(), &b).unwrap()).unwrap();
        let mat = g.matrix();
        prop_assert_eq!(mat, &mat.transpose());
        let min = nalgebra::SymmetricEigen::new(mat.clone()).eigenvalues.min();
        prop_assert!(min >= -1e-12 * mat.amax().max(1.0));
    }

    #[test]
    fn solver_descends_and_stays_feasible(g in gram(), lambda in 0.0f64..0.5, t in 0.2f64..3.0, eta_frac in 0.05f64..1.0) {
        let pre = sfpca::estimator::pre_estimate(&g).unwrap();
        let eta = eta_frac * pre.g_init.norm().max(1e-3);
        let mut cfg = SolverConfig::new(lambda, t, eta);
        cfg.max_iters = 300;
        let init = pre.g_init.clone();
        let res = match solve_penalized(&g, &cfg, &init) {
            Ok(r) => r,
            Err(sfpca::Error::Infeasible(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        for w in res.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        let l1 = norms(&res.g_hat).l1_norm;
        prop_assert!(l1 <= t * (1.0 + 1e-9));
        prop_assert!(dist(&res.g_hat, &init) <= eta * (1.0 + 1e-9));

        let flipped = solve_penalized(&g, &cfg, &init.neg()).unwrap();
        prop_assert!(dist(&flipped.g_hat, &res.g_hat.neg()) <= 1e-9 * (1.0 + res.g_hat.norm()));
        let fa = objective(&g, &res.g_hat, lambda).unwrap();
        let fb = objective(&g, &flipped.g_hat, lambda).unwrap();
        prop_assert!((fa - fb).abs() <= 1e-10 * fa.abs().max(1.0));
        prop_assert!(g.dim() == res.g_hat.len());
    }

    #[test]
    fn lambda1_monotone(n in 2.0f64..1e6, dm in 2.0f64..1e4, mu in 0.01f64..4.0, k in 0.01f64..4.0, noise in 0.0f64..1.0) {
        let base = lambda1_formula(mu, k, noise, dm, n);
        prop_assert!(lambda1_formula(mu, k, noise, dm, n * 1.5) < base);
        prop_assert!(lambda1_formula(mu, k, noise, dm * 1.5, n) > base);
    }

    #[test]
    fn oracle_condition_never_lost_with_more_samples(n in 1usize..1_000_000, t in 0.0f64..3.0, rhs in 0.0f64..2.0) {
        let mut g = vec![0.0; 16];
        g[0] = 0.9;
        let inp = |n: usize| TuningInputs {
            n, p: 8, d: 2, m: 8, s: 1, sigma: 0.3, kinf: 1.0, mu1_tilde: 1.0, l_holder: 0.01, alpha: 0.5,
            g_ref: CoefVector::new(g.clone(), 8, 2).unwrap(), mode: TuningMode::Oracle,
        };
        if oracle_lhs(&inp(n), t) <= rhs {
            prop_assert!(oracle_lhs(&inp(2 * n), t) <= rhs);
        }
    }

    #[test]
    fn hellinger_affinity_symmetric_and_one_on_equal(k in 1usize..6, eps in 0.0f64..0.5, seed in 0u64..100) {
        let a = DMatrix::from_fn(k, k, |i, j| ((i * 5 + j * 3) as f64 + seed as f64).sin());
        let g0 = &a * a.transpose() + DMatrix::identity(k, k);
        let mut g1 = g0.clone();
        g1[(0, 0)] += eps;
        let ab = hellinger_affinity(&g0, &g1).unwrap();
        let ba = hellinger_affinity(&g1, &g0).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-14);
        prop_assert!((hellinger_affinity(&g0, &g0).unwrap() - 1.0).abs() <= 1e-12);
        if eps > 1e-3 {
            prop_assert!(ab < 1.0);
        }
    }

    #[test]
    fn rate_rows_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 9), ints in prop::collection::vec(0usize..10_000, 8), flag: bool) {
        let r = RateRecord {
            n: ints[0], p: ints[1], d: ints[2], m: ints[3], s: ints[4], sigma: vals[0].abs(), seed: ints[5] as u64,
            lambda: vals[1], t_radius: vals[2], eta: vals[3], err_g: vals[4], err_f: vals[5], err_f_pca: vals[6],
            iterations: ints[6], stationarity_gap: vals[7], oracle_satisfied: flag, wall_ms: vals[8].abs(),
            replicate: ints[7], status: "ok".into(),
        };
        let mut buf = Vec::new();
        write_rate_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        prop_assert_eq!(read_rate_csv(&buf[..]).unwrap(), vec![r]);
    }
}
