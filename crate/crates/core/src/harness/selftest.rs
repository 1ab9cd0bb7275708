//! Quick invariant checks runnable from the command line.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::stats::fit_loglog;
use crate::adversarial::build_pair;
use crate::basis::{make_basis, project_function};
use crate::covariance::{remainder_report, CovOperator, GramOperator, KernelSpec};
use crate::estimator::{gradient_smooth, objective, solve_penalized, SolverConfig};
use crate::fnspace::{norms, project_l1_ball, CoefVector};
use crate::simulate::stream_rng;

fn random_gram(m: usize, d: usize, seed: u64) -> GramOperator {
    let mut rng = stream_rng(seed, 0);
    let k = m * d;
    let a: DMatrix<f64> = DMatrix::from_fn(k, k + 2, |_, _| StandardNormal.sample(&mut rng));
    GramOperator::new(&a * a.transpose() / (k + 2) as f64, m, d).expect("square PSD")
}

fn random_vec(m: usize, d: usize, seed: u64) -> CoefVector {
    let mut rng = stream_rng(seed, 1);
    CoefVector::new((0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect(), m, d).expect("shape")
}

fn projection_is_idempotent() -> bool {
    let Ok(b) = make_basis(4, 16) else { return false };
    let f = |c: usize, t: f64| if c == 0 { (3.0 * t).sin() } else { t * t };
    let a = project_function(f, 2, &b);
    let again = project_function(|c, t| crate::basis::eval_coefs(&a, &b, c, t), 2, &b);
    a.as_slice().iter().zip(again.as_slice()).all(|(x, y)| (x - y).abs() < 1e-9)
}

fn l1_projection_is_feasible() -> bool {
    (0..20).all(|k| {
        let a = random_vec(4, 3, k);
        let r = 0.5 + k as f64 * 0.1;
        project_l1_ball(&a, r).is_ok_and(|z| z.as_slice().iter().map(|v| v.abs()).sum::<f64>() <= r * (1.0 + 1e-12))
    })
}

fn gradient_matches_differences() -> bool {
    (0..10).all(|k| {
        let g = random_gram(3, 2, 100 + k);
        let a = random_vec(3, 2, 200 + k);
        let Ok(grad) = gradient_smooth(&g, &a) else { return false };
        let h = 1e-6;
        (0..a.len()).all(|i| {
            let mut up = a.as_slice().to_vec();
            let mut dn = a.as_slice().to_vec();
            up[i] += h;
            dn[i] -= h;
            let fu = objective(&g, &CoefVector::new(up, 3, 2).expect("shape"), 0.0).unwrap_or(f64::NAN);
            let fd = objective(&g, &CoefVector::new(dn, 3, 2).expect("shape"), 0.0).unwrap_or(f64::NAN);
            let fdiff = (fu - fd) / (2.0 * h);
            (fdiff - grad.as_slice()[i]).abs() <= 1e-5 * grad.norm().max(1.0)
        })
    })
}

fn unpenalized_solve_is_top_eigenpair() -> bool {
    (0..5).all(|k| {
        let g = random_gram(4, 2, 300 + k);
        let (vals, vecs) = g.eigen();
        let top = vals[0];
        let v: Vec<f64> = vecs.column(0).iter().map(|x| x * top.sqrt()).collect();
        let init = random_vec(4, 2, 400 + k);
        let Ok(res) = solve_penalized(&g, &SolverConfig::default(), &init) else { return false };
        let e = res.g_hat.as_slice();
        let minus: f64 = e.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
        let plus: f64 = e.iter().zip(&v).map(|(a, b)| (a + b).powi(2)).sum();
        minus.min(plus).sqrt() <= 1e-6 && g.dim() == 8
    })
}

fn brownian_remainders() -> bool {
    let (Ok(spec), Ok(b)) = (KernelSpec::brownian(1), make_basis(4, 64)) else { return false };
    remainder_report(&spec, &b, 0.25).is_ok_and(|r| r.rn_vanishes() && r.rk_within_bound())
}

fn pair_construction() -> bool {
    build_pair(2, 200, 33, 4, 1.0, 3).is_ok_and(|(pair, _)| (pair.norm_f11() - 1.0).abs() <= 1e-8 && pair.discrete_mean() == 0.0)
}

fn slope_fixture() -> bool {
    let xs = [100.0, 200.0, 400.0, 800.0];
    let ys: Vec<f64> = xs.iter().map(|x| 5.0 / x).collect();
    fit_loglog(&xs, &ys).is_ok_and(|f| (f.slope + 1.0).abs() < 1e-10)
}

fn norm_conversions() -> bool {
    let a = random_vec(8, 2, 9);
    let r = norms(&a);
    let l1: f64 = a.as_slice().iter().map(|v| v.abs()).sum::<f64>() / 8f64.sqrt();
    let sup = a.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs())) * 8f64.sqrt();
    (r.l1_norm - l1).abs() < 1e-12 && (r.sup_norm - sup).abs() < 1e-12
}

/// Named checks with their outcome.
pub fn run() -> Vec<(&'static str, bool)> {
    vec![
        ("projection_idempotent", projection_is_idempotent()),
        ("norm_conversions", norm_conversions()),
        ("l1_projection_feasible", l1_projection_is_feasible()),
        ("gradient_finite_differences", gradient_matches_differences()),
        ("unpenalized_solve_top_eigenpair", unpenalized_solve_is_top_eigenpair()),
        ("brownian_remainders", brownian_remainders()),
        ("pair_construction", pair_construction()),
        ("slope_fixture", slope_fixture()),
    ]
}
