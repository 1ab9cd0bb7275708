//! Penalty level, L1 radius and the oracle inequality that ties them together.

use std::fmt;

use crate::basis::{smooth, HistogramBasis};
use crate::covariance::SampleGram;
use crate::error::{invalid, Error, Result};
use crate::estimator::pre_estimate;
use crate::fnspace::{norms, CoefVector, NormReport};
use crate::simulate::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuningMode {
    /// Norms of the true leading component.
    Oracle,
    /// Norms of the pre-estimate; results are indicative only.
    Practice,
}

impl TuningMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TuningMode::Oracle => "oracle",
            TuningMode::Practice => "practice",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningInputs {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub m: usize,
    pub s: usize,
    pub sigma: f64,
    /// `‖K‖∞`.
    pub kinf: f64,
    /// Top eigenvalue of the projected covariance.
    pub mu1_tilde: f64,
    pub l_holder: f64,
    pub alpha: f64,
    /// Reference component whose norms enter the penalty rule.
    pub g_ref: CoefVector,
    pub mode: TuningMode,
}

impl TuningInputs {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.d == 0 || self.m == 0 || self.s == 0 {
            return invalid("n, p, D, M and s must be positive");
        }
        if self.s > self.d {
            return invalid(format!("sparsity {} exceeds D={}", self.s, self.d));
        }
        if self.p % self.m != 0 {
            return invalid(format!("M={} does not divide p={}", self.m, self.p));
        }
        if self.g_ref.m() != self.m || self.g_ref.d() != self.d {
            return Err(Error::Dimension("reference component has the wrong shape".into()));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("kinf", self.kinf),
            ("mu1_tilde", self.mu1_tilde),
            ("L", self.l_holder),
            ("alpha", self.alpha),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn noise_per_point(&self) -> f64 {
        self.sigma * self.sigma / self.p as f64
    }

    pub fn ref_norms(&self) -> NormReport {
        norms(&self.g_ref)
    }

    /// `3 √(μ̃₁ + σ²/p)`.
    pub fn zeta(&self) -> f64 {
        3.0 * (self.mu1_tilde + self.noise_per_point()).sqrt()
    }

    /// `√(2 log(2pD) / n)`.
    pub fn lambda0(&self) -> f64 {
        (2.0 * (2.0 * (self.p * self.d) as f64).ln() / self.n as f64).sqrt()
    }
}

/// `4 √((μ̃₁ + σ²/p)(‖K‖∞ + σ²/p)) (4 √(log(DM)/n) + log(DM)/n)`.
pub fn lambda1_formula(mu1_tilde: f64, kinf: f64, noise_per_point: f64, dm: f64, n: f64) -> f64 {
    let l = dm.ln();
    4.0 * ((mu1_tilde + noise_per_point) * (kinf + noise_per_point)).sqrt() * (4.0 * (l / n).sqrt() + l / n)
}

pub fn lambda1(inputs: &TuningInputs) -> f64 {
    lambda1_formula(
        inputs.mu1_tilde,
        inputs.kinf,
        inputs.noise_per_point(),
        (inputs.d * inputs.m) as f64,
        inputs.n as f64,
    )
}

/// Smallest admissible penalty:
/// `4(‖g‖(λ₁ + 8√(L‖K‖∞ s)/M^α) + ‖g‖∞ σ²/p + λ₁)`.
pub fn lambda_rule(inputs: &TuningInputs, lambda1: f64) -> Result<f64> {
    let r = inputs.ref_norms();
    if r.h_norm == 0.0 {
        return invalid("reference component is zero");
    }
    let bias = 8.0 * (inputs.l_holder * inputs.kinf * inputs.s as f64).sqrt() / (inputs.m as f64).powf(inputs.alpha);
    Ok(4.0 * (r.h_norm * (lambda1 + bias) + r.sup_norm * inputs.noise_per_point() + lambda1))
}

/// `(‖g‖₁ + T)² √(3 log(pD) / n)`.
pub fn c_t(g_l1: f64, t: f64, p: usize, d: usize, n: usize) -> f64 {
    c_t_formula(g_l1, t, ((p * d) as f64).ln(), n as f64)
}

pub fn c_t_formula(g_l1: f64, t: f64, log_pd: f64, n: f64) -> f64 {
    (g_l1 + t).powi(2) * (3.0 * log_pd / n).sqrt()
}

/// Left side of the oracle inequality at radius `t`.
pub fn oracle_lhs(inputs: &TuningInputs, t: f64) -> f64 {
    let ct = c_t(inputs.ref_norms().l1_norm, t, inputs.p, inputs.d, inputs.n);
    let bias = 8.0 * (inputs.l_holder * inputs.kinf).sqrt() * inputs.d as f64 / (inputs.m as f64).powf(inputs.alpha);
    let noise = inputs.noise_per_point();
    4.0 * (bias + noise + 108.0 * (inputs.mu1_tilde + noise) * ct * (ct + std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub lambda1: f64,
    pub lambda: f64,
    pub c_t: f64,
    pub oracle_lhs: f64,
    pub oracle_rhs: f64,
    pub oracle_satisfied: bool,
    /// Largest radius keeping the oracle inequality true; 0 when none does.
    pub t_suggest: f64,
    /// `s ≤ √(n / log(pD))`.
    pub sparsity_ok: bool,
    pub mode: TuningMode,
}

impl fmt::Display for TuningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode = {}", self.mode.as_str())?;
        if self.mode == TuningMode::Practice {
            writeln!(f, "status = indicative")?;
        }
        writeln!(f, "lambda1 = {:.17e}", self.lambda1)?;
        writeln!(f, "lambda = {:.17e}", self.lambda)?;
        writeln!(f, "c_t = {:.17e}", self.c_t)?;
        writeln!(f, "oracle_lhs = {:.17e}", self.oracle_lhs)?;
        writeln!(f, "oracle_rhs = {:.17e}", self.oracle_rhs)?;
        writeln!(f, "oracle_satisfied = {}", self.oracle_satisfied)?;
        writeln!(f, "t_suggest = {:.17e}", self.t_suggest)?;
        writeln!(f, "sparsity_ok = {}", self.sparsity_ok)
    }
}

/// Largest `t ≥ 0` with `oracle_lhs(t) ≤ rhs`, by bisection.
pub fn t_suggest(inputs: &TuningInputs, rhs: f64) -> f64 {
    if oracle_lhs(inputs, 0.0) > rhs {
        return 0.0;
    }
    let mut hi = 1.0;
    while oracle_lhs(inputs, hi) <= rhs {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if oracle_lhs(inputs, mid) <= rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Evaluate both sides of the oracle inequality at radius `t`.
pub fn oracle_check(inputs: &TuningInputs, t: f64, eta: f64, rho: f64, mu1: f64) -> Result<TuningReport> {
    inputs.validate()?;
    if !(8.0 * eta < rho) {
        return invalid(format!("need 8η < ρ, got η={eta}, ρ={rho}"));
    }
    if !(t >= 0.0) || !(mu1 > 0.0) {
        return invalid("need t ≥ 0 and μ₁ > 0");
    }
    let l1 = lambda1(inputs);
    let lambda = lambda_rule(inputs, l1)?;
    let rhs = mu1.sqrt() * (rho - 8.0 * eta);
    let lhs = oracle_lhs(inputs, t);
    let ceiling = (inputs.n as f64 / ((inputs.p * inputs.d) as f64).ln()).sqrt();
    Ok(TuningReport {
        lambda1: l1,
        lambda,
        c_t: c_t(inputs.ref_norms().l1_norm, t, inputs.p, inputs.d, inputs.n),
        oracle_lhs: lhs,
        oracle_rhs: rhs,
        oracle_satisfied: lhs <= rhs,
        t_suggest: t_suggest(inputs, rhs),
        sparsity_ok: inputs.s as f64 <= ceiling,
        mode: inputs.mode,
    })
}

/// Plug-in estimates of the unknowns entering the tuning rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nuisances {
    pub mu1_tilde: f64,
    pub kinf: f64,
    pub sigma: f64,
    /// Half mean squared first difference, before any correction.
    pub sigma2_raw: f64,
}

/// `holder` is `(α, L)` when known; it removes the process part of the increments.
pub fn estimate_nuisances(y: &ObservationSet, basis: &HistogramBasis, holder: Option<(f64, f64)>) -> Result<Nuisances> {
    let (n, d, p) = (y.n(), y.d(), y.p());
    if n < 2 {
        return invalid("need at least two samples");
    }
    if p != basis.p() {
        return Err(Error::Dimension(format!("observations have p={p}, basis has p={}", basis.p())));
    }
    let mut acc = 0.0;
    for i in 0..n {
        for comp in 0..d {
            let c = y.y.curve(i, comp);
            acc += c.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>();
        }
    }
    let sigma2_raw = 0.5 * acc / (n * d * (p - 1)) as f64;
    let correction = holder.map_or(0.0, |(alpha, l)| 0.5 * l * (1.0 / (p - 1) as f64).powf(2.0 * alpha));
    let sigma2 = (sigma2_raw - correction).max(0.0);

    let mut kinf = 0.0_f64;
    for comp in 0..d {
        for h in 0..p {
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in 0..n {
                let v = y.y.get(i, comp, h);
                s1 += v;
                s2 += v * v;
            }
            let mean = s1 / n as f64;
            let var = (s2 - n as f64 * mean * mean) / (n - 1) as f64;
            kinf = kinf.max(var - sigma2);
        }
    }
    let smoothed = smooth(&y.y, basis)?;
    let top = pre_estimate(&SampleGram::new(&smoothed)?)?.mu1;
    Ok(Nuisances {
        mu1_tilde: (top - sigma2 / p as f64).max(0.0),
        kinf: kinf.max(0.0),
        sigma: sigma2.sqrt(),
        sigma2_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::make_basis;
    use crate::simulate::{build_sparse_model, sample_observations, ProcessModel};

    fn inputs(n: usize) -> TuningInputs {
        let mut g = vec![0.0; 8];
        g[0] = 1.0;
        TuningInputs {
            n,
            p: 8,
            d: 2,
            m: 4,
            s: 1,
            sigma: 0.0,
            kinf: 1.0,
            mu1_tilde: 1.0,
            l_holder: 0.0,
            alpha: 0.5,
            g_ref: CoefVector::new(g, 4, 2).unwrap(),
            mode: TuningMode::Oracle,
        }
    }

    #[test]
    fn lambda1_direct_evaluation() {
        let e = std::f64::consts::E;
        let v = lambda1_formula(1.0, 1.0, 0.0, e * e, 4.0);
        let want = 4.0 * (4.0 * 0.5f64.sqrt() + 0.5);
        assert!((v - want).abs() < 1e-12);
        assert!((v - 13.31).abs() < 0.01);
        assert_eq!(lambda1_formula(0.0, 1.0, 0.0, 10.0, 50.0), 0.0);
    }

    #[test]
    fn lambda1_scaling_in_n() {
        for n in [100, 400, 10_000] {
            // the √(log/n) term halves, the log/n term quarters
            let r = lambda1(&inputs(4 * n)) / lambda1(&inputs(n));
            assert!(r > 0.45 && r < 0.5, "{r}");
        }
    }

    #[test]
    fn lambda_rule_limits() {
        let inp = inputs(100);
        let l1 = lambda1(&inp);
        let lam = lambda_rule(&inp, l1).unwrap();
        assert!((lam - 4.0 * l1 * (1.0 + 1.0)).abs() < 1e-12);
        let mut two = inp.clone();
        two.l_holder = 1.0;
        let base = lambda_rule(&two, 0.0).unwrap();
        two.s = 2;
        assert!((lambda_rule(&two, 0.0).unwrap() / base - 2f64.sqrt()).abs() < 1e-12);
        let mut zero = inp.clone();
        zero.g_ref = CoefVector::zeros(4, 2);
        assert!(lambda_rule(&zero, l1).is_err());
    }

    #[test]
    fn c_t_direct_evaluation() {
        // pD = e^(n/3), so 3 log(pD) = n
        assert!((c_t_formula(1.0, 1.0, 30.0 / 3.0, 30.0) - 4.0).abs() < 1e-12);
        assert!((c_t(1.0, 1.0, 1, 3, 3) - 4.0 * 3f64.ln().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn oracle_lhs_monotone_and_limits() {
        let inp = inputs(1000);
        let mut prev = 0.0;
        for k in 0..20 {
            let v = oracle_lhs(&inp, k as f64 * 0.1);
            assert!(v >= prev);
            prev = v;
        }
        let mut tiny = inputs(1_000_000_000);
        tiny.g_ref = CoefVector::new(vec![1e-9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 4, 2).unwrap();
        assert!(oracle_lhs(&tiny, 0.0) < 1e-3);
        assert!(oracle_check(&inp, 1.0, 0.2, 1.0, 1.0).is_err());
    }

    #[test]
    fn larger_n_never_breaks_the_condition() {
        let mut was = false;
        for n in [10, 1000, 100_000, 10_000_000, 1_000_000_000] {
            let r = oracle_check(&inputs(n), 0.5, 0.01, 0.5, 1.0).unwrap();
            assert!(!was || r.oracle_satisfied);
            was = r.oracle_satisfied;
        }
        assert!(was);
    }

    #[test]
    fn t_suggest_is_the_boundary() {
        let inp = inputs(1_000_000_000);
        let rhs = 0.4;
        let t = t_suggest(&inp, rhs);
        assert!(oracle_lhs(&inp, t) <= rhs);
        assert!(oracle_lhs(&inp, t * (1.0 + 1e-9)) > rhs);
    }

    #[test]
    fn nuisances_pure_noise() {
        let model = ProcessModel::constant(1e-300, 2).with_sigma(1.0);
        let basis = make_basis(4, 8).unwrap();
        let y = sample_observations(&model, 2000, 8, 3).unwrap();
        let est = estimate_nuisances(&y, &basis, None).unwrap();
        // top eigenvalue of a noise Gram exceeds σ²/p by about 2√(MD/n) σ²/p
        let se = (1.0 / 8.0) * (2.0 * (8.0f64 / 2000.0).sqrt() + 8.0 / 2000.0);
        assert!(est.mu1_tilde <= 3.0 * se, "{est:?}");
        assert!((est.sigma - 1.0).abs() < 0.05);
    }

    #[test]
    fn nuisances_noiseless_sigma_small() {
        let model = build_sparse_model(2, 1, 2, &[1.0, 0.5], 2).unwrap();
        let basis = make_basis(8, 64).unwrap();
        let y = sample_observations(&model, 500, 64, 5).unwrap();
        let est = estimate_nuisances(&y, &basis, None).unwrap();
        let bound = model.holder_l() * (1.0 / 64.0f64).powf(2.0 * model.alpha()) * 2.0;
        assert!(est.sigma.powi(2) <= bound, "{} vs {bound}", est.sigma.powi(2));
        let corrected = estimate_nuisances(&y, &basis, Some((model.alpha(), model.holder_l()))).unwrap();
        assert!(corrected.sigma <= est.sigma);
    }

    #[test]
    fn nuisances_rank_one_band() {
        let model = build_sparse_model(2, 1, 1, &[1.0], 4).unwrap();
        let basis = make_basis(16, 64).unwrap();
        let y = sample_observations(&model, 4000, 64, 8).unwrap();
        let est = estimate_nuisances(&y, &basis, None).unwrap();
        let (a, l) = (model.alpha(), model.holder_l());
        let band = 8.0 * 2.0 * (model.kinf() * l).sqrt() / ((a + 1.0) * 16f64.powf(a));
        let se = 3.0 * (2.0f64 / 4000.0).sqrt();
        assert!((est.mu1_tilde - 1.0).abs() <= band + se, "{est:?} band {band}");
    }
}
