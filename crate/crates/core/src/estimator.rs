//! Penalized rank-one fit of the covariance operator.
//!
//! The smooth part `‖G − a aᵀ‖_F²` is non-convex but locally strongly convex
//! around the leading scaled eigenvector, so the solver is started from a
//! spectral pre-estimate and confined to a Euclidean ball around it.

use rand_distr::{Distribution, StandardNormal};

use crate::covariance::{sorted_eigen, CovOperator};
use crate::error::{invalid, Error, Result};
use crate::fnspace::{
    axpy, dist2, dot, l1, norm2, project_l1_ball_in_place, project_l2_ball_in_place, soft_threshold_in_place, CoefVector,
};
use crate::simulate::stream_rng;

fn check_dim<G: CovOperator + ?Sized>(g: &G, a: &CoefVector) -> Result<()> {
    if g.m() != a.m() || g.d() != a.d() {
        return Err(Error::Dimension(format!(
            "operator is (M={}, D={}), vector is (M={}, D={})",
            g.m(),
            g.d(),
            a.m(),
            a.d()
        )));
    }
    Ok(())
}

fn penalty_per_coef(lambda: f64, m: usize) -> f64 {
    lambda / (m as f64).sqrt()
}

/// `‖G − a aᵀ‖_F² + λ ‖a‖₁`, with `‖·‖₁` the function L1 norm.
pub fn objective<G: CovOperator + ?Sized>(g: &G, a: &CoefVector, lambda: f64) -> Result<f64> {
    check_dim(g, a)?;
    let x = a.as_slice();
    let n2 = dot(x, x);
    Ok(g.frobenius_sq() - 2.0 * g.quad_form(x) + n2 * n2 + penalty_per_coef(lambda, a.m()) * l1(x))
}

/// `4(‖a‖² a − G a)`.
pub fn gradient_smooth<G: CovOperator + ?Sized>(g: &G, a: &CoefVector) -> Result<CoefVector> {
    check_dim(g, a)?;
    let x = a.as_slice();
    let mut ga = vec![0.0; x.len()];
    g.apply(x, &mut ga);
    let n2 = dot(x, x);
    let out = x.iter().zip(&ga).map(|(xi, gi)| 4.0 * (n2 * xi - gi)).collect();
    Ok(a.with_coeffs(out))
}

/// `4(‖a‖²‖x‖² + 2⟨a, x⟩² − xᵀ G x)`.
pub fn hessian_quadratic_form<G: CovOperator + ?Sized>(g: &G, a: &CoefVector, x: &CoefVector) -> Result<f64> {
    check_dim(g, a)?;
    check_dim(g, x)?;
    let (av, xv) = (a.as_slice(), x.as_slice());
    let ax = dot(av, xv);
    Ok(4.0 * (dot(av, av) * dot(xv, xv) + 2.0 * ax * ax - g.quad_form(xv)))
}

/// Leading eigenpair of the empirical Gram, used as starting point and ball center.
#[derive(Debug, Clone, PartialEq)]
pub struct PreEstimate {
    /// `√μ̂₁ v̂₁`.
    pub g_init: CoefVector,
    pub direction: CoefVector,
    pub mu1: f64,
    pub mu2: f64,
    pub iterations: usize,
    /// Top eigenvalue not separated from the second.
    pub degenerate: bool,
}

impl PreEstimate {
    /// `√μ̂₁ − √μ̂₂`.
    pub fn gap(&self) -> f64 {
        self.mu1.max(0.0).sqrt() - self.mu2.max(0.0).sqrt()
    }

    /// Ball radius `ρ̂ / 16`.
    pub fn default_eta(&self) -> f64 {
        self.gap() / 16.0
    }
}

const PRE_BLOCK: usize = 6;
const PRE_MAX_ITERS: usize = 20_000;
const PRE_TOL: f64 = 1e-12;

fn orthonormalize(cols: &mut [Vec<f64>], seed_stream: &mut u64) {
    for j in 0..cols.len() {
        for _attempt in 0..4 {
            let before = norm2(&cols[j]);
            for _pass in 0..2 {
                for i in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let c = dot(&done[i], &rest[0]);
                    axpy(-c, &done[i], &mut rest[0]);
                }
            }
            let after = norm2(&cols[j]);
            if after > 1e-10 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                cols[j].iter_mut().for_each(|v| *v /= after);
                break;
            }
            let mut rng = stream_rng(0x5EED_0001, *seed_stream);
            *seed_stream += 1;
            cols[j].iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        }
    }
}

/// Block subspace iteration with Rayleigh–Ritz extraction.
pub fn pre_estimate<G: CovOperator + ?Sized>(g: &G) -> Result<PreEstimate> {
    let dim = g.dim();
    let k = dim.min(PRE_BLOCK);
    let mut stream = 1u64;
    let mut rng = stream_rng(0x5EED_0001, 0);
    let mut q: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    orthonormalize(&mut q, &mut stream);
    let mut z = vec![vec![0.0; dim]; k];
    let mut x = vec![vec![0.0; dim]; k];
    let mut gx = vec![vec![0.0; dim]; k];
    for it in 1..=PRE_MAX_ITERS {
        g.apply_block(&q, &mut z);
        let h = nalgebra::DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&q[i], &z[j]) + dot(&q[j], &z[i])));
        let (theta, w) = sorted_eigen(&h);
        for c in 0..k {
            x[c].iter_mut().for_each(|v| *v = 0.0);
            gx[c].iter_mut().for_each(|v| *v = 0.0);
            for r in 0..k {
                axpy(w[(r, c)], &q[r], &mut x[c]);
                axpy(w[(r, c)], &z[r], &mut gx[c]);
            }
        }
        let mu1 = theta[0];
        let resid = |c: usize| {
            let t = theta[c];
            x[c].iter().zip(&gx[c]).map(|(xv, gv)| (gv - t * xv).powi(2)).sum::<f64>().sqrt()
        };
        let scale = theta.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let r1 = resid(0);
        let r2 = if k > 1 { resid(1) } else { 0.0 };
        if r1 <= PRE_TOL * scale && r2 <= 1e-8 * scale {
            if mu1 <= 0.0 {
                return invalid("operator has no positive eigenvalue");
            }
            let mu2 = if k > 1 { theta[1] } else { 0.0 };
            let mut v = x[0].clone();
            let imax = v.iter().enumerate().fold(0, |b, (i, c)| if c.abs() > v[b].abs() { i } else { b });
            if v[imax] < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
            let direction = CoefVector::from_parts(v, g.m(), g.d());
            return Ok(PreEstimate {
                g_init: direction.scaled(mu1.sqrt()),
                direction,
                mu1,
                mu2,
                iterations: it,
                degenerate: mu1 - mu2 <= 1e-10 * mu1,
            });
        }
        std::mem::swap(&mut q, &mut gx);
        orthonormalize(&mut q, &mut stream);
    }
    Err(Error::NoConvergence(format!("subspace iteration did not converge in {PRE_MAX_ITERS} iterations")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// Start from the default step, shrink by `beta` until
    /// `F(a⁺) ≤ F(a) − (c / γ) ‖a⁺ − a‖²`.
    Backtracking { beta: f64, c: f64 },
}

/// How the penalty and the two constraints are combined in one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxMode {
    /// Soft-threshold, then the L1 ball, then the Euclidean ball.
    Sequential,
    /// Soft-threshold, then Dykstra's projection onto the intersection.
    Dykstra,
    /// The exact proximal map of penalty plus both constraints.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Penalty weight on the function L1 norm.
    pub lambda: f64,
    /// L1 radius in function units (`∞` switches the constraint off).
    pub t_radius: f64,
    /// Radius of the ball around the starting point (`∞` switches it off).
    pub eta: f64,
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub tol_stationarity: f64,
    pub tol_step: f64,
    pub prox: ProxMode,
    /// `‖G‖₂` if known; sets the initial step.
    pub gram_norm: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            t_radius: f64::INFINITY,
            eta: f64::INFINITY,
            max_iters: 5000,
            step_rule: StepRule::Backtracking { beta: 0.5, c: 1e-4 },
            tol_stationarity: 1e-9,
            tol_step: 1e-15,
            prox: ProxMode::Exact,
            gram_norm: None,
        }
    }
}

impl SolverConfig {
    pub fn new(lambda: f64, t_radius: f64, eta: f64) -> Self {
        Self { lambda, t_radius, eta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return invalid(format!("penalty must be finite and nonnegative, got {}", self.lambda));
        }
        if !(self.t_radius > 0.0) {
            return invalid(format!("L1 radius must be positive, got {}", self.t_radius));
        }
        if !(self.eta > 0.0) {
            return invalid(format!("ball radius must be positive, got {}", self.eta));
        }
        if !(self.tol_stationarity > 0.0 && self.tol_step > 0.0) {
            return invalid("tolerances must be positive");
        }
        match self.step_rule {
            StepRule::Fixed(g) if !(g > 0.0 && g.is_finite()) => invalid(format!("step must be positive, got {g}")),
            StepRule::Backtracking { beta, c } if !(beta > 0.0 && beta < 1.0 && c > 0.0 && c < 1.0) => {
                invalid("backtracking needs beta and c in (0, 1)")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Binding {
    pub l1_constraint: bool,
    pub ball: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Stalled,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub g_hat: CoefVector,
    /// `ĝ / ‖ĝ‖`, or zero when `ĝ = 0`.
    pub f_hat: CoefVector,
    /// `‖ĝ‖²`.
    pub mu_hat: f64,
    /// Objective after each accepted step, shifted by the constant `−‖G‖_F²`.
    pub objective_trace: Vec<f64>,
    /// Proximal-gradient residual `‖a⁺ − a‖ / γ` at the returned point.
    pub stationarity_gap: f64,
    pub iterations: usize,
    pub binding: Binding,
    pub stop: StopReason,
}

struct Prox<'a> {
    tau: f64,
    r: f64,
    eta: f64,
    center: &'a [f64],
    mode: ProxMode,
}

impl Prox<'_> {
    fn feasible_gap(&self, z: &[f64]) -> (f64, f64) {
        (l1(z) - self.r, dist2(z, self.center) - self.eta)
    }

    /// Prox of `γτ‖·‖₁` plus the L1-ball indicator.
    fn shrink_l1(u: &mut [f64], tau: f64, r: f64, scratch: &mut Vec<f64>) {
        scratch.clear();
        scratch.extend_from_slice(u);
        soft_threshold_in_place(u, tau);
        if l1(u) > r {
            u.copy_from_slice(scratch);
            project_l1_ball_in_place(u, r);
        }
    }

    fn apply(&self, v: &[f64], gamma: f64, out: &mut Vec<f64>) {
        let tau = gamma * self.tau;
        out.clear();
        out.extend_from_slice(v);
        match self.mode {
            ProxMode::Sequential => {
                soft_threshold_in_place(out, tau);
                project_l1_ball_in_place(out, self.r);
                project_l2_ball_in_place(out, self.center, self.eta);
            }
            ProxMode::Dykstra => {
                soft_threshold_in_place(out, tau);
                self.dykstra(out);
            }
            ProxMode::Exact => self.exact(v, tau, out),
        }
    }

    fn dykstra(&self, x: &mut [f64]) {
        if self.r.is_infinite() {
            project_l2_ball_in_place(x, self.center, self.eta);
            return;
        }
        if self.eta.is_infinite() {
            project_l1_ball_in_place(x, self.r);
            return;
        }
        let n = x.len();
        let (mut p, mut q) = (vec![0.0; n], vec![0.0; n]);
        let mut y = vec![0.0; n];
        let mut prev = x.to_vec();
        for _ in 0..10_000 {
            for i in 0..n {
                y[i] = x[i] + p[i];
            }
            project_l1_ball_in_place(&mut y, self.r);
            for i in 0..n {
                p[i] += x[i] - y[i];
                x[i] = y[i] + q[i];
            }
            project_l2_ball_in_place(x, self.center, self.eta);
            for i in 0..n {
                q[i] += y[i] - x[i];
            }
            if dist2(x, &prev) <= 1e-15 * norm2(x).max(1.0) {
                break;
            }
            prev.copy_from_slice(x);
        }
    }

    /// Ball multiplier `μ` found by bisection on `‖z(μ) − c‖ = η`.
    fn exact(&self, v: &[f64], tau: f64, out: &mut Vec<f64>) {
        let mut scratch = Vec::with_capacity(v.len());
        let eval = |mu: f64, out: &mut Vec<f64>, scratch: &mut Vec<f64>| {
            out.clear();
            out.extend(v.iter().zip(self.center).map(|(vi, ci)| (vi + mu * ci) / (1.0 + mu)));
            Self::shrink_l1(out, tau / (1.0 + mu), self.r, scratch);
            dist2(out, self.center)
        };
        if eval(0.0, out, &mut scratch) <= self.eta {
            return;
        }
        let mut hi = 1.0;
        while eval(hi, out, &mut scratch) > self.eta {
            hi *= 2.0;
            if hi > 1e300 {
                return;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if eval(mid, out, &mut scratch) > self.eta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        eval(hi, out, &mut scratch);
    }
}

/// Rough `‖G‖₂` by a few power steps.
fn gram_norm_estimate<G: CovOperator + ?Sized>(g: &G) -> f64 {
    let dim = g.dim();
    let mut rng = stream_rng(0x5EED_0002, 0);
    let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = vec![0.0; dim];
    let mut est = 0.0;
    for _ in 0..30 {
        let nx = norm2(&x);
        if nx == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        g.apply(&x, &mut y);
        est = norm2(&y);
        std::mem::swap(&mut x, &mut y);
    }
    est
}

/// Projected proximal gradient on the penalized rank-one objective, with the
/// ball centered at `init`.
pub fn solve_penalized<G: CovOperator + ?Sized>(g: &G, config: &SolverConfig, init: &CoefVector) -> Result<SolveResult> {
    config.validate()?;
    check_dim(g, init)?;
    let m = g.m();
    let dim = g.dim();
    let prox = Prox {
        tau: penalty_per_coef(config.lambda, m),
        r: config.t_radius * (m as f64).sqrt(),
        eta: config.eta,
        center: init.as_slice(),
        mode: config.prox,
    };
    let mut a = init.as_slice().to_vec();
    project_l1_ball_in_place(&mut a, prox.r);
    if dist2(&a, prox.center) > prox.eta {
        return Err(Error::Infeasible("the L1 ball does not meet the ball around the starting point".into()));
    }

    let mut ga = vec![0.0; dim];
    let value = |x: &[f64], q: f64| {
        let n2 = dot(x, x);
        -2.0 * q + n2 * n2 + prox.tau * l1(x)
    };
    let grad = |x: &[f64], gx: &[f64], out: &mut [f64]| {
        let n2 = dot(x, x);
        for ((o, xi), gi) in out.iter_mut().zip(x).zip(gx) {
            *o = 4.0 * (n2 * xi - gi);
        }
    };
    let mut fa = value(&a, g.apply_with_quad(&a, &mut ga));
    let mut gamma = match config.step_rule {
        StepRule::Fixed(s) => s,
        StepRule::Backtracking { .. } => {
            let norm = config.gram_norm.unwrap_or_else(|| gram_norm_estimate(g));
            1.0 / (8.0 * (norm + 3.0 * dot(&a, &a))).max(f64::MIN_POSITIVE)
        }
    };
    let mut trace = vec![fa];
    let mut grad_a = vec![0.0; dim];
    let mut step = vec![0.0; dim];
    let mut z = Vec::with_capacity(dim);
    let mut gz = vec![0.0; dim];
    let mut gap = f64::INFINITY;
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;

    if config.max_iters == 0 {
        grad(&a, &ga, &mut grad_a);
        for i in 0..dim {
            step[i] = a[i] - gamma * grad_a[i];
        }
        prox.apply(&step, gamma, &mut z);
        gap = dist2(&z, &a) / gamma;
    }

    while iterations < config.max_iters {
        grad(&a, &ga, &mut grad_a);
        let mut accepted = false;
        let mut fz = fa;
        for _trial in 0..200 {
            for i in 0..dim {
                step[i] = a[i] - gamma * grad_a[i];
            }
            prox.apply(&step, gamma, &mut z);
            fz = value(&z, g.apply_with_quad(&z, &mut gz));
            if !fz.is_finite() {
                if let StepRule::Backtracking { beta, .. } = config.step_rule {
                    gamma *= beta;
                    continue;
                }
                return Err(Error::Numerical(format!("objective diverged at iteration {iterations}")));
            }
            match config.step_rule {
                StepRule::Fixed(_) => {
                    accepted = true;
                    break;
                }
                StepRule::Backtracking { beta, c } => {
                    let d2 = dist2(&z, &a).powi(2);
                    let slack = 1e-13 * fa.abs().max(1.0);
                    if fz <= fa - c * d2 / gamma + slack {
                        accepted = true;
                        break;
                    }
                    gamma *= beta;
                }
            }
        }
        let moved = dist2(&z, &a);
        gap = moved / gamma;
        if !accepted {
            stop = StopReason::Stalled;
            break;
        }
        iterations += 1;
        std::mem::swap(&mut a, &mut z);
        std::mem::swap(&mut ga, &mut gz);
        fa = fz;
        trace.push(fa);
        if gap <= config.tol_stationarity {
            stop = StopReason::Converged;
            break;
        }
        if moved <= config.tol_step * norm2(&a).max(1.0) {
            stop = StopReason::Stalled;
            break;
        }
    }

    let (l1_excess, ball_excess) = prox.feasible_gap(&a);
    let l1_tol = 1e-9 * prox.r.max(1.0);
    let ball_tol = 1e-9 * prox.eta.max(1.0);
    if l1_excess > l1_tol || ball_excess > ball_tol {
        return Err(Error::Infeasible(format!(
            "returned point violates the constraints (L1 excess {l1_excess:e}, ball excess {ball_excess:e})"
        )));
    }
    let binding = Binding {
        l1_constraint: prox.r.is_finite() && l1_excess >= -1e-7 * prox.r,
        ball: prox.eta.is_finite() && ball_excess >= -1e-7 * prox.eta,
    };
    let g_hat = CoefVector::from_parts(a, m, g.d());
    let norm = g_hat.norm();
    let f_hat = if norm > 0.0 { g_hat.scaled(1.0 / norm) } else { CoefVector::zeros(m, g.d()) };
    Ok(SolveResult {
        mu_hat: norm * norm,
        g_hat,
        f_hat,
        objective_trace: trace,
        stationarity_gap: gap,
        iterations,
        binding,
        stop,
    })
}

/// `ĝ / ‖ĝ‖`.
pub fn extract_f(result: &SolveResult) -> Result<CoefVector> {
    let norm = result.g_hat.norm();
    if norm == 0.0 {
        return invalid("estimate is zero; no direction to extract");
    }
    Ok(result.g_hat.scaled(1.0 / norm))
}

/// `min(‖est − truth‖², ‖est + truth‖²)`.
pub fn aligned_error(est: &CoefVector, truth: &CoefVector) -> Result<f64> {
    if est.m() != truth.m() || est.d() != truth.d() {
        return Err(Error::Dimension("estimate and truth have different shapes".into()));
    }
    let (e, t) = (est.as_slice(), truth.as_slice());
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in e.iter().zip(t) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    Ok(minus.min(plus))
}
