//! Hard instances for the estimation problem: a two-point pair that is
//! statistically close at the `n^(-1)` scale, and a hypercube family whose
//! members are indistinguishable on the observation grid.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::seq::index;

use crate::error::{invalid, Error, Result};
use crate::quad;
use crate::simulate::stream_rng;

/// `exp(−1/(1−t²))` on `(−1, 1)`, zero elsewhere.
pub fn phi(t: f64) -> f64 {
    if t > -1.0 && t < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

/// Zero-mean bump pair on `(0, 1)`.
pub fn varphi_n(t: f64) -> f64 {
    if (0.5..1.0).contains(&t) {
        phi(4.0 * t - 3.0)
    } else if t > 0.0 && t < 0.5 {
        -phi(4.0 * t - 1.0)
    } else {
        0.0
    }
}

/// Zero-mean bump pair on `(−1/2, 1/2)`.
pub fn varphi_p(t: f64) -> f64 {
    if (0.0..0.5).contains(&t) {
        phi(4.0 * t - 1.0)
    } else if t > -0.5 && t < 0.0 {
        -phi(4.0 * t + 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bump {
    Phi,
    VarphiN,
    VarphiP,
}

pub fn eval_bumps(which: Bump, t: f64) -> f64 {
    match which {
        Bump::Phi => phi(t),
        Bump::VarphiN => varphi_n(t),
        Bump::VarphiP => varphi_p(t),
    }
}

/// Integral of a function supported in `[a, b]` that is flat at both ends.
fn flat_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    quad::adaptive_midpoint(&f, a, b, 64, 1e-15, 1 << 18).value
}

/// `‖varphi‖²` (both variants are translates of each other).
pub fn varphi_norm_sq() -> f64 {
    static V: OnceLock<f64> = OnceLock::new();
    *V.get_or_init(|| flat_integral(|t| phi(t).powi(2), -1.0, 1.0) / 2.0)
}

const HOLDER_LATTICE: usize = 4001;

/// `sup |varphi(t) − varphi(u)| / |t − u|^α` over a lattice on the support, cached per `α`.
pub fn holder_constant(alpha: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("cache").get(&alpha.to_bits()) {
        return *v;
    }
    let pts: Vec<f64> = (0..HOLDER_LATTICE).map(|k| -0.5 + k as f64 / (HOLDER_LATTICE - 1) as f64).collect();
    let vals: Vec<f64> = pts.iter().map(|&t| varphi_p(t)).collect();
    let mut best = 0.0_f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let q = (vals[j] - vals[i]).abs() / (pts[j] - pts[i]).powf(alpha);
            best = best.max(q);
        }
    }
    cache.lock().expect("cache").insert(alpha.to_bits(), best);
    best
}

/// Exact sum of floats (Shewchuk partials).
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut kept = 0;
        for i in 0..partials.len() {
            let y = partials[i];
            let (hi, lo) = if x.abs() < y.abs() { (y, x) } else { (x, y) };
            let sum = hi + lo;
            let err = lo - (sum - hi);
            if err != 0.0 {
                partials[kept] = err;
                kept += 1;
            }
            x = sum;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    partials.iter().sum()
}

/// Two hypotheses: a flat leading component and a bump-perturbed one.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisPair {
    pub support: Vec<usize>,
    pub s: usize,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    /// Normalization making the perturbed component a unit vector.
    pub c: f64,
    pub a: f64,
    pub x: f64,
    /// `(p − 1) / (2x)`.
    pub q: usize,
    pub mu_star: f64,
}

impl HypothesisPair {
    fn in_support(&self, comp: usize) -> bool {
        self.support.binary_search(&comp).is_ok()
    }

    /// Flat hypothesis.
    pub fn f10(&self, comp: usize, t: f64) -> f64 {
        if self.in_support(comp) && (0.0..=1.0).contains(&t) {
            1.0 / (self.s as f64).sqrt()
        } else {
            0.0
        }
    }

    /// Perturbed hypothesis.
    pub fn f11(&self, comp: usize, t: f64) -> f64 {
        if !self.in_support(comp) || !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        self.c * (1.0 / (self.s as f64).sqrt() + self.a * varphi_n(self.x * t) / (self.n as f64).sqrt())
    }

    /// `‖f₁₁‖_H` by quadrature.
    pub fn norm_f11(&self) -> f64 {
        let base = 1.0 / (self.s as f64).sqrt();
        let k = self.a / (self.n as f64).sqrt();
        let f = |t: f64| (self.c * (base + k * varphi_n(self.x * t))).powi(2);
        let end = 1.0 / self.x;
        let bumps = flat_integral(&f, 0.0, 0.5 * end) + flat_integral(&f, 0.5 * end, end);
        let flat = (self.c * base).powi(2) * (1.0 - end);
        (self.s as f64 * (bumps + flat)).sqrt()
    }

    /// `varphi_{a,x}(t_k)` for `k = 0..p`, using `x t_k = k / (2q)`.
    pub fn grid_bump(&self) -> Vec<f64> {
        let q = self.q;
        (0..self.p)
            .map(|k| {
                let v = if k == 0 || k >= 2 * q {
                    0.0
                } else if k >= q {
                    phi(2.0 * (k - q) as f64 / q as f64 - 1.0)
                } else {
                    -phi(2.0 * k as f64 / q as f64 - 1.0)
                };
                self.a * v
            })
            .collect()
    }

    /// `Σ` of the stacked discrete bump, summed exactly.
    pub fn discrete_mean(&self) -> f64 {
        let g = self.grid_bump();
        let stacked: Vec<f64> = self.support.iter().flat_map(|_| g.iter().copied()).collect();
        exact_sum(&stacked)
    }

    /// `‖stacked bump‖² / (s p)`.
    pub fn u_p(&self) -> f64 {
        let g = self.grid_bump();
        self.s as f64 * g.iter().map(|v| v * v).sum::<f64>() / (self.s * self.p) as f64
    }

    /// Hölder constant of the perturbed process, `L_α² a² μ* x^{2α} / n`.
    pub fn holder_l(&self, alpha: f64) -> f64 {
        holder_constant(alpha).powi(2) * self.a * self.a * self.mu_star * self.x.powf(2.0 * alpha) / self.n as f64
    }
}

/// Grid covariances of the two hypotheses, stacked component-major (`d·p + k`).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussPairCov {
    pub g0: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub sigma: f64,
}

pub fn build_pair(s: usize, n: usize, p: usize, d: usize, sigma: f64, seed: u64) -> Result<(HypothesisPair, GaussPairCov)> {
    if p < 3 {
        return invalid(format!("need p ≥ 3, got {p}"));
    }
    if s == 0 || s > n.min(d) {
        return invalid(format!("need 1 ≤ s ≤ min(n, D), got s={s}, n={n}, D={d}"));
    }
    if !(sigma >= 0.0) {
        return invalid("noise level must be nonnegative");
    }
    let mut rng = stream_rng(seed, 0xADD);
    let mut support = index::sample(&mut rng, d, s).into_vec();
    support.sort_unstable();
    let (x, q) = if (p - 1) % 2 == 0 { (1.0, (p - 1) / 2) } else { ((p - 1) as f64 / (p - 2) as f64, (p - 2) / 2) };
    let norm_sq = varphi_norm_sq();
    let a = x.sqrt() / norm_sq.sqrt();
    let c = 1.0 / (1.0 + a * a * s as f64 / (x * n as f64) * norm_sq).sqrt();
    let pair = HypothesisPair { support, s, n, p, d, c, a, x, q, mu_star: 1.0 / (s * p) as f64 };

    let dim = p * d;
    let mut ones = vec![0.0; dim];
    let mut bump = vec![0.0; dim];
    let g = pair.grid_bump();
    for &comp in &pair.support {
        ones[comp * p..(comp + 1) * p].iter_mut().for_each(|v| *v = 1.0);
        bump[comp * p..(comp + 1) * p].copy_from_slice(&g);
    }
    let (sf, nf) = (s as f64, n as f64);
    let mu = pair.mu_star;
    let c2 = c * c;
    let g0 = DMatrix::from_fn(dim, dim, |i, j| mu / sf * ones[i] * ones[j] + if i == j { sigma * sigma } else { 0.0 });
    let g1 = DMatrix::from_fn(dim, dim, |i, j| {
        mu * c2
            * (ones[i] * ones[j] / sf + (ones[i] * bump[j] + bump[i] * ones[j]) / (sf * nf).sqrt() + bump[i] * bump[j] / nf)
            + if i == j { sigma * sigma } else { 0.0 }
    });
    Ok((pair, GaussPairCov { g0, g1, sigma }))
}

fn log_det(m: &DMatrix<f64>) -> Result<Option<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(Some(ch.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum()));
    }
    let min = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min();
    let tol = 1e-12 * m.amax().max(1.0);
    if min < -tol {
        return Err(Error::NotPsd { min, tol });
    }
    Ok(None)
}

/// `det(G₀G₁)^{1/4} / det((G₀+G₁)/2)^{1/2}` via log-determinants.
pub fn hellinger_affinity(g0: &DMatrix<f64>, g1: &DMatrix<f64>) -> Result<f64> {
    if g0.shape() != g1.shape() || g0.nrows() != g0.ncols() {
        return Err(Error::Dimension("covariances must be square and of equal size".into()));
    }
    let mid = (g0 + g1) * 0.5;
    let ld0 = log_det(g0)?;
    let ld1 = log_det(g1)?;
    let ldm = log_det(&mid)?.ok_or_else(|| Error::Numerical("average covariance is singular".into()))?;
    match (ld0, ld1) {
        (Some(a), Some(b)) => Ok((0.25 * (a + b) - 0.5 * ldm).exp().min(1.0)),
        _ => Ok(0.0),
    }
}

/// `2 − 2 Aⁿ`.
pub fn hellinger_sq_product(affinity: f64, n: usize) -> f64 {
    2.0 - 2.0 * affinity.powf(n as f64)
}

/// One member of the hypercube family indexed by `ω ∈ {0,1}^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMember {
    pub p: usize,
    pub s: usize,
    pub d: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub omega: Vec<bool>,
    pub c_omega: f64,
    /// `L / (2 L_α² C_ω²)`.
    pub mu_star: f64,
}

pub fn build_omega_family(p: usize, s: usize, d: usize, gamma1: f64, omega: &[bool], alpha: f64, l: f64) -> Result<OmegaMember> {
    if s == 0 || s > d {
        return invalid(format!("need 1 ≤ s ≤ D, got s={s}, D={d}"));
    }
    if omega.len() != p || p < 2 {
        return invalid(format!("need a bitstring of length p={p} ≥ 2"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) || !(gamma1 > 0.0) || !(l > 0.0) {
        return invalid("need α ∈ (0, 1], γ₁ > 0 and L > 0");
    }
    if (p as f64) < (s as f64).powf(1.0 / (2.0 * alpha)) {
        return invalid(format!("need p ≥ s^(1/(2α)), got p={p}, s={s}"));
    }
    let gamma = gamma1 / (s as f64).sqrt();
    let ones = omega.iter().filter(|&&w| w).count() as f64;
    let sf = s as f64;
    let c_omega = 1.0 / (sf * gamma * gamma + sf * (p as f64).powf(-2.0 * alpha - 1.0) * varphi_norm_sq() * ones).sqrt();
    let la = holder_constant(alpha);
    Ok(OmegaMember {
        p,
        s,
        d,
        alpha,
        gamma,
        omega: omega.to_vec(),
        c_omega,
        mu_star: l / (2.0 * la * la * c_omega * c_omega),
    })
}

impl OmegaMember {
    fn grid_point(&self, k: usize) -> f64 {
        k as f64 / (self.p - 1) as f64
    }

    /// `γ + Σ_k ω_k p^{−α} varphi(p(t − t_k) − 1/2)`.
    pub fn profile(&self, t: f64) -> f64 {
        let pf = self.p as f64;
        let scale = pf.powf(-self.alpha);
        let mut v = self.gamma;
        for (k, &w) in self.omega.iter().enumerate() {
            if w {
                v += scale * varphi_p(pf * (t - self.grid_point(k)) - 0.5);
            }
        }
        v
    }

    /// The profile at grid point `j`, with `p(t_j − t_k)` formed as `p (j − k) / (p − 1)`.
    pub fn profile_on_grid(&self, j: usize) -> f64 {
        let pf = self.p as f64;
        let scale = pf.powf(-self.alpha);
        let mut v = self.gamma;
        for (k, &w) in self.omega.iter().enumerate() {
            if w {
                let arg = pf * (j as f64 - k as f64) / (self.p - 1) as f64 - 0.5;
                v += scale * varphi_p(arg);
            }
        }
        v
    }

    pub fn eval(&self, comp: usize, t: f64) -> f64 {
        if comp < self.s {
            self.c_omega * self.profile(t)
        } else {
            0.0
        }
    }

    pub fn grid_values(&self) -> Vec<f64> {
        (0..self.p).map(|j| self.c_omega * self.profile_on_grid(j)).collect()
    }

    /// `‖f_ω‖_H` by quadrature on the bump cells.
    pub fn norm(&self) -> f64 {
        let pf = self.p as f64;
        let width = 1.0 / pf;
        let mut total = 0.0;
        let mut covered = 0.0;
        for (k, &w) in self.omega.iter().enumerate() {
            if w {
                let a = self.grid_point(k);
                total += flat_integral(|t| (self.c_omega * self.profile(t)).powi(2), a, a + width);
                covered += width;
            }
        }
        total += (self.c_omega * self.gamma).powi(2) * (1.0 - covered);
        (self.s as f64 * total).sqrt()
    }
}
