//! Covariance operators on the basis span and discretization diagnostics.

use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::basis::{HistogramBasis, SmoothedSample};
use crate::error::{invalid, Error, Result};
use crate::fnspace::{axpy, dot};
use crate::quad;
use crate::simulate::ProcessModel;

/// Symmetric operator on the `M · D` coefficient space.
pub trait CovOperator: Sync {
    fn m(&self) -> usize;
    fn d(&self) -> usize;

    fn dim(&self) -> usize {
        self.m() * self.d()
    }

    /// `out = G a`.
    fn apply(&self, a: &[f64], out: &mut [f64]);

    /// `out = G a`, returning `aᵀ G a`.
    fn apply_with_quad(&self, a: &[f64], out: &mut [f64]) -> f64 {
        self.apply(a, out);
        dot(a, out)
    }

    fn quad_form(&self, a: &[f64]) -> f64 {
        let mut out = vec![0.0; self.dim()];
        self.apply_with_quad(a, &mut out)
    }

    /// `outs[k] = G xs[k]` for a block of vectors.
    fn apply_block(&self, xs: &[Vec<f64>], outs: &mut [Vec<f64>]) {
        for (x, o) in xs.iter().zip(outs.iter_mut()) {
            self.apply(x, o);
        }
    }

    /// `‖G‖_F²`.
    fn frobenius_sq(&self) -> f64;
}

/// Dense Gram matrix indexed by `(d, λ)` with `d` major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramOperator {
    g: DMatrix<f64>,
    m: usize,
    d: usize,
}

impl GramOperator {
    pub fn new(g: DMatrix<f64>, m: usize, d: usize) -> Result<Self> {
        let k = m * d;
        if g.nrows() != k || g.ncols() != k {
            return Err(Error::Dimension(format!("Gram is {}x{}, expected {k}x{k}", g.nrows(), g.ncols())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return invalid("Gram matrix has non-finite entries");
        }
        let scale = g.amax().max(1.0);
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-12 * scale {
            return invalid(format!("Gram matrix is not symmetric (max asymmetry {asym:e})"));
        }
        let mut g = g;
        symmetrize(&mut g);
        Ok(Self { g, m, d })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.g
    }

    pub fn entry(&self, d: usize, lambda: usize, d2: usize, lambda2: usize) -> f64 {
        self.g[(d * self.m + lambda, d2 * self.m + lambda2)]
    }

    /// Eigenvalues in decreasing order with matching eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        sorted_eigen(&self.g)
    }

    /// `‖G‖₂` from the dense spectrum.
    pub fn spectral_norm(&self) -> f64 {
        let (vals, _) = self.eigen();
        vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

impl CovOperator for GramOperator {
    fn m(&self) -> usize {
        self.m
    }
    fn d(&self) -> usize {
        self.d
    }

    fn apply(&self, a: &[f64], out: &mut [f64]) {
        // Column-major storage: G a = Σ_j a_j col_j, and G is symmetric so rows equal columns.
        let k = self.dim();
        let s = self.g.as_slice();
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&s[i * k..(i + 1) * k], a);
        }
    }

    fn frobenius_sq(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum()
    }
}

/// `G = (1/n) Ỹᵀ Ỹ` applied through the sample without forming the matrix.
#[derive(Debug)]
pub struct SampleGram<'a> {
    sample: &'a SmoothedSample,
    frob: OnceLock<f64>,
}

impl<'a> SampleGram<'a> {
    pub fn new(sample: &'a SmoothedSample) -> Result<Self> {
        if sample.n() == 0 {
            return invalid("empty sample");
        }
        Ok(Self { sample, frob: OnceLock::new() })
    }

    pub fn sample(&self) -> &SmoothedSample {
        self.sample
    }
}

impl CovOperator for SampleGram<'_> {
    fn m(&self) -> usize {
        self.sample.m()
    }
    fn d(&self) -> usize {
        self.sample.d()
    }

    fn apply(&self, a: &[f64], out: &mut [f64]) {
        self.apply_with_quad(a, out);
    }

    fn apply_with_quad(&self, a: &[f64], out: &mut [f64]) -> f64 {
        let n = self.sample.n();
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut q = 0.0;
        for i in 0..n {
            let row = self.sample.row(i);
            let u = dot(row, a);
            q += u * u;
            axpy(u / n as f64, row, out);
        }
        q / n as f64
    }

    fn apply_block(&self, xs: &[Vec<f64>], outs: &mut [Vec<f64>]) {
        let n = self.sample.n() as f64;
        outs.iter_mut().for_each(|o| o.iter_mut().for_each(|v| *v = 0.0));
        for i in 0..self.sample.n() {
            let row = self.sample.row(i);
            for (x, o) in xs.iter().zip(outs.iter_mut()) {
                axpy(dot(row, x) / n, row, o);
            }
        }
    }

    fn frobenius_sq(&self) -> f64 {
        *self.frob.get_or_init(|| {
            let s = self.sample;
            let n = s.n();
            if n <= s.dim() {
                let mut tot = 0.0;
                for i in 0..n {
                    let ri = s.row(i);
                    tot += dot(ri, ri).powi(2);
                    for j in 0..i {
                        tot += 2.0 * dot(ri, s.row(j)).powi(2);
                    }
                }
                tot / (n * n) as f64
            } else {
                empirical_gram(s).map(|g| g.frobenius_sq()).unwrap_or(f64::NAN)
            }
        })
    }
}

pub fn empirical_gram(sample: &SmoothedSample) -> Result<GramOperator> {
    let n = sample.n();
    if n == 0 {
        return invalid("empty sample");
    }
    let k = sample.dim();
    let y = DMatrix::from_row_slice(n, k, sample.data());
    let mut g = y.transpose() * &y;
    g /= n as f64;
    symmetrize(&mut g);
    Ok(GramOperator { g, m: sample.m(), d: sample.d() })
}

fn symmetrize(g: &mut DMatrix<f64>) {
    let k = g.nrows();
    for i in 0..k {
        for j in 0..i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}

pub(crate) fn sorted_eigen(g: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(g.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Clamp tiny negative eigenvalues (within `1e−10 ‖G‖₂`) to zero.
pub fn psd_repair(g: &GramOperator) -> Result<GramOperator> {
    let (vals, vecs) = g.eigen();
    let norm = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-10 * norm;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::NotPsd { min, tol });
    }
    if min >= 0.0 {
        return Ok(g.clone());
    }
    let clamped = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0))));
    let mut out = &vecs * clamped * vecs.transpose();
    symmetrize(&mut out);
    Ok(GramOperator { g: out, m: g.m, d: g.d })
}

// ---------------------------------------------------------------------------
// Kernels

#[derive(Debug, Clone)]
pub enum BaseKernel {
    Brownian,
    Fbm { hurst: f64 },
    Spectral(Arc<ProcessModel>),
}

/// Matrix covariance kernel `K_{d,d'}(s, t)`.
///
/// Brownian and fBm kernels are `C_{dd'} k(s, t)` with a PSD component
/// matrix `C` (identity by default, which makes components independent).
#[derive(Debug, Clone)]
pub struct KernelSpec {
    base: BaseKernel,
    mix: DMatrix<f64>,
    alpha: f64,
    l_holder: f64,
    kinf: f64,
}

impl KernelSpec {
    pub fn brownian(d: usize) -> Result<Self> {
        Self::with_mix(BaseKernel::Brownian, DMatrix::identity(d, d))
    }

    pub fn fbm(hurst: f64, d: usize) -> Result<Self> {
        Self::with_mix(BaseKernel::Fbm { hurst }, DMatrix::identity(d, d))
    }

    /// Independent components with variances `scales[d]`.
    pub fn scaled(base: BaseKernel, scales: &[f64]) -> Result<Self> {
        let d = scales.len();
        Self::with_mix(base, DMatrix::from_fn(d, d, |i, j| if i == j { scales[i] } else { 0.0 }))
    }

    /// Cross-covariance `C = A Aᵀ` from a loading matrix.
    pub fn with_loading(base: BaseKernel, loading: &DMatrix<f64>) -> Result<Self> {
        Self::with_mix(base, loading * loading.transpose())
    }

    pub fn with_mix(base: BaseKernel, mix: DMatrix<f64>) -> Result<Self> {
        let hurst = match &base {
            BaseKernel::Brownian => 0.5,
            BaseKernel::Fbm { hurst } => *hurst,
            BaseKernel::Spectral(model) => {
                let d = model.d();
                return Ok(Self {
                    alpha: model.alpha(),
                    l_holder: model.holder_l(),
                    kinf: model.kinf(),
                    base,
                    mix: DMatrix::identity(d, d),
                });
            }
        };
        if !(hurst > 0.0 && hurst < 1.0) {
            return invalid(format!("Hurst index must lie in (0,1), got {hurst}"));
        }
        if !mix.is_square() || mix.nrows() == 0 {
            return invalid("component matrix must be square and nonempty");
        }
        if (&mix - mix.transpose()).amax() > 1e-12 * mix.amax().max(1.0) {
            return invalid("component matrix must be symmetric");
        }
        let (vals, _) = sorted_eigen(&mix);
        if vals.last().copied().unwrap_or(0.0) < -1e-12 * vals[0].abs().max(1.0) {
            return invalid("component matrix must be positive semidefinite");
        }
        let cmax = (0..mix.nrows()).map(|i| mix[(i, i)]).fold(0.0_f64, f64::max);
        Ok(Self { base, alpha: hurst, l_holder: cmax, kinf: cmax, mix })
    }

    pub fn spectral(model: Arc<ProcessModel>) -> Self {
        Self::with_mix(BaseKernel::Spectral(model), DMatrix::zeros(0, 0)).expect("spectral kernel")
    }

    pub fn d(&self) -> usize {
        match &self.base {
            BaseKernel::Spectral(m) => m.d(),
            _ => self.mix.nrows(),
        }
    }

    pub fn base(&self) -> &BaseKernel {
        &self.base
    }

    pub fn mix(&self) -> &DMatrix<f64> {
        &self.mix
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn holder_l(&self) -> f64 {
        self.l_holder
    }

    /// `sup_{d,t} K_{d,d}(t, t)`.
    pub fn kinf(&self) -> f64 {
        self.kinf
    }

    fn base_eval(&self, s: f64, t: f64) -> f64 {
        match &self.base {
            BaseKernel::Brownian => s.min(t),
            BaseKernel::Fbm { hurst } => {
                let q = 2.0 * hurst;
                0.5 * (s.powf(q) + t.powf(q) - (s - t).abs().powf(q))
            }
            BaseKernel::Spectral(_) => unreachable!(),
        }
    }

    pub fn eval(&self, d: usize, d2: usize, s: f64, t: f64) -> f64 {
        match &self.base {
            BaseKernel::Spectral(model) => model.kernel(d, d2, s, t),
            _ => self.mix[(d, d2)] * self.base_eval(s, t),
        }
    }

    /// `∫_{s0}^{s1} ∫_{t0}^{t1} K_{d,d'}(s, t) dt ds`.
    pub fn rect_integral(&self, d: usize, d2: usize, (s0, s1): (f64, f64), (t0, t1): (f64, f64)) -> f64 {
        match &self.base {
            BaseKernel::Spectral(model) => {
                let mut tot = 0.0;
                for (l, &mu) in model.eigenvalues().iter().enumerate() {
                    let a = quad::integrate(&|x: f64| model.eval(l, d, x), s0, s1).value;
                    if a == 0.0 {
                        continue;
                    }
                    let b = quad::integrate(&|x: f64| model.eval(l, d2, x), t0, t1).value;
                    tot += mu * a * b;
                }
                tot
            }
            BaseKernel::Brownian => self.mix[(d, d2)] * fbm_rect(1.0, (s0, s1), (t0, t1)),
            BaseKernel::Fbm { hurst } => self.mix[(d, d2)] * fbm_rect(2.0 * hurst, (s0, s1), (t0, t1)),
        }
    }
}

/// Closed-form rectangle integral of `½(s^q + t^q − |s − t|^q)`.
fn fbm_rect(q: f64, (a, b): (f64, f64), (c, d): (f64, f64)) -> f64 {
    let p1 = |x: f64| x.powf(q + 1.0) / (q + 1.0);
    let f = |u: f64| u.abs().powf(q + 2.0) / ((q + 1.0) * (q + 2.0));
    let w = f(b - c) - f(a - c) - f(b - d) + f(a - d);
    0.5 * ((d - c) * (p1(b) - p1(a)) + (b - a) * (p1(d) - p1(c)) - w)
}

pub fn kernel_eval(spec: &KernelSpec, d: usize, d2: usize, s: f64, t: f64) -> Result<f64> {
    let dd = spec.d();
    if d >= dd || d2 >= dd {
        return invalid(format!("component index out of range for D={dd}"));
    }
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return invalid("kernel arguments must lie in [0,1]");
    }
    Ok(spec.eval(d, d2, s, t))
}

/// Riemann part `(M/p²) Σ_{h∈J_λ} Σ_{h'∈J_λ'} K_{d,d'}(t_h, t_h')` for every entry.
fn riemann_blocks(spec: &KernelSpec, basis: &HistogramBasis) -> DMatrix<f64> {
    let m = basis.m();
    let dd = spec.d();
    let p = basis.p();
    let pts = basis.grid().points();
    let scale = (m as f64) / (p as f64 * p as f64);
    let mut g = DMatrix::zeros(m * dd, m * dd);
    match spec.base() {
        BaseKernel::Spectral(model) => {
            let r = model.rank();
            let amp_p = basis.amplitude() / p as f64;
            let mut b = DMatrix::zeros(m * dd, r);
            for l in 0..r {
                for comp in 0..dd {
                    for lambda in 0..m {
                        let s: f64 = basis.cell_indices(lambda).map(|h| model.eval(l, comp, pts[h])).sum();
                        b[(comp * m + lambda, l)] = s * amp_p;
                    }
                }
            }
            let mu = nalgebra::DVector::from_column_slice(model.eigenvalues());
            let bm = &b * DMatrix::from_diagonal(&mu);
            g = bm * b.transpose();
        }
        _ => {
            let mut cells = DMatrix::zeros(m, m);
            for l1 in 0..m {
                for l2 in 0..=l1 {
                    let mut s = 0.0;
                    for h in basis.cell_indices(l1) {
                        for h2 in basis.cell_indices(l2) {
                            s += spec.base_eval(pts[h], pts[h2]);
                        }
                    }
                    cells[(l1, l2)] = s * scale;
                    cells[(l2, l1)] = s * scale;
                }
            }
            for d1 in 0..dd {
                for d2 in 0..dd {
                    let c = spec.mix[(d1, d2)];
                    if c == 0.0 {
                        continue;
                    }
                    for l1 in 0..m {
                        for l2 in 0..m {
                            g[(d1 * m + l1, d2 * m + l2)] = c * cells[(l1, l2)];
                        }
                    }
                }
            }
        }
    }
    symmetrize(&mut g);
    g
}

/// Expected Gram of the smoothed coefficients under kernel `spec` and noise variance `sigma2`.
pub fn exact_gamma_phi(spec: &KernelSpec, basis: &HistogramBasis, sigma2: f64) -> Result<GramOperator> {
    if !(sigma2 >= 0.0) {
        return invalid("noise variance must be nonnegative");
    }
    let mut g = riemann_blocks(spec, basis);
    let noise = sigma2 / basis.p() as f64;
    for i in 0..g.nrows() {
        g[(i, i)] += noise;
    }
    Ok(GramOperator { g, m: basis.m(), d: spec.d() })
}

/// Largest discretization remainders against their bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderReport {
    pub max_rk: f64,
    pub max_rn: f64,
    pub bound_rk: f64,
}

impl RemainderReport {
    pub fn rn_vanishes(&self) -> bool {
        self.max_rn <= 1e-12
    }

    pub fn rk_within_bound(&self) -> bool {
        self.max_rk <= self.bound_rk
    }

    pub fn check(&self) -> Result<()> {
        if !self.rn_vanishes() {
            return Err(Error::Numerical(format!("noise remainder {:e} is not zero", self.max_rn)));
        }
        if !self.rk_within_bound() {
            return Err(Error::Numerical(format!(
                "kernel remainder {:e} exceeds bound {:e}",
                self.max_rk, self.bound_rk
            )));
        }
        Ok(())
    }
}

/// Cell-pair integrals `∫_{I_λ}∫_{I_λ'} K_{d,d'}` for every entry.
fn cell_integrals(spec: &KernelSpec, basis: &HistogramBasis) -> DMatrix<f64> {
    let m = basis.m();
    let dd = spec.d();
    let mut out = DMatrix::zeros(m * dd, m * dd);
    match spec.base() {
        BaseKernel::Spectral(model) => {
            let r = model.rank();
            let mut c = DMatrix::zeros(m * dd, r);
            for l in 0..r {
                for comp in 0..dd {
                    for lambda in 0..m {
                        let (a, b) = basis.cell_bounds(lambda);
                        c[(comp * m + lambda, l)] = quad::integrate(&|x: f64| model.eval(l, comp, x), a, b).value;
                    }
                }
            }
            let mu = nalgebra::DVector::from_column_slice(model.eigenvalues());
            out = &c * DMatrix::from_diagonal(&mu) * c.transpose();
        }
        _ => {
            let mut cells = DMatrix::zeros(m, m);
            for l1 in 0..m {
                for l2 in 0..=l1 {
                    let v = base_rect(spec, basis, l1, l2);
                    cells[(l1, l2)] = v;
                    cells[(l2, l1)] = v;
                }
            }
            for d1 in 0..dd {
                for d2 in 0..dd {
                    let c = spec.mix[(d1, d2)];
                    for l1 in 0..m {
                        for l2 in 0..m {
                            out[(d1 * m + l1, d2 * m + l2)] = c * cells[(l1, l2)];
                        }
                    }
                }
            }
        }
    }
    out
}

fn base_rect(spec: &KernelSpec, basis: &HistogramBasis, l1: usize, l2: usize) -> f64 {
    let q = match spec.base() {
        BaseKernel::Brownian => 1.0,
        BaseKernel::Fbm { hurst } => 2.0 * hurst,
        BaseKernel::Spectral(_) => unreachable!(),
    };
    fbm_rect(q, basis.cell_bounds(l1), basis.cell_bounds(l2))
}

pub fn remainder_report(spec: &KernelSpec, basis: &HistogramBasis, sigma2: f64) -> Result<RemainderReport> {
    if !(sigma2 >= 0.0) {
        return invalid("noise variance must be nonnegative");
    }
    let m = basis.m();
    let mf = m as f64;
    let riemann = riemann_blocks(spec, basis);
    let integrals = cell_integrals(spec, basis);
    let mut max_rk = 0.0_f64;
    for (r, i) in riemann.iter().zip(integrals.iter()) {
        max_rk = max_rk.max((r - mf * i).abs());
    }
    let p = basis.p() as f64;
    let pts = basis.grid().points();
    let mut max_rn = 0.0_f64;
    for l1 in 0..m {
        for l2 in 0..m {
            let mut s = 0.0;
            for &t in pts {
                s += basis.eval(l1, t)? * basis.eval(l2, t)?;
            }
            let delta = if l1 == l2 { 1.0 } else { 0.0 };
            max_rn = max_rn.max((sigma2 / p * (s / p - delta)).abs());
        }
    }
    let bound_rk = 4.0 * (spec.kinf() * spec.holder_l()).sqrt() / (spec.alpha() + 1.0) / mf / p.powf(spec.alpha());
    Ok(RemainderReport { max_rk, max_rn, bound_rk })
}

/// Sup of `|Π K − K|` over a test lattice, with its bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionBiasReport {
    pub max_bias: f64,
    pub bound: f64,
}

impl ProjectionBiasReport {
    pub fn within_bound(&self) -> bool {
        self.max_bias <= self.bound
    }
}

/// Lattice: 8 equispaced offsets per cell, points just below each right edge, and t = 1.
fn bias_lattice(m: usize) -> Vec<f64> {
    let mf = m as f64;
    let mut pts = Vec::with_capacity(9 * m + 1);
    for c in 0..m {
        for k in 0..8 {
            pts.push((c as f64 + k as f64 / 8.0) / mf);
        }
        pts.push((c as f64 + 1.0 - 1e-9) / mf);
    }
    pts.push(1.0);
    pts
}

pub fn projection_bias_report(spec: &KernelSpec, basis: &HistogramBasis) -> Result<ProjectionBiasReport> {
    let m = basis.m();
    let mf = m as f64;
    let dd = spec.d();
    let integrals = cell_integrals(spec, basis);
    let lattice = bias_lattice(m);
    let cells: Vec<usize> = lattice.iter().map(|&t| basis.cell_of(t)).collect();
    let mut worst = 0.0_f64;
    for d1 in 0..dd {
        for d2 in 0..dd {
            for (i, &s) in lattice.iter().enumerate() {
                for (j, &t) in lattice.iter().enumerate() {
                    let proj = mf * mf * integrals[(d1 * m + cells[i], d2 * m + cells[j])];
                    worst = worst.max((proj - spec.eval(d1, d2, s, t)).abs());
                }
            }
        }
    }
    let bound = 4.0 * (spec.holder_l() * spec.kinf()).sqrt() / (spec.alpha() + 1.0) * mf.powf(-spec.alpha());
    Ok(ProjectionBiasReport { max_bias: worst, bound })
}

// ---------------------------------------------------------------------------
// CSV

/// Header line `M=..,D=..,p=..,sigma=..` followed by one row per matrix row.
pub fn write_gram_csv<W: Write>(g: &GramOperator, p: usize, sigma: f64, mut w: W) -> Result<()> {
    writeln!(w, "M={},D={},p={},sigma={:.16e}", g.m, g.d, p, sigma)?;
    let k = g.dim();
    for i in 0..k {
        let row: Vec<String> = (0..k).map(|j| format!("{:.16e}", g.g[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Inverse of [`write_gram_csv`]; returns `(G, p, σ)`.
pub fn read_gram_csv<R: BufRead>(r: R) -> Result<(GramOperator, usize, f64)> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty Gram file".into()))??;
    let mut m = None;
    let mut d = None;
    let mut p = None;
    let mut sigma = None;
    for part in header.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field `{part}`")))?;
        let bad = |_| Error::Parse(format!("bad header value `{part}`"));
        match k.trim() {
            "M" => m = Some(v.trim().parse::<usize>().map_err(bad)?),
            "D" => d = Some(v.trim().parse::<usize>().map_err(bad)?),
            "p" => p = Some(v.trim().parse::<usize>().map_err(bad)?),
            "sigma" => sigma = Some(v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad sigma `{v}`")))?),
            other => return Err(Error::Parse(format!("unknown header key `{other}`"))),
        }
    }
    let (m, d, p, sigma) = match (m, d, p, sigma) {
        (Some(m), Some(d), Some(p), Some(s)) => (m, d, p, s),
        _ => return Err(Error::Parse("header must define M, D, p and sigma".into())),
    };
    let k = m * d;
    let mut vals = Vec::with_capacity(k * k);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for f in line.split(',') {
            vals.push(f.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad value `{f}`")))?);
        }
    }
    if vals.len() != k * k {
        return Err(Error::Parse(format!("expected {} values, found {}", k * k, vals.len())));
    }
    Ok((GramOperator::new(DMatrix::from_row_slice(k, k, &vals), m, d)?, p, sigma))
}
