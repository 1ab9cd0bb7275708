//! Generative models with a sparse leading eigenfunction, and noisy grid sampling.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adversarial::phi;
use crate::basis::{make_grid, CurveArray, Grid, HistogramBasis, SmoothedSample};
use crate::covariance::{BaseKernel, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::quad;

/// Seeded generator on an explicit stream, so replicate `k` always draws the same numbers.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    /// `exp(−1/(1−u²))` bumps.
    Bump,
    /// Triangular hats `max(0, 1 − |u|)`.
    PiecewiseLinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Bump { center: f64, half_width: f64, amp: f64 },
    Hat { center: f64, half_width: f64, amp: f64 },
    Const { amp: f64 },
}

impl Shape {
    fn eval(&self, t: f64) -> f64 {
        match *self {
            Shape::Bump { center, half_width, amp } => amp * phi((t - center) / half_width),
            Shape::Hat { center, half_width, amp } => amp * (1.0 - ((t - center) / half_width).abs()).max(0.0),
            Shape::Const { amp } => amp,
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Shape::Bump { center, half_width, .. } | Shape::Hat { center, half_width, .. } => {
                ((center - half_width).max(0.0), (center + half_width).min(1.0))
            }
            Shape::Const { .. } => (0.0, 1.0),
        }
    }
}

/// One raw (not yet orthonormalized) H-valued function: a list of shapes per component.
#[derive(Debug, Clone, PartialEq)]
struct RawFunction {
    parts: Vec<Vec<Shape>>,
}

impl RawFunction {
    fn eval(&self, comp: usize, t: f64) -> f64 {
        self.parts[comp].iter().map(|s| s.eval(t)).sum()
    }
}

/// `∫₀¹ f` for an integrand built from `shapes`: bumps are smooth and flat at their ends, so one
/// midpoint sweep over the joint support converges fast; hats and constants are piecewise
/// polynomial of degree ≤ 2 between knots, where Simpson is exact.
fn shape_integral<F: Fn(f64) -> f64>(shapes: &[&Shape], f: F) -> f64 {
    if shapes.is_empty() {
        return 0.0;
    }
    if shapes.iter().any(|s| matches!(s, Shape::Bump { .. })) {
        let lo = shapes.iter().map(|s| s.support().0).fold(1.0_f64, f64::min);
        let hi = shapes.iter().map(|s| s.support().1).fold(0.0_f64, f64::max);
        return quad::adaptive_midpoint(&f, lo, hi, 64, 1e-15, 1 << 16).value;
    }
    let mut knots = vec![0.0, 1.0];
    for s in shapes {
        if let Shape::Hat { center, half_width, .. } = **s {
            knots.extend([center - half_width, center, center + half_width].iter().map(|k| k.clamp(0.0, 1.0)));
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
        .windows(2)
        .map(|w| (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1])))
        .sum()
}

fn component_inner(u: &[Shape], v: &[Shape]) -> f64 {
    if u.is_empty() || v.is_empty() {
        return 0.0;
    }
    let shapes: Vec<&Shape> = u.iter().chain(v).collect();
    shape_integral(&shapes, |t| u.iter().map(|s| s.eval(t)).sum::<f64>() * v.iter().map(|s| s.eval(t)).sum::<f64>())
}

/// `Z(t) = Σ_ℓ √μ_ℓ ξ_ℓ f_ℓ(t)` with orthonormal `f_ℓ` and a sparse `f_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    d: usize,
    eigenvalues: Vec<f64>,
    raw: Vec<RawFunction>,
    /// Lower-triangular combination: `f_ℓ = Σ_k coef[ℓ][k] raw_k`.
    coef: Vec<Vec<f64>>,
    support: Vec<usize>,
    alpha: f64,
    l_holder: f64,
    kinf: f64,
    sigma: f64,
}

/// Parameters of [`build_sparse_model_with`] beyond the required ones.
#[derive(Debug, Clone, Copy)]
pub struct ModelOptions {
    pub family: ShapeFamily,
    pub alpha: f64,
    pub sigma: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { family: ShapeFamily::Bump, alpha: 0.5, sigma: 0.0 }
    }
}

pub fn build_sparse_model(d: usize, s: usize, r: usize, eigenvalues: &[f64], seed: u64) -> Result<ProcessModel> {
    build_sparse_model_with(d, s, r, eigenvalues, seed, ModelOptions::default())
}

pub fn build_sparse_model_with(
    d: usize,
    s: usize,
    r: usize,
    eigenvalues: &[f64],
    seed: u64,
    opts: ModelOptions,
) -> Result<ProcessModel> {
    if d == 0 || s == 0 || s > d {
        return invalid(format!("need 1 ≤ s ≤ D, got s={s}, D={d}"));
    }
    if r == 0 || eigenvalues.len() != r {
        return invalid(format!("need r ≥ 1 eigenvalues, got r={r} and {} values", eigenvalues.len()));
    }
    check_eigenvalues(eigenvalues)?;
    let mut rng = stream_rng(seed, 0x5EED);
    let mut support: Vec<usize> = index::sample(&mut rng, d, s).into_vec();
    support.sort_unstable();

    let shape = |rng: &mut ChaCha8Rng| {
        let half_width = rng.random_range(0.15..0.35);
        let center = rng.random_range(half_width..1.0 - half_width);
        let mag = rng.random_range(0.5..1.5);
        let amp = if rng.random::<bool>() { mag } else { -mag };
        match opts.family {
            ShapeFamily::Bump => Shape::Bump { center, half_width, amp },
            ShapeFamily::PiecewiseLinear => Shape::Hat { center, half_width, amp },
        }
    };

    let mut raw = Vec::with_capacity(r);
    let mut lead = vec![Vec::new(); d];
    for &k in &support {
        lead[k] = vec![shape(&mut rng), shape(&mut rng)];
    }
    raw.push(RawFunction { parts: lead });
    for _ in 1..r {
        raw.push(RawFunction { parts: (0..d).map(|_| vec![shape(&mut rng)]).collect() });
    }
    ProcessModel::from_raw(d, eigenvalues.to_vec(), raw, support, opts.alpha, opts.sigma)
}

fn check_eigenvalues(mu: &[f64]) -> Result<()> {
    if mu.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return invalid("eigenvalues must be positive and finite");
    }
    if mu.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("eigenvalues must be strictly decreasing");
    }
    Ok(())
}

impl ProcessModel {
    fn from_raw(
        d: usize,
        eigenvalues: Vec<f64>,
        raw: Vec<RawFunction>,
        support: Vec<usize>,
        alpha: f64,
        sigma: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid(format!("regularity index must lie in (0,1), got {alpha}"));
        }
        if !(sigma >= 0.0) {
            return invalid("noise level must be nonnegative");
        }
        let r = raw.len();
        let mut q = DMatrix::zeros(r, r);
        for a in 0..r {
            for b in 0..=a {
                let v: f64 = (0..d).map(|k| component_inner(&raw[a].parts[k], &raw[b].parts[k])).sum();
                q[(a, b)] = v;
                q[(b, a)] = v;
            }
        }
        let chol = q
            .cholesky()
            .ok_or_else(|| Error::Numerical("raw eigenfunctions are linearly dependent".into()))?;
        let linv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(r, r))
            .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
        let coef = (0..r).map(|l| (0..r).map(|k| if k <= l { linv[(l, k)] } else { 0.0 }).collect()).collect();
        let mut model = Self { d, eigenvalues, raw, coef, support, alpha, l_holder: 0.0, kinf: 0.0, sigma };
        model.kinf = model.sup_variance(2049);
        model.l_holder = model.holder_constant(alpha, 513);
        Ok(model)
    }

    /// Rank-one model `f_1 ≡ 1` on component 0 (constant kernel `μ`).
    pub fn constant(mu: f64, d: usize) -> Self {
        let mut parts = vec![Vec::new(); d];
        parts[0] = vec![Shape::Const { amp: 1.0 }];
        Self::from_raw(d, vec![mu], vec![RawFunction { parts }], vec![0], 0.5, 0.0).expect("constant model")
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Components where `f_1` is nonzero.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Hölder constant `L` for the model's `α`, estimated on a lattice.
    pub fn holder_l(&self) -> f64 {
        self.l_holder
    }

    /// `sup_{d,t} K_{d,d}(t, t)`, estimated on a lattice.
    pub fn kinf(&self) -> f64 {
        self.kinf
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `f_ℓ` at `(comp, t)`.
    pub fn eval(&self, l: usize, comp: usize, t: f64) -> f64 {
        let mut v = 0.0;
        for (k, c) in self.coef[l].iter().enumerate().take(l + 1) {
            if *c != 0.0 {
                v += c * self.raw[k].eval(comp, t);
            }
        }
        v
    }

    pub fn kernel(&self, d: usize, d2: usize, s: f64, t: f64) -> f64 {
        self.eigenvalues.iter().enumerate().map(|(l, mu)| mu * self.eval(l, d, s) * self.eval(l, d2, t)).sum()
    }

    /// `⟨f_a, f_b⟩_H` by quadrature of the evaluated functions.
    pub fn inner(&self, a: usize, b: usize) -> f64 {
        (0..self.d)
            .map(|k| {
                let shapes: Vec<&Shape> = self.raw.iter().flat_map(|r| r.parts[k].iter()).collect();
                shape_integral(&shapes, |t| self.eval(a, k, t) * self.eval(b, k, t))
            })
            .sum()
    }

    /// Values of every `f_ℓ` on a grid, as `table[ℓ][d·p + h]`.
    pub fn grid_table(&self, grid: &Grid) -> Vec<Vec<f64>> {
        let p = grid.p();
        (0..self.rank())
            .map(|l| {
                let mut row = vec![0.0; self.d * p];
                for k in 0..self.d {
                    for (h, &t) in grid.points().iter().enumerate() {
                        row[k * p + h] = self.eval(l, k, t);
                    }
                }
                row
            })
            .collect()
    }

    fn lattice_table(&self, points: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let grid = make_grid(points).expect("lattice");
        (grid.points().to_vec(), self.grid_table(&grid))
    }

    fn sup_variance(&self, points: usize) -> f64 {
        let (pts, table) = self.lattice_table(points);
        let p = pts.len();
        let mut worst = 0.0_f64;
        for k in 0..self.d {
            for h in 0..p {
                let v: f64 = self.eigenvalues.iter().zip(&table).map(|(mu, row)| mu * row[k * p + h].powi(2)).sum();
                worst = worst.max(v);
            }
        }
        worst
    }

    /// `max_d sup_{t≠u} E(Z_d(t) − Z_d(u))² / |t − u|^{2α}` over a lattice.
    pub fn holder_constant(&self, alpha: f64, points: usize) -> f64 {
        let (pts, table) = self.lattice_table(points);
        let p = pts.len();
        let mut worst = 0.0_f64;
        for k in 0..self.d {
            let curves: Vec<&[f64]> = table.iter().map(|row| &row[k * p..(k + 1) * p]).collect();
            if curves.iter().all(|c| c.iter().all(|&v| v == 0.0)) {
                continue;
            }
            for h in 0..p {
                for h2 in h + 1..p {
                    let inc: f64 =
                        self.eigenvalues.iter().zip(&curves).map(|(mu, c)| mu * (c[h2] - c[h]).powi(2)).sum();
                    worst = worst.max(inc / (pts[h2] - pts[h]).powf(2.0 * alpha));
                }
            }
        }
        worst
    }
}

/// Noisy grid observations with optional retained truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub y: CurveArray,
    pub z: Option<CurveArray>,
    pub seed: u64,
    pub sigma: f64,
}

impl ObservationSet {
    pub fn n(&self) -> usize {
        self.y.n()
    }
    pub fn d(&self) -> usize {
        self.y.d()
    }
    pub fn p(&self) -> usize {
        self.y.p()
    }
}

fn draw_row<R: Rng>(model: &ProcessModel, table: &[Vec<f64>], rng: &mut R, z: &mut [f64], y: &mut [f64]) {
    z.iter_mut().for_each(|v| *v = 0.0);
    for (mu, row) in model.eigenvalues.iter().zip(table) {
        let xi: f64 = StandardNormal.sample(rng);
        crate::fnspace::axpy(mu.sqrt() * xi, row, z);
    }
    if model.sigma > 0.0 {
        for (yv, zv) in y.iter_mut().zip(z.iter()) {
            let e: f64 = StandardNormal.sample(rng);
            *yv = zv + model.sigma * e;
        }
    } else {
        y.copy_from_slice(z);
    }
}

pub fn sample_observations(model: &ProcessModel, n: usize, p: usize, seed: u64) -> Result<ObservationSet> {
    let mut rng = stream_rng(seed, 0);
    let mut obs = sample_observations_with(model, n, p, &mut rng, true)?;
    obs.seed = seed;
    Ok(obs)
}

pub fn sample_observations_with<R: Rng>(
    model: &ProcessModel,
    n: usize,
    p: usize,
    rng: &mut R,
    keep_truth: bool,
) -> Result<ObservationSet> {
    if n == 0 {
        return invalid("need at least one sample");
    }
    let grid = make_grid(p)?;
    let table = model.grid_table(&grid);
    let w = model.d * p;
    let mut y = CurveArray::zeros(n, model.d, p);
    let mut z = if keep_truth { Some(CurveArray::zeros(n, model.d, p)) } else { None };
    let mut zrow = vec![0.0; w];
    for i in 0..n {
        draw_row(model, &table, rng, &mut zrow, y.sample_mut(i));
        if let Some(zz) = z.as_mut() {
            zz.sample_mut(i).copy_from_slice(&zrow);
        }
    }
    Ok(ObservationSet { y, z, seed: 0, sigma: model.sigma })
}

/// Sample and smooth row by row; identical to smoothing the output of
/// [`sample_observations_with`] driven by the same generator, without storing the curves.
pub fn sample_smoothed<R: Rng>(model: &ProcessModel, n: usize, basis: &HistogramBasis, rng: &mut R) -> Result<SmoothedSample> {
    if n == 0 {
        return invalid("need at least one sample");
    }
    let p = basis.p();
    let table = model.grid_table(basis.grid());
    let w = model.d * p;
    let k = model.d * basis.m();
    let (mut zrow, mut yrow) = (vec![0.0; w], vec![0.0; w]);
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        draw_row(model, &table, rng, &mut zrow, &mut yrow);
        basis.smooth_into(&yrow, model.d, &mut out[i * k..(i + 1) * k]);
    }
    SmoothedSample::new(out, n, model.d, basis.m(), p)
}

/// Lower-triangular `L` with `L Lᵀ = A` for PSD `A`; pivots below `1e−10 · max diag` are zeroed.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if s <= tol {
            if s < -1e-8 * scale {
                return Err(Error::Numerical(format!("factorization failed at pivot {j} (value {s:e})")));
            }
            continue;
        }
        let piv = s.sqrt();
        l[(j, j)] = piv;
        for i in j + 1..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / piv;
        }
    }
    Ok(l)
}

pub fn sample_gaussian_kernel(spec: &KernelSpec, n: usize, p: usize, d: usize, sigma: f64, seed: u64) -> Result<ObservationSet> {
    let mut rng = stream_rng(seed, 0);
    let mut obs = sample_gaussian_kernel_with(spec, n, p, d, sigma, &mut rng)?;
    obs.seed = seed;
    Ok(obs)
}

pub fn sample_gaussian_kernel_with<R: Rng>(
    spec: &KernelSpec,
    n: usize,
    p: usize,
    d: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    if d != spec.d() {
        return Err(Error::Dimension(format!("kernel has D={}, requested D={d}", spec.d())));
    }
    if !(sigma >= 0.0) {
        return invalid("noise level must be nonnegative");
    }
    if let BaseKernel::Spectral(model) = spec.base() {
        let m = (**model).clone().with_sigma(sigma);
        return sample_observations_with(&m, n, p, rng, true);
    }
    if n == 0 {
        return invalid("need at least one sample");
    }
    let grid = make_grid(p)?;
    let pts = grid.points();
    let unit = KernelSpec::with_mix(spec.base().clone(), DMatrix::identity(1, 1))?;
    let kgrid = DMatrix::from_fn(p, p, |i, j| unit.eval(0, 0, pts[i], pts[j]));
    let lk = psd_cholesky(&kgrid)?;
    let lc = psd_cholesky(spec.mix())?;
    let mut y = CurveArray::zeros(n, d, p);
    let mut z = CurveArray::zeros(n, d, p);
    let mut w = vec![0.0; p];
    let mut v = vec![0.0; d * p];
    for i in 0..n {
        for k in 0..d {
            for wv in w.iter_mut() {
                *wv = StandardNormal.sample(rng);
            }
            let vk = &mut v[k * p..(k + 1) * p];
            for h in 0..p {
                let mut s = 0.0;
                for j in 0..=h {
                    s += lk[(h, j)] * w[j];
                }
                vk[h] = s;
            }
        }
        let zi = z.sample_mut(i);
        for comp in 0..d {
            for k in 0..=comp {
                let c = lc[(comp, k)];
                if c != 0.0 {
                    crate::fnspace::axpy(c, &v[k * p..(k + 1) * p], &mut zi[comp * p..(comp + 1) * p]);
                }
            }
        }
        let yi = y.sample_mut(i);
        yi.copy_from_slice(z.sample(i));
        if sigma > 0.0 {
            for yv in yi.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *yv += sigma * e;
            }
        }
    }
    Ok(ObservationSet { y, z: Some(z), seed: 0, sigma })
}

/// Leading eigenpair of a Brownian kernel with independent scaled components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianLead {
    pub component: usize,
    pub mu1: f64,
    pub mu2: f64,
}

impl BrownianLead {
    /// `f_1(d, t) = √2 sin(π t / 2)` on the leading component.
    pub fn eval(&self, comp: usize, t: f64) -> f64 {
        if comp == self.component {
            std::f64::consts::SQRT_2 * (std::f64::consts::FRAC_PI_2 * t).sin()
        } else {
            0.0
        }
    }
}

pub fn brownian_lead(spec: &KernelSpec) -> Result<BrownianLead> {
    if !matches!(spec.base(), BaseKernel::Brownian) {
        return invalid("closed-form eigenpair needs a Brownian kernel");
    }
    let c = spec.mix();
    let d = c.nrows();
    if (0..d).any(|i| (0..d).any(|j| i != j && c[(i, j)] != 0.0)) {
        return invalid("closed-form eigenpair needs independent components");
    }
    let mut scales: Vec<(f64, usize)> = (0..d).map(|i| (c[(i, i)], i)).collect();
    scales.sort_by(|a, b| b.0.total_cmp(&a.0));
    let base = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let mu1 = scales[0].0 * base;
    let second_same = mu1 / 9.0;
    let second_other = scales.get(1).map_or(0.0, |s| s.0 * base);
    let mu2 = second_same.max(second_other);
    if !(mu1 > mu2) {
        return invalid("leading eigenvalue is not simple");
    }
    Ok(BrownianLead { component: scales[0].1, mu1, mu2 })
}

/// Empirical Hölder check on grid increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderCheck {
    /// `max mean((Z(t) − Z(s))²) / (L |t − s|^{2α})` over components and grid pairs.
    pub max_ratio: f64,
    pub passed: bool,
}

pub fn holder_check(z: &CurveArray, alpha: f64, l: f64, slack: f64) -> Result<HolderCheck> {
    let grid = make_grid(z.p())?;
    let pts = grid.points();
    let (n, p) = (z.n(), z.p());
    let mut worst = 0.0_f64;
    let mut diff = vec![0.0; p * p];
    for comp in 0..z.d() {
        diff.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let c = z.curve(i, comp);
            for h in 0..p {
                for h2 in h + 1..p {
                    diff[h * p + h2] += (c[h2] - c[h]).powi(2);
                }
            }
        }
        for h in 0..p {
            for h2 in h + 1..p {
                let mean = diff[h * p + h2] / n as f64;
                worst = worst.max(mean / (l * (pts[h2] - pts[h]).powf(2.0 * alpha)));
            }
        }
    }
    Ok(HolderCheck { max_ratio: worst, passed: worst <= 1.0 + slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{make_basis, smooth};

    #[test]
    fn single_bump_model() {
        let m = build_sparse_model(1, 1, 1, &[1.0], 1).unwrap();
        assert!((m.inner(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(m.support(), &[0]);
    }

    #[test]
    fn support_size_and_orthonormality() {
        let m = build_sparse_model(10, 3, 4, &[1.0, 0.6, 0.3, 0.1], 7).unwrap();
        assert_eq!(m.support().len(), 3);
        let nonzero = (0..10).filter(|&k| (0..50).any(|j| m.eval(0, k, j as f64 / 49.0) != 0.0)).count();
        assert_eq!(nonzero, 3);
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((m.inner(a, b) - want).abs() < 1e-10, "({a},{b}) {}", m.inner(a, b));
            }
        }
    }

    #[test]
    fn piecewise_linear_family_is_orthonormal() {
        let opts = ModelOptions { family: ShapeFamily::PiecewiseLinear, ..Default::default() };
        let m = build_sparse_model_with(6, 2, 3, &[1.0, 0.5, 0.2], 9, opts).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((m.inner(a, b) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn model_errors() {
        assert!(build_sparse_model(3, 4, 1, &[1.0], 0).is_err());
        assert!(build_sparse_model(3, 2, 2, &[1.0, 1.0], 0).is_err());
        assert!(build_sparse_model(3, 2, 2, &[0.5, 1.0], 0).is_err());
    }

    #[test]
    fn rank_one_noiseless_curves_are_multiples_of_lead() {
        let m = build_sparse_model(3, 2, 1, &[2.0], 4).unwrap();
        let obs = sample_observations(&m, 5, 16, 1).unwrap();
        let grid = make_grid(16).unwrap();
        let lead = &m.grid_table(&grid)[0];
        let h0 = lead.iter().position(|v| v.abs() > 0.1).unwrap();
        for i in 0..5 {
            let row = obs.y.sample(i);
            let k = row[h0] / lead[h0];
            for (a, b) in row.iter().zip(lead) {
                assert!((a - k * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let m = build_sparse_model(4, 2, 2, &[1.0, 0.5], 3).unwrap().with_sigma(0.3);
        assert_eq!(sample_observations(&m, 7, 8, 99).unwrap(), sample_observations(&m, 7, 8, 99).unwrap());
    }

    #[test]
    fn streaming_smoother_matches_two_step() {
        let m = build_sparse_model(4, 2, 2, &[1.0, 0.5], 3).unwrap().with_sigma(0.3);
        let basis = make_basis(4, 16).unwrap();
        let mut r1 = stream_rng(5, 17);
        let mut r2 = stream_rng(5, 17);
        let obs = sample_observations_with(&m, 9, 16, &mut r1, false).unwrap();
        let a = smooth(&obs.y, &basis).unwrap();
        let b = sample_smoothed(&m, 9, &basis, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn score_covariance_matches_eigenvalues() {
        // Project the noiseless curves back on f_ℓ to recover the scores √μ_ℓ ξ_ℓ.
        let mu = [1.0, 0.4];
        let m = build_sparse_model(2, 1, 2, &mu, 8).unwrap();
        let p = 257;
        let n = 10_000;
        let obs = sample_observations(&m, n, p, 2).unwrap();
        let grid = make_grid(p).unwrap();
        let table = m.grid_table(&grid);
        // trapezoid weights on the grid
        let w: Vec<f64> = (0..p).map(|h| if h == 0 || h == p - 1 { 0.5 } else { 1.0 } / (p - 1) as f64).collect();
        let mut cov = [[0.0; 2]; 2];
        for i in 0..n {
            let row = obs.y.sample(i);
            let sc: Vec<f64> = table
                .iter()
                .map(|f| (0..2 * p).map(|j| row[j] * f[j] * w[j % p]).sum::<f64>())
                .collect();
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += sc[a] * sc[b] / n as f64;
                }
            }
        }
        for a in 0..2 {
            let se = mu[a] * (2.0 / n as f64).sqrt();
            assert!((cov[a][a] - mu[a]).abs() < 3.0 * se + 1e-3, "{:?}", cov);
        }
        let se = (mu[0] * mu[1] / n as f64).sqrt();
        assert!(cov[0][1].abs() < 3.0 * se + 1e-3);
    }

    #[test]
    fn brownian_variance_and_origin() {
        let spec = KernelSpec::brownian(1).unwrap();
        let n = 10_000;
        let obs = sample_gaussian_kernel(&spec, n, 3, 1, 0.0, 4).unwrap();
        let var: f64 = (0..n).map(|i| obs.y.get(i, 0, 1).powi(2)).sum::<f64>() / n as f64;
        let se = 0.5 * (2.0 / n as f64).sqrt();
        assert!((var - 0.5).abs() < 3.0 * se);
        let two = sample_gaussian_kernel(&spec, 50, 2, 1, 0.0, 1).unwrap();
        assert!((0..50).all(|i| two.y.get(i, 0, 0) == 0.0));
    }

    #[test]
    fn fbm_half_matches_brownian_moments() {
        let n = 10_000;
        let b = sample_gaussian_kernel(&KernelSpec::brownian(1).unwrap(), n, 5, 1, 0.0, 10).unwrap();
        let f = sample_gaussian_kernel(&KernelSpec::fbm(0.5, 1).unwrap(), n, 5, 1, 0.0, 11).unwrap();
        for h in 1..5 {
            let t = h as f64 / 4.0;
            let mb: f64 = (0..n).map(|i| b.y.get(i, 0, h)).sum::<f64>() / n as f64;
            let mf: f64 = (0..n).map(|i| f.y.get(i, 0, h)).sum::<f64>() / n as f64;
            assert!((mb - mf).abs() < 3.0 * (2.0 * t / n as f64).sqrt());
            let vb: f64 = (0..n).map(|i| b.y.get(i, 0, h).powi(2)).sum::<f64>() / n as f64;
            let vf: f64 = (0..n).map(|i| f.y.get(i, 0, h).powi(2)).sum::<f64>() / n as f64;
            assert!((vb - vf).abs() < 3.0 * t * (4.0 / n as f64).sqrt());
        }
    }

    #[test]
    fn noise_is_independent_and_isotropic() {
        let m = build_sparse_model(3, 1, 1, &[1.0], 2).unwrap().with_sigma(0.7);
        let n = 10_000;
        let obs = sample_observations(&m, n, 4, 6).unwrap();
        let z = obs.z.as_ref().unwrap();
        let h = 2;
        let mut cov_ez = 0.0;
        let mut cov_ee = [[0.0; 3]; 3];
        for i in 0..n {
            let e: Vec<f64> = (0..3).map(|d| obs.y.get(i, d, h) - z.get(i, d, h)).collect();
            cov_ez += e[0] * z.get(i, m.support()[0], h) / n as f64;
            for a in 0..3 {
                for b in 0..3 {
                    cov_ee[a][b] += e[a] * e[b] / n as f64;
                }
            }
        }
        let s2 = 0.49;
        let zsd = (m.kernel(m.support()[0], m.support()[0], 2.0 / 3.0, 2.0 / 3.0)).sqrt();
        assert!(cov_ez.abs() < 3.0 * 0.7 * zsd / (n as f64).sqrt() + 1e-12);
        for a in 0..3 {
            assert!((cov_ee[a][a] - s2).abs() < 3.0 * s2 * (2.0 / n as f64).sqrt());
            for b in 0..a {
                assert!(cov_ee[a][b].abs() < 3.0 * s2 / (n as f64).sqrt());
            }
        }
    }

    #[test]
    fn holder_check_passes_for_models() {
        let m = build_sparse_model(3, 2, 2, &[1.0, 0.5], 12).unwrap();
        let obs = sample_observations(&m, 2000, 32, 3).unwrap();
        let hc = holder_check(obs.z.as_ref().unwrap(), m.alpha(), m.holder_l(), 0.2).unwrap();
        assert!(hc.passed, "{hc:?}");
        let b = sample_gaussian_kernel(&KernelSpec::brownian(2).unwrap(), 2000, 32, 2, 0.0, 3).unwrap();
        assert!(holder_check(b.z.as_ref().unwrap(), 0.5, 1.0, 0.2).unwrap().passed);
    }

    #[test]
    fn brownian_lead_values() {
        let spec = KernelSpec::scaled(BaseKernel::Brownian, &[0.5, 1.0]).unwrap();
        let lead = brownian_lead(&spec).unwrap();
        assert_eq!(lead.component, 1);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((lead.mu1 - 4.0 / pi2).abs() < 1e-15);
        assert!((lead.mu2 - 2.0 / pi2).abs() < 1e-15);
    }
}
