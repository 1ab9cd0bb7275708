//! Observation grid, histogram basis and smoothing.

use crate::error::{invalid, Error, Result};
use crate::fnspace::CoefVector;
use crate::quad;

/// The equispaced grid `t_h = h / (p − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn p(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn t(&self, h: usize) -> f64 {
        self.points[h]
    }
}

pub fn make_grid(p: usize) -> Result<Grid> {
    if p < 2 {
        return invalid(format!("grid needs at least 2 points, got {p}"));
    }
    let den = (p - 1) as f64;
    Ok(Grid { points: (0..p).map(|h| h as f64 / den).collect() })
}

/// `φ_λ = √M · 1[λ/M, (λ+1)/M)`, with `t = 1` placed in the last cell.
#[derive(Debug, Clone)]
pub struct HistogramBasis {
    m: usize,
    per_cell: usize,
    grid: Grid,
    amp: f64,
}

pub fn make_basis(m: usize, p: usize) -> Result<HistogramBasis> {
    if m == 0 {
        return invalid("basis size M must be positive");
    }
    let grid = make_grid(p)?;
    if p % m != 0 {
        return invalid(format!("M={m} does not divide p={p}"));
    }
    let basis = HistogramBasis { m, per_cell: p / m, grid, amp: (m as f64).sqrt() };
    let worst = basis.riemann_defect();
    if worst > 1e-12 {
        return Err(Error::Numerical(format!("Riemann orthonormality defect {worst:e}")));
    }
    Ok(basis)
}

impl HistogramBasis {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.grid.p()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Basis amplitude `√M`.
    pub fn amplitude(&self) -> f64 {
        self.amp
    }

    /// Factor turning coefficient-ℓ1 into function-L1.
    pub fn l1_factor(&self) -> f64 {
        1.0 / self.amp
    }

    /// Number of grid points per cell, `p / M`.
    pub fn points_per_cell(&self) -> usize {
        self.per_cell
    }

    /// Cell holding grid point `h`, by index arithmetic.
    pub fn cell_of_index(&self, h: usize) -> usize {
        h / self.per_cell
    }

    /// Grid indices belonging to cell `λ`.
    pub fn cell_indices(&self, lambda: usize) -> std::ops::Range<usize> {
        lambda * self.per_cell..(lambda + 1) * self.per_cell
    }

    pub fn cell_bounds(&self, lambda: usize) -> (f64, f64) {
        let m = self.m as f64;
        (lambda as f64 / m, (lambda + 1) as f64 / m)
    }

    /// Cell containing `t ∈ [0, 1]`.
    pub fn cell_of(&self, t: f64) -> usize {
        if t >= 1.0 {
            return self.m - 1;
        }
        let m = self.m as f64;
        let mut c = (t * m).floor().max(0.0) as usize;
        if c >= self.m {
            c = self.m - 1;
        }
        if c > 0 && t < c as f64 / m {
            c -= 1;
        } else if c + 1 < self.m && t >= (c + 1) as f64 / m {
            c += 1;
        }
        c
    }

    pub fn eval(&self, lambda: usize, t: f64) -> Result<f64> {
        if lambda >= self.m {
            return invalid(format!("cell index {lambda} out of range for M={}", self.m));
        }
        if !(0.0..=1.0).contains(&t) {
            return Ok(0.0);
        }
        Ok(if self.cell_of(t) == lambda { self.amp } else { 0.0 })
    }

    /// Largest deviation of `(1/p) Σ_h φ_λ(t_h) φ_λ'(t_h)` from `δ_{λλ'}`.
    pub fn riemann_defect(&self) -> f64 {
        let p = self.p() as f64;
        let mut worst = 0.0_f64;
        for lambda in 0..self.m {
            let sum: f64 = self.cell_indices(lambda).map(|_| self.amp * self.amp).sum();
            worst = worst.max((sum / p - 1.0).abs());
        }
        worst
    }

    /// Smooth one curve block (`D × p`, row-major) into `M · D` coefficients.
    pub fn smooth_into(&self, row: &[f64], d: usize, out: &mut [f64]) {
        let p = self.p();
        debug_assert_eq!(row.len(), d * p);
        debug_assert_eq!(out.len(), d * self.m);
        let scale = self.amp / p as f64;
        for comp in 0..d {
            let curve = &row[comp * p..(comp + 1) * p];
            for lambda in 0..self.m {
                let s: f64 = curve[self.cell_indices(lambda)].iter().sum();
                out[comp * self.m + lambda] = s * scale;
            }
        }
    }
}

pub fn eval_basis(basis: &HistogramBasis, lambda: usize, t: f64) -> Result<f64> {
    basis.eval(lambda, t)
}

/// `n × D × p` array of grid values, stored row-major as `((i·D)+d)·p + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveArray {
    data: Vec<f64>,
    n: usize,
    d: usize,
    p: usize,
}

impl CurveArray {
    pub fn new(data: Vec<f64>, n: usize, d: usize, p: usize) -> Result<Self> {
        if data.len() != n * d * p {
            return Err(Error::Dimension(format!(
                "array of length {} cannot hold n={n}, D={d}, p={p}",
                data.len()
            )));
        }
        Ok(Self { data, n, d, p })
    }

    pub fn zeros(n: usize, d: usize, p: usize) -> Self {
        Self { data: vec![0.0; n * d * p], n, d, p }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, d: usize, h: usize) -> f64 {
        self.data[(i * self.d + d) * self.p + h]
    }

    /// Block of all components for sample `i`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.d * self.p;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.d * self.p;
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn curve(&self, i: usize, d: usize) -> &[f64] {
        let o = (i * self.d + d) * self.p;
        &self.data[o..o + self.p]
    }
}

/// Smoothed coefficients, one row of length `M · D` per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSample {
    ytilde: Vec<f64>,
    n: usize,
    d: usize,
    m: usize,
    p: usize,
}

impl SmoothedSample {
    pub fn new(ytilde: Vec<f64>, n: usize, d: usize, m: usize, p: usize) -> Result<Self> {
        if ytilde.len() != n * d * m {
            return Err(Error::Dimension(format!("coefficient matrix length {} != n·M·D", ytilde.len())));
        }
        if ytilde.iter().any(|v| !v.is_finite()) {
            return invalid("smoothed sample contains non-finite values");
        }
        Ok(Self { ytilde, n, d, m, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn p(&self) -> usize {
        self.p
    }

    /// Row width `M · D`.
    pub fn dim(&self) -> usize {
        self.m * self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.dim();
        &self.ytilde[i * w..(i + 1) * w]
    }

    pub fn data(&self) -> &[f64] {
        &self.ytilde
    }
}

pub fn smooth(y: &CurveArray, basis: &HistogramBasis) -> Result<SmoothedSample> {
    if y.p() != basis.p() {
        return Err(Error::Dimension(format!("curves have p={}, basis expects p={}", y.p(), basis.p())));
    }
    let w = basis.m() * y.d();
    let mut out = vec![0.0; y.n() * w];
    for i in 0..y.n() {
        basis.smooth_into(y.sample(i), y.d(), &mut out[i * w..(i + 1) * w]);
    }
    SmoothedSample::new(out, y.n(), y.d(), basis.m(), basis.p())
}

/// Orthogonal projection of `f(d, t)` onto the basis span, by midpoint quadrature on each cell.
pub fn project_function<F: Fn(usize, f64) -> f64>(f: F, d: usize, basis: &HistogramBasis) -> CoefVector {
    let m = basis.m();
    let mut coeffs = vec![0.0; m * d];
    for comp in 0..d {
        let g = |t: f64| f(comp, t);
        for lambda in 0..m {
            let (a, b) = basis.cell_bounds(lambda);
            coeffs[comp * m + lambda] = basis.amplitude() * quad::integrate(&g, a, b).value;
        }
    }
    CoefVector::from_parts(coeffs, m, d)
}

/// Evaluate the function represented by `a` at `(d, t)`.
pub fn eval_coefs(a: &CoefVector, basis: &HistogramBasis, comp: usize, t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    basis.amplitude() * a.get(comp, basis.cell_of(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        assert_eq!(make_grid(3).unwrap().points(), &[0.0, 0.5, 1.0]);
        assert_eq!(make_grid(2).unwrap().points(), &[0.0, 1.0]);
        assert!(make_grid(1).is_err());
        for p in 2..=1024 {
            let g = make_grid(p).unwrap();
            assert_eq!(g.t(p - 1), 1.0);
            assert!(g.points().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn basis_examples() {
        let b = make_basis(4, 8).unwrap();
        let s: f64 = b.grid().points().iter().map(|&t| b.eval(0, t).unwrap().powi(2)).sum();
        assert_eq!(s / 8.0, 1.0);
        let b1 = make_basis(1, 5).unwrap();
        assert!(b1.grid().points().iter().all(|&t| b1.eval(0, t).unwrap() == 1.0));
        assert!(make_basis(3, 8).is_err());
    }

    #[test]
    fn eval_examples() {
        let b = make_basis(4, 8).unwrap();
        assert_eq!(eval_basis(&b, 0, 0.1).unwrap(), 2.0);
        assert_eq!(eval_basis(&b, 0, 0.25).unwrap(), 0.0);
        assert_eq!(eval_basis(&b, 1, 0.25).unwrap(), 2.0);
        assert_eq!(eval_basis(&b, 3, 1.0).unwrap(), 2.0);
        assert!(eval_basis(&b, 4, 0.5).is_err());
    }

    #[test]
    fn index_and_float_membership_agree() {
        for &(m, p) in &[(2, 8), (4, 64), (8, 64), (64, 64), (3, 9), (5, 100), (16, 1024)] {
            let b = make_basis(m, p).unwrap();
            for (h, &t) in b.grid().points().iter().enumerate() {
                assert_eq!(b.cell_of_index(h), b.cell_of(t), "M={m} p={p} h={h}");
            }
        }
    }

    #[test]
    fn smooth_examples() {
        let b1 = make_basis(1, 4).unwrap();
        let y = CurveArray::new(vec![2.5; 4], 1, 1, 4).unwrap();
        let s = smooth(&y, &b1).unwrap();
        assert!((s.row(0)[0] - 2.5).abs() < 1e-15);
        let z = smooth(&CurveArray::zeros(3, 2, 4), &b1).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smooth_linear_curve_close_to_inner_product() {
        let (m, p) = (4, 8);
        let b = make_basis(m, p).unwrap();
        let y = CurveArray::new(b.grid().points().to_vec(), 1, 1, p).unwrap();
        let s = smooth(&y, &b).unwrap();
        let mf = m as f64;
        for lambda in 0..m {
            let l = lambda as f64;
            let exact = mf.sqrt() * ((l + 1.0).powi(2) - l * l) / (2.0 * mf * mf);
            assert!((s.row(0)[lambda] - exact).abs() <= 2.0 / p as f64);
        }
    }

    #[test]
    fn projection_examples() {
        let b = make_basis(4, 8).unwrap();
        let step = |_d: usize, t: f64| [1.0, -2.0, 0.5, 3.0][b.cell_of(t)];
        let a = project_function(step, 1, &b);
        let want: Vec<f64> = [1.0, -2.0, 0.5, 3.0].iter().map(|v| v * 0.5).collect();
        for (x, w) in a.as_slice().iter().zip(&want) {
            assert!((x - w).abs() < 1e-12);
        }
        let z = project_function(|_, _| 0.0, 2, &b);
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        // idempotence on the span
        let back = project_function(|d, t| eval_coefs(&a, &b, d, t), 1, &b);
        for (x, y) in a.as_slice().iter().zip(back.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_error_of_identity_decreases() {
        // ‖t − Π t‖² = 1/(12 M²) for histograms of width 1/M.
        let mut last = f64::INFINITY;
        for &m in &[2usize, 4, 8, 16] {
            let b = make_basis(m, m).unwrap();
            let a = project_function(|_, t| t, 1, &b);
            let err2 = 1.0 / 3.0 - a.norm().powi(2);
            let closed = 1.0 / (12.0 * (m * m) as f64);
            assert!((err2 - closed).abs() < 1e-10, "M={m}: {err2} vs {closed}");
            assert!(err2 < last);
            last = err2;
        }
    }
}
