//! Coefficient-space view of the product space H = L²([0,1])^D.
//!
//! A function is stored through its coordinates on the orthonormal histogram
//! basis, so inner products and Hilbert-Schmidt norms reduce to Euclidean
//! algebra on `M * D` numbers. The function-L1 and sup norms are recovered
//! from the coefficients with the factors `M^(-1/2)` and `M^(1/2)`.

use crate::error::{invalid, Error, Result};

/// A function in the span of the histogram basis, indexed by `(d, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVector {
    coeffs: Vec<f64>,
    m: usize,
    d: usize,
}

impl CoefVector {
    pub fn new(coeffs: Vec<f64>, m: usize, d: usize) -> Result<Self> {
        if m == 0 || d == 0 {
            return invalid("M and D must be positive");
        }
        if coeffs.len() != m * d {
            return Err(Error::Dimension(format!(
                "expected {} coefficients for M={m}, D={d}, got {}",
                m * d,
                coeffs.len()
            )));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return invalid(format!("coefficient {i} is not finite"));
        }
        Ok(Self { coeffs, m, d })
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        Self { coeffs: vec![0.0; m * d], m, d }
    }

    /// Unit vector on coordinate `(comp, cell)`.
    pub fn unit(m: usize, d: usize, comp: usize, cell: usize) -> Self {
        let mut v = Self::zeros(m, d);
        v.coeffs[comp * m + cell] = 1.0;
        v
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn get(&self, comp: usize, cell: usize) -> f64 {
        self.coeffs[comp * self.m + cell]
    }

    /// Coefficients of component `comp`.
    pub fn component(&self, comp: usize) -> &[f64] {
        &self.coeffs[comp * self.m..(comp + 1) * self.m]
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.coeffs)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * k).collect(), m: self.m, d: self.d }
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Same shape, new coefficients (unchecked length is asserted).
    pub(crate) fn with_coeffs(&self, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), self.coeffs.len());
        Self { coeffs, m: self.m, d: self.d }
    }

    pub(crate) fn from_parts(coeffs: Vec<f64>, m: usize, d: usize) -> Self {
        debug_assert_eq!(coeffs.len(), m * d);
        Self { coeffs, m, d }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.m != other.m || self.d != other.d {
            return Err(Error::Dimension(format!(
                "shapes (M={}, D={}) and (M={}, D={}) differ",
                self.m, self.d, other.m, other.d
            )));
        }
        Ok(())
    }
}

/// The four norms of a function in the basis span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub h_norm: f64,
    pub l1_norm: f64,
    pub sup_norm: f64,
    pub l0_count: usize,
}

pub fn h_inner(a: &CoefVector, b: &CoefVector) -> Result<f64> {
    a.same_shape(b)?;
    Ok(dot(&a.coeffs, &b.coeffs))
}

pub fn norms(a: &CoefVector) -> NormReport {
    let mf = a.m as f64;
    let l1: f64 = a.coeffs.iter().map(|c| c.abs()).sum();
    let max = a.coeffs.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    let l0 = (0..a.d).filter(|&k| a.component(k).iter().any(|&c| c != 0.0)).count();
    NormReport { h_norm: a.norm(), l1_norm: l1 / mf.sqrt(), sup_norm: mf.sqrt() * max, l0_count: l0 }
}

/// Hilbert-Schmidt norm of the rank-one operator `a ⊗ b`.
pub fn tensor_hs_norm(a: &CoefVector, b: &CoefVector) -> Result<f64> {
    a.same_shape(b)?;
    Ok(a.norm() * b.norm())
}

/// Entrywise sign with `sign(0) = +1`.
pub fn sign_map(a: &CoefVector) -> CoefVector {
    a.with_coeffs(a.coeffs.iter().map(|&c| sign(c)).collect())
}

#[inline]
pub fn sign(u: f64) -> f64 {
    if u >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn soft_threshold(a: &CoefVector, tau: f64) -> Result<CoefVector> {
    if !(tau >= 0.0) {
        return invalid(format!("threshold must be nonnegative, got {tau}"));
    }
    let mut out = a.coeffs.clone();
    soft_threshold_in_place(&mut out, tau);
    Ok(a.with_coeffs(out))
}

pub fn project_l2_ball(a: &CoefVector, center: &CoefVector, radius: f64) -> Result<CoefVector> {
    a.same_shape(center)?;
    if !(radius >= 0.0) {
        return invalid(format!("radius must be nonnegative, got {radius}"));
    }
    let mut out = a.coeffs.clone();
    project_l2_ball_in_place(&mut out, &center.coeffs, radius);
    Ok(a.with_coeffs(out))
}

/// Euclidean projection onto `{z : Σ|z_i| ≤ radius_coeff}`.
pub fn project_l1_ball(a: &CoefVector, radius_coeff: f64) -> Result<CoefVector> {
    if !(radius_coeff >= 0.0) {
        return invalid(format!("radius must be nonnegative, got {radius_coeff}"));
    }
    let mut out = a.coeffs.clone();
    project_l1_ball_in_place(&mut out, radius_coeff);
    Ok(a.with_coeffs(out))
}

// Slice kernels shared with the solver.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn l1(a: &[f64]) -> f64 {
    a.iter().map(|c| c.abs()).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn soft_threshold_in_place(a: &mut [f64], tau: f64) {
    if tau == 0.0 {
        return;
    }
    for c in a.iter_mut() {
        let m = c.abs() - tau;
        *c = if m > 0.0 { sign(*c) * m } else { 0.0 };
    }
}

pub(crate) fn project_l2_ball_in_place(a: &mut [f64], center: &[f64], radius: f64) {
    if radius.is_infinite() {
        return;
    }
    let dist = dist2(a, center);
    if dist <= radius {
        return;
    }
    let k = radius / dist;
    for (x, c) in a.iter_mut().zip(center) {
        *x = c + k * (*x - c);
    }
}

/// Threshold θ such that `Σ max(|a_i| − θ, 0) = radius`, assuming `Σ|a_i| > radius`.
fn l1_threshold(a: &[f64], radius: f64) -> f64 {
    let mut u: Vec<f64> = a.iter().map(|c| c.abs()).collect();
    u.sort_unstable_by(|x, y| y.total_cmp(x));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

pub(crate) fn project_l1_ball_in_place(a: &mut [f64], radius: f64) {
    if radius.is_infinite() || l1(a) <= radius {
        return;
    }
    if radius == 0.0 {
        a.iter_mut().for_each(|c| *c = 0.0);
        return;
    }
    let theta = l1_threshold(a, radius);
    soft_threshold_in_place(a, theta);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(v: &[f64], m: usize, d: usize) -> CoefVector {
        CoefVector::new(v.to_vec(), m, d).unwrap()
    }

    #[test]
    fn inner_examples() {
        let e = CoefVector::unit(3, 1, 0, 0);
        assert_eq!(h_inner(&e, &e).unwrap(), 1.0);
        let a = cv(&[1.0, 2.0], 1, 2);
        let b = cv(&[3.0, -1.0], 1, 2);
        assert_eq!(h_inner(&a, &b).unwrap(), 1.0);
        assert!(h_inner(&a, &CoefVector::zeros(2, 1)).is_err());
    }

    #[test]
    fn norm_examples() {
        let a = cv(&[2.0, 0.0, 0.0, 0.0], 4, 1);
        let r = norms(&a);
        assert_eq!(r.l1_norm, 1.0);
        assert_eq!(r.sup_norm, 4.0);
        assert_eq!(r.h_norm, 2.0);
        assert_eq!(r.l0_count, 1);
        let z = norms(&CoefVector::zeros(4, 3));
        assert_eq!((z.h_norm, z.l1_norm, z.sup_norm, z.l0_count), (0.0, 0.0, 0.0, 0));
    }

    #[test]
    fn tensor_norm_of_square() {
        let a = cv(&[2.0, 0.0], 2, 1);
        assert_eq!(tensor_hs_norm(&a, &a).unwrap(), 4.0);
        assert_eq!(tensor_hs_norm(&CoefVector::zeros(2, 1), &a).unwrap(), 0.0);
    }

    #[test]
    fn sign_convention() {
        let s = sign_map(&cv(&[-3.0, 0.0, 2.0], 3, 1));
        assert_eq!(s.as_slice(), &[-1.0, 1.0, 1.0]);
    }

    #[test]
    fn soft_threshold_examples() {
        let a = cv(&[2.0, -0.3], 2, 1);
        assert_eq!(soft_threshold(&a, 0.5).unwrap().as_slice(), &[1.5, 0.0]);
        assert_eq!(soft_threshold(&a, 0.0).unwrap(), a);
        assert!(soft_threshold(&a, -1.0).is_err());
    }

    #[test]
    fn soft_threshold_matches_grid_search() {
        // argmin_z ½(z−a)² + τ|z| by brute force on a 1e−4 grid.
        for &(a, tau) in &[(1.3, 0.4), (-0.7, 0.2), (0.15, 0.3), (-2.05, 1.1), (0.0, 0.5)] {
            let mut best = (f64::INFINITY, 0.0);
            let mut z = -3.0;
            while z <= 3.0 {
                let f = 0.5 * (z - a) * (z - a) + tau * f64::abs(z);
                if f < best.0 {
                    best = (f, z);
                }
                z += 1e-4;
            }
            let got = soft_threshold(&cv(&[a], 1, 1), tau).unwrap().as_slice()[0];
            assert!((got - best.1).abs() < 2e-4, "a={a} tau={tau}: {got} vs {}", best.1);
        }
    }

    #[test]
    fn l2_projection_examples() {
        let z = CoefVector::zeros(2, 1);
        let inside = cv(&[0.1, 0.2], 2, 1);
        assert_eq!(project_l2_ball(&inside, &z, 1.0).unwrap(), inside);
        let out = project_l2_ball(&cv(&[3.0, 0.0], 2, 1), &z, 1.0).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn l1_projection_examples() {
        let a = cv(&[0.2, -0.3], 2, 1);
        assert_eq!(project_l1_ball(&a, 1.0).unwrap(), a);
        let out = project_l1_ball(&cv(&[3.0, 0.0], 2, 1), 1.0).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.0]);
        let zero = project_l1_ball(&a, 0.0).unwrap();
        assert_eq!(zero.as_slice(), &[0.0, 0.0]);
    }

    /// Active-set oracle: for each support/sign pattern the projection onto
    /// the face `Σ s_i z_i = r` restricted to the support is explicit; the
    /// best feasible candidate is the projection.
    fn l1_projection_oracle(a: &[f64], r: f64) -> Vec<f64> {
        if l1(a) <= r {
            return a.to_vec();
        }
        let n = a.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let k = idx.len() as f64;
            let s: Vec<f64> = idx.iter().map(|&i| sign(a[i])).collect();
            let mu = (idx.iter().zip(&s).map(|(&i, si)| si * a[i]).sum::<f64>() - r) / k;
            let mut z = vec![0.0; n];
            let mut ok = true;
            for (&i, si) in idx.iter().zip(&s) {
                z[i] = a[i] - mu * si;
                if z[i] * si < 0.0 {
                    ok = false;
                }
            }
            if !ok || (l1(&z) - r).abs() > 1e-9 {
                continue;
            }
            let d = dist2(&z, a);
            if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, z));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn l1_projection_matches_active_set_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = rng.random_range(0.1..2.0);
            let got = project_l1_ball(&cv(&a, 5, 1), r).unwrap();
            let want = l1_projection_oracle(&a, r);
            for (g, w) in got.as_slice().iter().zip(&want) {
                assert!((g - w).abs() < 1e-8, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn l2_projection_is_closest_point() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let c = cv(&[0.5, -0.2, 0.1], 3, 1);
        let a = cv(&[2.0, 1.0, -1.5], 3, 1);
        let out = project_l2_ball(&a, &c, 0.7).unwrap();
        let dout = dist2(out.as_slice(), a.as_slice());
        for _ in 0..100 {
            let mut z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            project_l2_ball_in_place(&mut z, c.as_slice(), 0.7);
            assert!(dout <= dist2(&z, a.as_slice()) + 1e-12);
        }
    }
}
