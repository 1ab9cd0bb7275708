//! Composite midpoint quadrature with successive doubling.

/// Starting node count per interval.
pub const START_NODES: usize = 64;
/// Stop once two successive refinements differ by less than this.
pub const TOL: f64 = 1e-10;
/// Refinement cap (nodes per interval, per dimension).
pub const MAX_NODES: usize = 1 << 16;

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub nodes: usize,
    pub converged: bool,
}

pub fn midpoint<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for k in 0..n {
        s += f(a + (k as f64 + 0.5) * h);
    }
    s * h
}

/// Doubles the node count from `start` until successive values agree to `tol`.
pub fn adaptive_midpoint<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, start: usize, tol: f64, max_nodes: usize) -> QuadResult {
    let mut n = start.max(1);
    let mut prev = midpoint(f, a, b, n);
    while n < max_nodes {
        n *= 2;
        let cur = midpoint(f, a, b, n);
        if (cur - prev).abs() < tol {
            return QuadResult { value: cur, nodes: n, converged: true };
        }
        prev = cur;
    }
    QuadResult { value: prev, nodes: n, converged: false }
}

/// Default rule used for basis projections.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> QuadResult {
    adaptive_midpoint(f, a, b, START_NODES, TOL, MAX_NODES)
}

pub fn midpoint_2d<F: Fn(f64, f64) -> f64>(f: &F, (a, b): (f64, f64), (c, d): (f64, f64), n: usize) -> f64 {
    let hs = (b - a) / n as f64;
    let ht = (d - c) / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let x = a + (i as f64 + 0.5) * hs;
        let mut row = 0.0;
        for j in 0..n {
            row += f(x, c + (j as f64 + 0.5) * ht);
        }
        s += row;
    }
    s * hs * ht
}

/// Two-dimensional doubling rule on a rectangle.
pub fn adaptive_midpoint_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    s: (f64, f64),
    t: (f64, f64),
    start: usize,
    tol: f64,
    max_nodes: usize,
) -> QuadResult {
    let mut n = start.max(1);
    let mut prev = midpoint_2d(f, s, t, n);
    while n < max_nodes {
        n *= 2;
        let cur = midpoint_2d(f, s, t, n);
        if (cur - prev).abs() < tol {
            return QuadResult { value: cur, nodes: n, converged: true };
        }
        prev = cur;
    }
    QuadResult { value: prev, nodes: n, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_linear() {
        let r = integrate(&|t: f64| 3.0 * t + 1.0, 0.0, 2.0);
        assert!(r.converged);
        assert!((r.value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_integrand() {
        let r = integrate(&|t: f64| t.sin(), 0.0, std::f64::consts::PI);
        assert!((r.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn two_dimensional_product() {
        let r = adaptive_midpoint_2d(&|s: f64, t: f64| s * t, (0.0, 1.0), (0.0, 2.0), 8, 1e-12, 256);
        assert!((r.value - 1.0).abs() < 1e-12);
    }
}
