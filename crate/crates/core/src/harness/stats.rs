//! Rate fits and paired comparisons over sweep output.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::sweep::RateRecord;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; NaN with only two points.
    pub stderr: f64,
    /// Rows excluded because their status was not `ok`.
    pub failures: usize,
    pub points: usize,
}

/// Least squares line through `(ln x, ln y)`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension("x and y lengths differ".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return invalid("log-log fit needs positive finite values");
    }
    let k = xs.len();
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k as f64;
    let my = ly.iter().sum::<f64>() / k as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if k < 2 || !(sxx > 0.0) {
        return invalid("degenerate x values");
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if k > 2 { (sse / (k - 2) as f64 / sxx).sqrt() } else { f64::NAN };
    Ok(SlopeFit { slope, intercept, stderr, failures: 0, points: k })
}

/// Mean of `y` per distinct `x`, successful rows only, then a log-log fit.
pub fn fit_loglog_slope(records: &[RateRecord], x_field: &str, y_field: &str) -> Result<SlopeFit> {
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    let mut failures = 0;
    for r in records {
        if !r.ok() {
            failures += 1;
            continue;
        }
        let x = r.field(x_field).ok_or_else(|| Error::InvalidArgument(format!("unknown column '{x_field}'")))?;
        let y = r.field(y_field).ok_or_else(|| Error::InvalidArgument(format!("unknown column '{y_field}'")))?;
        let e = groups.entry(x.to_bits()).or_insert((x, 0.0, 0));
        e.1 += y;
        e.2 += 1;
    }
    if groups.len() < 3 {
        return invalid(format!("need at least 3 distinct values of {x_field}, got {}", groups.len()));
    }
    let mut pts: Vec<(f64, f64)> = groups.values().map(|&(x, s, c)| (x, s / c as f64)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mut fit = fit_loglog(&xs, &ys)?;
    fit.failures = failures;
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub mean_diff: f64,
    pub t_stat: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a − b) < 0`.
    pub p_value: f64,
}

pub fn paired_t_less(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension("paired samples differ in length".into()));
    }
    let k = a.len();
    if k < 2 {
        return invalid("need at least two pairs");
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diff.iter().sum::<f64>() / k as f64;
    let var = diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let df = (k - 1) as f64;
    if var == 0.0 {
        let p = if mean < 0.0 { 0.0 } else { 1.0 };
        return Ok(PairedTest { mean_diff: mean, t_stat: if mean < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY }, df, p_value: p });
    }
    let t = mean / (var / k as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(PairedTest { mean_diff: mean, t_stat: t, df, p_value: dist.cdf(t) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let xs = [10.0, 20.0, 40.0, 80.0];
        let inv: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        assert!((fit_loglog(&xs, &inv).unwrap().slope + 1.0).abs() < 1e-10);
        let flat = [2.0; 4];
        assert!(fit_loglog(&xs, &flat).unwrap().slope.abs() < 1e-12);
        let alpha = 0.5;
        let pw: Vec<f64> = xs.iter().map(|x| 0.7 * x.powf(-2.0 * alpha)).collect();
        assert!((fit_loglog(&xs, &pw).unwrap().slope + 1.0).abs() < 1e-10);
        assert!(fit_loglog(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn paired_test_reference_value() {
        // differences −1, −2, −3: mean −2, sd 1, t = −2√3, df 2
        let t = paired_t_less(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((t.t_stat + 2.0 * 3f64.sqrt()).abs() < 1e-12);
        // P(T₂ ≤ t) = ½(1 + t/√(2 + t²))
        let want = 0.5 * (1.0 + t.t_stat / (2.0 + t.t_stat * t.t_stat).sqrt());
        assert!((t.p_value - want).abs() < 1e-10);
    }
}
