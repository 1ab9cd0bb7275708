//! File formats.
//!
//! Observation CSV: header `i,d,y0,…,y{p−1}`, then one row per `(sample, component)`
//! in sample-major order, holding the `p` grid values.
//!
//! Observation binary: the bytes `MFPC`, a little-endian `u16` version (currently 1),
//! `n`, `D`, `p` as little-endian `u64`, then `n·D·p` little-endian `f64` values in the
//! same order as the CSV rows.
//!
//! Rate CSV: header [`RateRecord::COLUMNS`], floats printed with 17 significant digits.

use std::io::{BufRead, Read, Write};

use super::sweep::RateRecord;
use crate::basis::CurveArray;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MFPC";
pub const VERSION: u16 = 1;

fn perr(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

pub fn write_observations_csv<W: Write>(y: &CurveArray, mut w: W) -> Result<()> {
    let mut header = String::from("i,d");
    for h in 0..y.p() {
        header.push_str(&format!(",y{h}"));
    }
    writeln!(w, "{header}")?;
    for i in 0..y.n() {
        for d in 0..y.d() {
            write!(w, "{i},{d}")?;
            for v in y.curve(i, d) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn read_observations_csv<R: BufRead>(r: R) -> Result<CurveArray> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| perr("empty observation file"))??;
    let p = header.split(',').count().checked_sub(2).filter(|&p| p > 0).ok_or_else(|| perr("header has no value columns"))?;
    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let idx = |s: Option<&str>| -> Result<usize> {
            s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| perr(format!("row {}: bad index", k + 2)))
        };
        let i = idx(it.next())?;
        let d = idx(it.next())?;
        let vals: Vec<f64> = it
            .map(|v| v.trim().parse::<f64>().map_err(|_| perr(format!("row {}: bad value '{v}'", k + 2))))
            .collect::<Result<_>>()?;
        if vals.len() != p {
            return Err(perr(format!("row {}: expected {p} values, found {}", k + 2, vals.len())));
        }
        rows.push((i, d, vals));
    }
    let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let dd = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if n == 0 || rows.len() != n * dd {
        return Err(perr(format!("expected n·D = {} rows, found {}", n * dd, rows.len())));
    }
    let mut out = CurveArray::zeros(n, dd, p);
    let mut seen = vec![false; n * dd];
    for (i, d, vals) in rows {
        if std::mem::replace(&mut seen[i * dd + d], true) {
            return Err(perr(format!("duplicate row for sample {i}, component {d}")));
        }
        let o = (i * dd + d) * p;
        out.data_mut()[o..o + p].copy_from_slice(&vals);
    }
    Ok(out)
}

pub fn write_observations_binary<W: Write>(y: &CurveArray, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [y.n(), y.d(), y.p()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in y.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_observations_binary<R: Read>(mut r: R) -> Result<CurveArray> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(perr("missing MFPC magic bytes"));
    }
    let mut ver = [0u8; 2];
    r.read_exact(&mut ver)?;
    let version = u16::from_le_bytes(ver);
    if version != VERSION {
        return Err(perr(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for slot in dims.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *slot = usize::try_from(u64::from_le_bytes(b)).map_err(|_| perr("dimension overflows"))?;
    }
    let [n, d, p] = dims;
    let len = n.checked_mul(d).and_then(|v| v.checked_mul(p)).ok_or_else(|| perr("dimension overflows"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(perr(format!("expected {} payload bytes, found {}", len * 8, bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    CurveArray::new(data, n, d, p)
}

pub fn write_rate_csv<W: Write>(records: &[RateRecord], mut w: W) -> Result<()> {
    writeln!(w, "{}", RateRecord::COLUMNS.join(","))?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{},{:.16e},{},{}",
            r.n,
            r.p,
            r.d,
            r.m,
            r.s,
            r.sigma,
            r.seed,
            r.lambda,
            r.t_radius,
            r.eta,
            r.err_g,
            r.err_f,
            r.err_f_pca,
            r.iterations,
            r.stationarity_gap,
            r.oracle_satisfied,
            r.wall_ms,
            r.replicate,
            r.status
        )?;
    }
    Ok(())
}

pub fn read_rate_csv<R: BufRead>(r: R) -> Result<Vec<RateRecord>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| perr("empty rate file"))??;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != RateRecord::COLUMNS {
        return Err(perr("rate file header does not match the expected columns"));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != cols.len() {
            return Err(perr(format!("row {}: expected {} fields", k + 2, cols.len())));
        }
        let bad = |c: usize| perr(format!("row {}: bad {}", k + 2, cols[c]));
        let u = |c: usize| f[c].parse::<usize>().map_err(|_| bad(c));
        let x = |c: usize| f[c].parse::<f64>().map_err(|_| bad(c));
        out.push(RateRecord {
            n: u(0)?,
            p: u(1)?,
            d: u(2)?,
            m: u(3)?,
            s: u(4)?,
            sigma: x(5)?,
            seed: f[6].parse().map_err(|_| bad(6))?,
            lambda: x(7)?,
            t_radius: x(8)?,
            eta: x(9)?,
            err_g: x(10)?,
            err_f: x(11)?,
            err_f_pca: x(12)?,
            iterations: u(13)?,
            stationarity_gap: x(14)?,
            oracle_satisfied: f[15].parse().map_err(|_| bad(15))?,
            wall_ms: x(16)?,
            replicate: u(17)?,
            status: f[18].to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curves() -> CurveArray {
        let data: Vec<f64> = (0..2 * 3 * 5).map(|k| (k as f64 * 0.37).sin() / 3.0).collect();
        CurveArray::new(data, 2, 3, 5).unwrap()
    }

    #[test]
    fn observation_round_trips() {
        let y = curves();
        let mut buf = Vec::new();
        write_observations_csv(&y, &mut buf).unwrap();
        assert_eq!(read_observations_csv(&buf[..]).unwrap(), y);
        let mut bin = Vec::new();
        write_observations_binary(&y, &mut bin).unwrap();
        assert_eq!(&bin[..4], b"MFPC");
        assert_eq!(bin.len(), 4 + 2 + 24 + 30 * 8);
        assert_eq!(read_observations_binary(&bin[..]).unwrap(), y);
        bin[0] = b'X';
        assert!(read_observations_binary(&bin[..]).is_err());
    }

    #[test]
    fn rate_csv_round_trips() {
        let r = RateRecord {
            n: 10,
            p: 8,
            d: 2,
            m: 4,
            s: 1,
            sigma: 0.1,
            seed: 3,
            lambda: 1.0 / 3.0,
            t_radius: f64::INFINITY,
            eta: 0.02,
            err_g: 1e-7,
            err_f: 2e-7,
            err_f_pca: std::f64::consts::PI,
            iterations: 12,
            stationarity_gap: 1e-10,
            oracle_satisfied: true,
            wall_ms: 1.5,
            replicate: 0,
            status: "ok".into(),
        };
        let mut buf = Vec::new();
        write_rate_csv(std::slice::from_ref(&r), &mut buf).unwrap();
        assert_eq!(read_rate_csv(&buf[..]).unwrap(), vec![r]);
    }
}
