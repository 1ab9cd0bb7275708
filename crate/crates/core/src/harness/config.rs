//! INI-style experiment configuration.
//!
//! ```text
//! [model]
//! kind = sparse            # or brownian
//! eigenvalues = 1.0, 0.5, 0.25
//! family = bump            # or piecewise_linear
//! alpha = 0.5
//! model_seed = 7
//! scales = 1.0, 0.5        # brownian only, one per component
//!
//! [sweep]
//! n = 250, 500
//! p = 256
//! d = 50
//! m = p                    # "p" ties M to p
//! s = 3
//! sigma = 0.5
//! replicates = 100
//! seed = 1
//!
//! [solver]
//! lambda = rule            # or a number
//! t = inf                  # inf, suggest, or a number
//! eta = auto               # auto (ρ̂/16), inf, or a number
//! prox = exact             # exact, sequential, dykstra
//! step = backtracking      # or fixed:<gamma>
//! max_iters = 5000
//! tol_stationarity = 1e-9
//!
//! [tuning]
//! mode = oracle            # or practice
//!
//! [output]
//! path = rates.csv
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::{ProxMode, SolverConfig, StepRule};
use crate::simulate::ShapeFamily;
use crate::tuning::TuningMode;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Sparse { eigenvalues: Vec<f64>, family: ShapeFamily, alpha: f64, model_seed: u64 },
    /// Independent Brownian components with variance scales; `D` is the number of scales.
    Brownian { scales: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Rule,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusChoice {
    Infinite,
    Suggest,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Auto,
    Infinite,
    Fixed(f64),
}

/// `M` either fixed or tied to `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSize {
    Fixed(usize),
    EqualsP,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub d: Vec<usize>,
    pub m: Vec<BasisSize>,
    pub s: Vec<usize>,
    pub sigma: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub lambda: LambdaChoice,
    pub t_radius: RadiusChoice,
    pub eta: EtaChoice,
    /// Penalty, radius and ball are overwritten per replicate.
    pub solver: SolverConfig,
    pub mode: TuningMode,
    pub output: Option<String>,
}

/// One cell of the sweep lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub m: usize,
    pub s: usize,
    pub sigma: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Sparse {
                eigenvalues: vec![1.0, 0.5, 0.25],
                family: ShapeFamily::Bump,
                alpha: 0.5,
                model_seed: 7,
            },
            n: vec![200],
            p: vec![32],
            d: vec![4],
            m: vec![BasisSize::EqualsP],
            s: vec![2],
            sigma: vec![0.5],
            replicates: 1,
            seed: 1,
            lambda: LambdaChoice::Rule,
            t_radius: RadiusChoice::Infinite,
            eta: EtaChoice::Auto,
            solver: SolverConfig::default(),
            mode: TuningMode::Oracle,
            output: None,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut out = Sections::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_ascii_lowercase();
            out.entry(current.clone()).or_default();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {}: expected key = value", lineno + 1)))?;
        if current.is_empty() {
            return Err(cfg_err(format!("line {}: key outside of a section", lineno + 1)));
        }
        out.entry(current.clone()).or_default().insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| cfg_err(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items: Vec<T> = v.split(',').map(|x| parse_num(key, x)).collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(cfg_err(format!("{key}: empty list")));
    }
    Ok(items)
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sections = parse_sections(text)?;
        let mut cfg = Self::default();
        let empty = BTreeMap::new();
        for name in sections.keys() {
            if !["model", "sweep", "solver", "tuning", "output"].contains(&name.as_str()) {
                return Err(cfg_err(format!("unknown section [{name}]")));
            }
        }

        let model = sections.get("model").unwrap_or(&empty);
        let kind = model.get("kind").map(String::as_str).unwrap_or("sparse");
        cfg.model = match kind {
            "sparse" => {
                let eigenvalues = match model.get("eigenvalues") {
                    Some(v) => parse_list("eigenvalues", v)?,
                    None => vec![1.0, 0.5, 0.25],
                };
                let family = match model.get("family").map(String::as_str).unwrap_or("bump") {
                    "bump" => ShapeFamily::Bump,
                    "piecewise_linear" => ShapeFamily::PiecewiseLinear,
                    other => return Err(cfg_err(format!("family: unknown '{other}'"))),
                };
                let alpha = model.get("alpha").map(|v| parse_num("alpha", v)).transpose()?.unwrap_or(0.5);
                let model_seed = model.get("model_seed").map(|v| parse_num("model_seed", v)).transpose()?.unwrap_or(7);
                ModelSpec::Sparse { eigenvalues, family, alpha, model_seed }
            }
            "brownian" => {
                let scales = parse_list("scales", model.get("scales").ok_or_else(|| cfg_err("brownian model needs scales"))?)?;
                ModelSpec::Brownian { scales }
            }
            other => return Err(cfg_err(format!("kind: unknown model '{other}'"))),
        };
        for key in model.keys() {
            if !["kind", "eigenvalues", "family", "alpha", "model_seed", "scales"].contains(&key.as_str()) {
                return Err(cfg_err(format!("[model]: unknown key '{key}'")));
            }
        }

        let sweep = sections.get("sweep").unwrap_or(&empty);
        for (key, v) in sweep {
            match key.as_str() {
                "n" => cfg.n = parse_list(key, v)?,
                "p" => cfg.p = parse_list(key, v)?,
                "d" => cfg.d = parse_list(key, v)?,
                "m" => {
                    cfg.m = v
                        .split(',')
                        .map(|x| {
                            let x = x.trim();
                            if x.eq_ignore_ascii_case("p") {
                                Ok(BasisSize::EqualsP)
                            } else {
                                parse_num(key, x).map(BasisSize::Fixed)
                            }
                        })
                        .collect::<Result<_>>()?
                }
                "s" => cfg.s = parse_list(key, v)?,
                "sigma" => cfg.sigma = parse_list(key, v)?,
                "replicates" => cfg.replicates = parse_num(key, v)?,
                "seed" => cfg.seed = parse_num(key, v)?,
                _ => return Err(cfg_err(format!("[sweep]: unknown key '{key}'"))),
            }
        }

        let solver = sections.get("solver").unwrap_or(&empty);
        for (key, v) in solver {
            let lv = v.to_ascii_lowercase();
            match key.as_str() {
                "lambda" => cfg.lambda = if lv == "rule" { LambdaChoice::Rule } else { LambdaChoice::Fixed(parse_num(key, v)?) },
                "t" => {
                    cfg.t_radius = match lv.as_str() {
                        "inf" => RadiusChoice::Infinite,
                        "suggest" => RadiusChoice::Suggest,
                        _ => RadiusChoice::Fixed(parse_num(key, v)?),
                    }
                }
                "eta" => {
                    cfg.eta = match lv.as_str() {
                        "auto" => EtaChoice::Auto,
                        "inf" => EtaChoice::Infinite,
                        _ => EtaChoice::Fixed(parse_num(key, v)?),
                    }
                }
                "prox" => {
                    cfg.solver.prox = match lv.as_str() {
                        "exact" => ProxMode::Exact,
                        "sequential" => ProxMode::Sequential,
                        "dykstra" => ProxMode::Dykstra,
                        _ => return Err(cfg_err(format!("prox: unknown '{v}'"))),
                    }
                }
                "step" => {
                    cfg.solver.step_rule = if lv == "backtracking" {
                        StepRule::Backtracking { beta: 0.5, c: 1e-4 }
                    } else if let Some(g) = lv.strip_prefix("fixed:") {
                        StepRule::Fixed(parse_num(key, g)?)
                    } else {
                        return Err(cfg_err(format!("step: unknown '{v}'")));
                    }
                }
                "max_iters" => cfg.solver.max_iters = parse_num(key, v)?,
                "tol_stationarity" => cfg.solver.tol_stationarity = parse_num(key, v)?,
                "tol_step" => cfg.solver.tol_step = parse_num(key, v)?,
                _ => return Err(cfg_err(format!("[solver]: unknown key '{key}'"))),
            }
        }

        if let Some(t) = sections.get("tuning") {
            for (key, v) in t {
                match (key.as_str(), v.to_ascii_lowercase().as_str()) {
                    ("mode", "oracle") => cfg.mode = TuningMode::Oracle,
                    ("mode", "practice") => cfg.mode = TuningMode::Practice,
                    _ => return Err(cfg_err(format!("[tuning]: bad entry '{key} = {v}'"))),
                }
            }
        }
        if let Some(o) = sections.get("output") {
            for (key, v) in o {
                match key.as_str() {
                    "path" => cfg.output = Some(v.clone()),
                    _ => return Err(cfg_err(format!("[output]: unknown key '{key}'"))),
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(cfg_err("replicates must be at least 1"));
        }
        if let ModelSpec::Brownian { scales } = &self.model {
            if self.d.iter().any(|&d| d != scales.len()) {
                return Err(cfg_err("brownian model: every D must equal the number of scales"));
            }
        }
        let points = self.points();
        if points.is_empty() {
            return Err(cfg_err("empty sweep"));
        }
        for pt in &points {
            if pt.m == 0 || pt.p % pt.m != 0 {
                return Err(cfg_err(format!("M={} does not divide p={}", pt.m, pt.p)));
            }
            if pt.s == 0 || pt.s > pt.d {
                return Err(cfg_err(format!("need 1 ≤ s ≤ D, got s={}, D={}", pt.s, pt.d)));
            }
            if pt.n == 0 || pt.p < 2 {
                return Err(cfg_err("need n ≥ 1 and p ≥ 2"));
            }
            if !(pt.sigma >= 0.0) {
                return Err(cfg_err("sigma must be nonnegative"));
            }
        }
        let mut probe = self.solver;
        probe.lambda = 0.0;
        probe.validate().map_err(|e| cfg_err(e.to_string()))
    }

    /// Cartesian product of the sweep lists, `n` varying fastest.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &sigma in &self.sigma {
            for &s in &self.s {
                for &d in &self.d {
                    for &p in &self.p {
                        for &m in &self.m {
                            let m = match m {
                                BasisSize::Fixed(v) => v,
                                BasisSize::EqualsP => p,
                            };
                            for &n in &self.n {
                                out.push(SweepPoint { index: out.len(), n, p, d, m, s, sigma });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
