//! Monte Carlo replicates: simulate, smooth, estimate, tune-check, record.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{EtaChoice, ExperimentConfig, LambdaChoice, ModelSpec, RadiusChoice, SweepPoint};
use crate::basis::{make_basis, project_function, smooth, HistogramBasis, SmoothedSample};
use crate::covariance::{empirical_gram, BaseKernel, CovOperator, KernelSpec, SampleGram};
use crate::error::{Error, Result};
use crate::estimator::{aligned_error, extract_f, pre_estimate, solve_penalized, PreEstimate, SolveResult};
use crate::fnspace::CoefVector;
use crate::simulate::{
    brownian_lead, build_sparse_model_with, sample_gaussian_kernel_with, sample_observations_with, sample_smoothed,
    stream_rng, ModelOptions, ObservationSet, ProcessModel,
};
use crate::tuning::{estimate_nuisances, lambda1, lambda_rule, oracle_check, TuningInputs, TuningMode, TuningReport};

/// Coefficient dimension up to which the Gram matrix is formed explicitly.
const DENSE_LIMIT: usize = 128;

/// One replicate's outcome. Failed replicates carry NaN metrics and the error tag in `status`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub m: usize,
    pub s: usize,
    pub sigma: f64,
    pub seed: u64,
    pub lambda: f64,
    pub t_radius: f64,
    pub eta: f64,
    pub err_g: f64,
    pub err_f: f64,
    pub err_f_pca: f64,
    pub iterations: usize,
    pub stationarity_gap: f64,
    pub oracle_satisfied: bool,
    pub wall_ms: f64,
    pub replicate: usize,
    pub status: String,
}

impl RateRecord {
    pub const COLUMNS: [&'static str; 19] = [
        "n",
        "p",
        "D",
        "M",
        "s",
        "sigma",
        "seed",
        "lambda",
        "T",
        "eta",
        "err_g",
        "err_f",
        "err_f_pca",
        "iterations",
        "stationarity_gap",
        "oracle_satisfied",
        "wall_ms",
        "replicate",
        "status",
    ];

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    /// Numeric column by header name.
    pub fn field(&self, name: &str) -> Option<f64> {
        Some(match name {
            "n" => self.n as f64,
            "p" => self.p as f64,
            "D" | "d" => self.d as f64,
            "M" | "m" => self.m as f64,
            "s" => self.s as f64,
            "sigma" => self.sigma,
            "seed" => self.seed as f64,
            "lambda" => self.lambda,
            "T" | "t" => self.t_radius,
            "eta" => self.eta,
            "err_g" => self.err_g,
            "err_f" => self.err_f,
            "err_f_pca" => self.err_f_pca,
            "iterations" => self.iterations as f64,
            "stationarity_gap" => self.stationarity_gap,
            "wall_ms" => self.wall_ms,
            "replicate" => self.replicate as f64,
            _ => return None,
        })
    }

    fn blank(point: &SweepPoint, seed: u64, replicate: usize) -> Self {
        Self {
            n: point.n,
            p: point.p,
            d: point.d,
            m: point.m,
            s: point.s,
            sigma: point.sigma,
            seed,
            lambda: f64::NAN,
            t_radius: f64::NAN,
            eta: f64::NAN,
            err_g: f64::NAN,
            err_f: f64::NAN,
            err_f_pca: f64::NAN,
            iterations: 0,
            stationarity_gap: f64::NAN,
            oracle_satisfied: false,
            wall_ms: 0.0,
            replicate,
            status: "ok".into(),
        }
    }
}

enum Source {
    Model(Arc<ProcessModel>),
    Kernel { spec: KernelSpec },
}

/// Everything about a sweep point that does not depend on the replicate.
pub struct PointContext {
    pub point: SweepPoint,
    source: Source,
    basis: HistogramBasis,
    /// Projection of the true leading eigenfunction.
    f1_proj: CoefVector,
    /// `1 − ‖Π f₁‖²`.
    perp: f64,
    mu1: f64,
    mu2: f64,
    kinf: f64,
    alpha: f64,
    l_holder: f64,
}

impl PointContext {
    pub fn new(config: &ExperimentConfig, point: SweepPoint) -> Result<Self> {
        let basis = make_basis(point.m, point.p)?;
        match &config.model {
            ModelSpec::Sparse { eigenvalues, family, alpha, model_seed } => {
                let opts = ModelOptions { family: *family, alpha: *alpha, sigma: point.sigma };
                let model =
                    build_sparse_model_with(point.d, point.s, eigenvalues.len(), eigenvalues, *model_seed, opts)?;
                let f1_proj = project_function(|c, t| model.eval(0, c, t), point.d, &basis);
                let perp = (1.0 - f1_proj.norm().powi(2)).max(0.0);
                Ok(Self {
                    point,
                    mu1: eigenvalues[0],
                    mu2: eigenvalues.get(1).copied().unwrap_or(0.0),
                    kinf: model.kinf(),
                    alpha: model.alpha(),
                    l_holder: model.holder_l(),
                    source: Source::Model(Arc::new(model)),
                    basis,
                    f1_proj,
                    perp,
                })
            }
            ModelSpec::Brownian { scales } => {
                let spec = KernelSpec::scaled(BaseKernel::Brownian, scales)?;
                let lead = brownian_lead(&spec)?;
                let f1_proj = project_function(|c, t| lead.eval(c, t), point.d, &basis);
                let perp = (1.0 - f1_proj.norm().powi(2)).max(0.0);
                Ok(Self {
                    point,
                    mu1: lead.mu1,
                    mu2: lead.mu2,
                    kinf: spec.kinf(),
                    alpha: spec.alpha(),
                    l_holder: spec.holder_l(),
                    source: Source::Kernel { spec },
                    basis,
                    f1_proj,
                    perp,
                })
            }
        }
    }

    pub fn basis(&self) -> &HistogramBasis {
        &self.basis
    }

    pub fn truth(&self) -> &CoefVector {
        &self.f1_proj
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    /// Draw the replicate's dataset; raw curves are kept only when tuning needs them.
    pub fn draw(&self, config: &ExperimentConfig, replicate: usize) -> Result<(SmoothedSample, Option<ObservationSet>)> {
        let d = draw(config, self, replicate)?;
        Ok((d.smoothed, d.raw))
    }
}

/// Generator sub-stream of one replicate; depends only on indices.
pub fn replicate_stream(point_index: usize, replicate: usize) -> u64 {
    ((point_index as u64) << 32) | replicate as u64
}

pub fn run_replicate(config: &ExperimentConfig, point: &SweepPoint, replicate: usize) -> RateRecord {
    match PointContext::new(config, *point) {
        Ok(ctx) => run_with_context(config, &ctx, replicate),
        Err(e) => failed(point, config.seed, replicate, &e),
    }
}

fn failed(point: &SweepPoint, seed: u64, replicate: usize, e: &Error) -> RateRecord {
    let mut r = RateRecord::blank(point, seed, replicate);
    r.status = e.code().to_string();
    r
}

pub fn run_with_context(config: &ExperimentConfig, ctx: &PointContext, replicate: usize) -> RateRecord {
    let start = Instant::now();
    let mut record = RateRecord::blank(&ctx.point, config.seed, replicate);
    if let Err(e) = replicate_into(config, ctx, replicate, &mut record) {
        record.status = e.code().to_string();
    }
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    record
}

struct Draw {
    smoothed: SmoothedSample,
    /// Only filled when the tuning needs raw curves.
    raw: Option<ObservationSet>,
}

fn draw(config: &ExperimentConfig, ctx: &PointContext, replicate: usize) -> Result<Draw> {
    let mut rng = stream_rng(config.seed, replicate_stream(ctx.point.index, replicate));
    let n = ctx.point.n;
    let need_raw = config.mode == TuningMode::Practice;
    match &ctx.source {
        Source::Model(model) if !need_raw => Ok(Draw { smoothed: sample_smoothed(model, n, &ctx.basis, &mut rng)?, raw: None }),
        Source::Model(model) => {
            let obs = sample_observations_with(model, n, ctx.point.p, &mut rng, false)?;
            Ok(Draw { smoothed: smooth(&obs.y, &ctx.basis)?, raw: Some(obs) })
        }
        Source::Kernel { spec } => {
            let obs = sample_gaussian_kernel_with(spec, n, ctx.point.p, ctx.point.d, ctx.point.sigma, &mut rng)?;
            Ok(Draw { smoothed: smooth(&obs.y, &ctx.basis)?, raw: Some(obs) })
        }
    }
}

fn replicate_into(config: &ExperimentConfig, ctx: &PointContext, replicate: usize, out: &mut RateRecord) -> Result<()> {
    let d = draw(config, ctx, replicate)?;
    if ctx.point.m * ctx.point.d <= DENSE_LIMIT {
        let g = empirical_gram(&d.smoothed)?;
        estimate_into(config, ctx, &g, d.raw.as_ref(), out)
    } else {
        let g = SampleGram::new(&d.smoothed)?;
        estimate_into(config, ctx, &g, d.raw.as_ref(), out)
    }
}

/// Tuning inputs for one dataset, in the configured mode.
fn tuning_inputs(
    config: &ExperimentConfig,
    ctx: &PointContext,
    pre: &PreEstimate,
    raw: Option<&ObservationSet>,
) -> Result<(TuningInputs, f64, f64)> {
    let pt = &ctx.point;
    let base = |mu1_tilde: f64, kinf: f64, sigma: f64, g_ref: CoefVector| TuningInputs {
        n: pt.n,
        p: pt.p,
        d: pt.d,
        m: pt.m,
        s: pt.s,
        sigma,
        kinf,
        mu1_tilde,
        l_holder: ctx.l_holder,
        alpha: ctx.alpha,
        g_ref,
        mode: config.mode,
    };
    match config.mode {
        TuningMode::Oracle => {
            let rho = ctx.mu1.sqrt() - ctx.mu2.sqrt();
            let g_ref = ctx.f1_proj.scaled(ctx.mu1.sqrt());
            Ok((base(ctx.mu1, ctx.kinf, pt.sigma, g_ref), rho, ctx.mu1))
        }
        TuningMode::Practice => {
            let raw = raw.ok_or_else(|| Error::InvalidArgument("practice mode needs raw observations".into()))?;
            let nu = estimate_nuisances(raw, &ctx.basis, None)?;
            Ok((base(nu.mu1_tilde.max(f64::MIN_POSITIVE), nu.kinf, nu.sigma, pre.g_init.clone()), pre.gap(), pre.mu1))
        }
    }
}

/// Outcome of the estimation pipeline on one dataset.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub pre: PreEstimate,
    /// Absent when the ball is too wide for the oracle inequality (`8η ≥ ρ`).
    pub report: Option<TuningReport>,
    pub solve: SolveResult,
    pub lambda: f64,
    pub t_radius: f64,
    pub eta: f64,
}

/// Pre-estimate, tuning and penalized solve on a prepared Gram operator.
pub fn estimate_dataset<G: CovOperator>(
    config: &ExperimentConfig,
    ctx: &PointContext,
    g: &G,
    raw: Option<&ObservationSet>,
) -> Result<Estimate> {
    let pre = pre_estimate(g)?;
    let eta = match config.eta {
        EtaChoice::Auto => pre.default_eta(),
        EtaChoice::Infinite => f64::INFINITY,
        EtaChoice::Fixed(v) => v,
    };
    let (inputs, rho, mu1) = tuning_inputs(config, ctx, &pre, raw)?;
    let admissible = 8.0 * eta < rho && rho > 0.0;
    let lambda = match config.lambda {
        LambdaChoice::Rule => lambda_rule(&inputs, lambda1(&inputs))?,
        LambdaChoice::Fixed(v) => v,
    };
    let suggested = if admissible { Some(oracle_check(&inputs, 0.0, eta, rho, mu1)?.t_suggest) } else { None };
    let t_radius = match config.t_radius {
        RadiusChoice::Infinite => f64::INFINITY,
        RadiusChoice::Fixed(v) => v,
        RadiusChoice::Suggest => suggested.unwrap_or(0.0),
    };
    let report = match admissible {
        true => Some(oracle_check(&inputs, if t_radius.is_finite() { t_radius } else { f64::MAX }, eta, rho, mu1)?),
        false => None,
    };

    let mut solver = config.solver;
    solver.lambda = lambda;
    solver.t_radius = t_radius;
    solver.eta = eta;
    solver.gram_norm = Some(pre.mu1.max(0.0));
    let solve = solve_penalized(g, &solver, &pre.g_init)?;
    Ok(Estimate { pre, report, solve, lambda, t_radius, eta })
}

fn estimate_into<G: CovOperator>(
    config: &ExperimentConfig,
    ctx: &PointContext,
    g: &G,
    raw: Option<&ObservationSet>,
    out: &mut RateRecord,
) -> Result<()> {
    let est = estimate_dataset(config, ctx, g, raw)?;
    out.err_f_pca = aligned_error(&est.pre.direction, &ctx.f1_proj)? + ctx.perp;
    out.lambda = est.lambda;
    out.t_radius = est.t_radius;
    out.eta = est.eta;
    out.oracle_satisfied = est.report.as_ref().is_some_and(|r| r.oracle_satisfied);
    let f_hat = extract_f(&est.solve)?;
    let g_truth = ctx.f1_proj.scaled(ctx.mu1.sqrt());
    out.err_g = aligned_error(&est.solve.g_hat, &g_truth)? + ctx.mu1 * ctx.perp;
    out.err_f = aligned_error(&f_hat, &ctx.f1_proj)? + ctx.perp;
    out.iterations = est.solve.iterations;
    out.stationarity_gap = est.solve.stationarity_gap;
    Ok(())
}

/// Every replicate of every point, in point-major order, on `threads` workers.
pub fn run_sweep(config: &ExperimentConfig, threads: usize) -> Result<Vec<RateRecord>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let points = config.points();
    pool.install(|| {
        let contexts: Vec<std::result::Result<PointContext, Error>> =
            points.par_iter().map(|pt| PointContext::new(config, *pt)).collect();
        let jobs: Vec<(usize, usize)> =
            (0..points.len()).flat_map(|i| (0..config.replicates).map(move |r| (i, r))).collect();
        Ok(jobs
            .par_iter()
            .map(|&(i, r)| match &contexts[i] {
                Ok(ctx) => run_with_context(config, ctx, r),
                Err(e) => failed(&points[i], config.seed, r, e),
            })
            .collect())
    })
}
