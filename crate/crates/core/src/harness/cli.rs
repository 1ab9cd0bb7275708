use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::config::ExperimentConfig;
use super::io::{
    read_observations_binary, read_observations_csv, read_rate_csv, write_observations_binary, write_observations_csv,
    write_rate_csv,
};
use super::selftest;
use super::stats::fit_loglog_slope;
use super::sweep::{estimate_dataset, run_sweep, PointContext};
use crate::adversarial::{build_pair, hellinger_affinity, hellinger_sq_product};
use crate::basis::{make_basis, smooth};
use crate::covariance::{empirical_gram, projection_bias_report, remainder_report, KernelSpec, SampleGram};
use crate::error::{Error, Result};
use crate::simulate::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Binary,
}

#[derive(Debug, Parser)]
#[command(name = "sfpca", version, about = "Sparse multivariate functional PCA experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate observations at the first sweep point.
    Simulate(Common),
    /// Run the estimator on one dataset (simulated, or read with --input).
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo sweep to a rate CSV.
    Sweep(Common),
    /// Log-log slope of a rate CSV column against another.
    Rates {
        input: PathBuf,
        #[arg(long, default_value = "n")]
        x: String,
        #[arg(long, default_value = "err_f")]
        y: String,
    },
    /// Discretization remainders, projection bias and a Hellinger check.
    Diagnose {
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 64)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Hurst index; Brownian motion when absent.
        #[arg(long)]
        hurst: Option<f64>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// In-process invariant checks.
    Selftest,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn simulate(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let ctx = PointContext::new(&cfg, cfg.points()[0])?;
    let mut raw_cfg = cfg.clone();
    raw_cfg.mode = crate::tuning::TuningMode::Practice;
    let (_, raw) = ctx.draw(&raw_cfg, 0)?;
    let raw = raw.ok_or_else(|| Error::Numerical("no raw curves were kept".into()))?;
    let mut w = sink(c.out.as_ref())?;
    match c.format {
        Format::Csv => write_observations_csv(&raw.y, &mut w)?,
        Format::Binary => write_observations_binary(&raw.y, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn estimate(c: &Common, input: Option<&PathBuf>) -> Result<()> {
    let mut cfg = load_config(c)?;
    let mut point = cfg.points()[0];
    let raw = match input {
        Some(path) => {
            let f = File::open(path)?;
            let y = match c.format {
                Format::Csv => read_observations_csv(BufReader::new(f))?,
                Format::Binary => read_observations_binary(BufReader::new(f))?,
            };
            if y.d() != point.d || y.p() != point.p {
                return Err(Error::Config(format!(
                    "input has D={}, p={} but the configuration expects D={}, p={}",
                    y.d(),
                    y.p(),
                    point.d,
                    point.p
                )));
            }
            point.n = y.n();
            cfg.n = vec![y.n()];
            Some(ObservationSet { y, z: None, seed: cfg.seed, sigma: point.sigma })
        }
        None => None,
    };
    let ctx = PointContext::new(&cfg, point)?;
    let (smoothed, raw) = match raw {
        Some(obs) => (smooth(&obs.y, ctx.basis())?, Some(obs)),
        None => ctx.draw(&cfg, 0)?,
    };
    let est = if smoothed.dim() <= 128 {
        estimate_dataset(&cfg, &ctx, &empirical_gram(&smoothed)?, raw.as_ref())?
    } else {
        estimate_dataset(&cfg, &ctx, &SampleGram::new(&smoothed)?, raw.as_ref())?
    };
    let mut w = sink(c.out.as_ref())?;
    let s = &est.solve;
    writeln!(w, "# tuning")?;
    match &est.report {
        Some(r) => write!(w, "{r}")?,
        None => writeln!(w, "oracle_check = skipped (8 eta >= rho)")?,
    }
    writeln!(w, "# solution")?;
    writeln!(w, "lambda = {:.17e}", est.lambda)?;
    writeln!(w, "T = {:.17e}", est.t_radius)?;
    writeln!(w, "eta = {:.17e}", est.eta)?;
    writeln!(w, "mu_hat = {:.17e}", s.mu_hat)?;
    writeln!(w, "iterations = {}", s.iterations)?;
    writeln!(w, "stop = {:?}", s.stop)?;
    writeln!(w, "stationarity_gap = {:.17e}", s.stationarity_gap)?;
    writeln!(w, "l1_binding = {}", s.binding.l1_constraint)?;
    writeln!(w, "ball_binding = {}", s.binding.ball)?;
    writeln!(w, "component,cell,g_hat,f_hat")?;
    let m = s.g_hat.m();
    for comp in 0..s.g_hat.d() {
        for cell in 0..m {
            writeln!(w, "{comp},{cell},{:.16e},{:.16e}", s.g_hat.get(comp, cell), s.f_hat.get(comp, cell))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn sweep(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let records = run_sweep(&cfg, c.threads)?;
    let out = c.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from));
    let mut w = sink(out.as_ref())?;
    write_rate_csv(&records, &mut w)?;
    w.flush()?;
    let failed = records.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} replicates failed", records.len());
    }
    Ok(())
}

fn rates(input: &PathBuf, x: &str, y: &str) -> Result<()> {
    let records = read_rate_csv(BufReader::new(File::open(input)?))?;
    let fit = fit_loglog_slope(&records, x, y)?;
    println!("slope {:.2}", fit.slope);
    println!("slope_exact = {:.17e}", fit.slope);
    println!("intercept = {:.17e}", fit.intercept);
    println!("stderr = {:.17e}", fit.stderr);
    println!("points = {}", fit.points);
    println!("failures = {}", fit.failures);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn diagnose(m: usize, p: usize, d: usize, hurst: Option<f64>, n: usize, s: usize, sigma: f64) -> Result<()> {
    let spec = match hurst {
        Some(h) => KernelSpec::fbm(h, d)?,
        None => KernelSpec::brownian(d)?,
    };
    let basis = make_basis(m, p)?;
    let rem = remainder_report(&spec, &basis, sigma * sigma)?;
    let bias = projection_bias_report(&spec, &basis)?;
    println!("max_RN = {:.6e}", rem.max_rn);
    println!("max_RK = {:.6e}", rem.max_rk);
    println!("bound_RK = {:.6e}", rem.bound_rk);
    println!("RK_within_bound = {}", rem.rk_within_bound());
    println!("max_bias = {:.6e}", bias.max_bias);
    println!("bias_bound = {:.6e}", bias.bound);
    println!("bias_within_bound = {}", bias.within_bound());
    if p >= 3 && s <= n.min(d) {
        let (_, cov) = build_pair(s, n, p, d, sigma, 0)?;
        let aff = hellinger_affinity(&cov.g0, &cov.g1)?;
        println!("hellinger_sq_n = {:.6e}", hellinger_sq_product(aff, n));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(c) => simulate(&c).map(|_| true),
        Command::Estimate { common, input } => estimate(&common, input.as_ref()).map(|_| true),
        Command::Sweep(c) => sweep(&c).map(|_| true),
        Command::Rates { input, x, y } => rates(&input, &x, &y).map(|_| true),
        Command::Diagnose { m, p, d, hurst, n, s, sigma } => diagnose(m, p, d, hurst, n, s, sigma).map(|_| true),
        Command::Selftest => {
            let results = selftest::run();
            for (name, ok) in &results {
                println!("{} {name}", if *ok { "PASS" } else { "FAIL" });
            }
            Ok(results.iter().all(|r| r.1))
        }
    }
}

/// Exit code: 0 on success, 2 on usage or configuration errors, 1 otherwise.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}
