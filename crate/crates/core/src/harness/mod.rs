//! End-to-end runs: simulate, smooth, estimate, check the tuning, record.
//!
//! File formats are described in [`io`]; the configuration syntax in [`config`].

pub mod cli;
pub mod config;
pub mod io;
pub mod selftest;
pub mod stats;
pub mod sweep;

pub use cli::cli_main;
pub use config::{BasisSize, EtaChoice, ExperimentConfig, LambdaChoice, ModelSpec, RadiusChoice, SweepPoint};
pub use stats::{fit_loglog, fit_loglog_slope, paired_t_less, PairedTest, SlopeFit};
pub use sweep::{estimate_dataset, replicate_stream, run_replicate, run_sweep, run_with_context, Estimate, PointContext, RateRecord};
