//! Experiment runner library: configuration, catalog, reporting, and the
//! experiment implementations the `skelab` binary and the acceptance suite
//! drive.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::Path;

pub use config::{catalog, default_config, ExperimentConfig};
pub use report::Report;

/// Runs one experiment end to end: resolve defaults, validate, execute,
/// write artifacts. Returns the report on success (assertion failures are
/// recorded inside, not errors).
pub fn run_from_config(cfg: ExperimentConfig, out_dir: &Path) -> anyhow::Result<Report> {
    let cfg = cfg.resolve()?;
    cfg.validate()?;
    let mut rep = Report::new(&cfg.experiment, out_dir)?;
    experiments::run_experiment(&cfg, &mut rep)?;
    rep.finalize(&cfg)?;
    Ok(rep)
}
