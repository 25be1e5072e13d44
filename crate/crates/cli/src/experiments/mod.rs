//! Experiment implementations, one module per catalog entry.

pub mod besov;
pub mod filter_general;
pub mod filter_langevin;
pub mod holder;
pub mod ito_wentzell;
pub mod l1;
pub mod model_ske;
pub mod noise_cov;
pub mod semigroup;
pub mod superlinear;

use crate::config::ExperimentConfig;
use crate::report::Report;

/// Dispatches to the experiment named in the config. The config must be
/// resolved and validated first.
pub fn run_experiment(cfg: &ExperimentConfig, rep: &mut Report) -> anyhow::Result<()> {
    match cfg.experiment.as_str() {
        "semigroup-identities" => semigroup::run(cfg, rep),
        "besov-estimators" => besov::run(cfg, rep),
        "noise-covariance" => noise_cov::run(cfg, rep),
        "model-ske-moments" => model_ske::run(cfg, rep),
        "holder-exponents" => holder::run(cfg, rep),
        "l1-contraction" => l1::run(cfg, rep),
        "superlinear-pam" => superlinear::run(cfg, rep),
        "filter-langevin" => filter_langevin::run(cfg, rep),
        "filter-general" => filter_general::run(cfg, rep),
        "ito-wentzell" => ito_wentzell::run(cfg, rep),
        other => anyhow::bail!("unknown experiment '{other}'"),
    }
}
