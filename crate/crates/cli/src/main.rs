use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skelab_cli::{catalog, config::ExperimentConfig, run_from_config};

#[derive(Parser)]
#[command(
    name = "skelab",
    about = "Stochastic kinetic equation laboratory: reproducible named experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the output directory from the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// Rayon worker threads (0 = default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Override the config's seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config file.
    Run { config: PathBuf },
    /// List the experiment catalog.
    List,
    /// Validate a config file without running it.
    Validate { config: PathBuf },
    /// Convert a binary field dump to CSV.
    DumpField {
        input: PathBuf,
        /// Output CSV path (defaults to the input with .csv appended).
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("thread pool setup failed: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &PathBuf, seed_override: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::List => {
            println!("{:<22} {:>9}  {:<10} description", "experiment", "runtime", "criteria");
            for e in catalog() {
                println!(
                    "{:<22} {:>9}  {:<10} {}",
                    e.name, e.expected_runtime, e.criteria, e.description
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = load_config(&config, cli.seed_override)?;
            let resolved = cfg.resolve().map_err(|e| {
                // unknown experiment: print the catalog as part of the error
                let names: Vec<&str> = catalog().iter().map(|c| c.name).collect();
                anyhow::anyhow!("{e}; known experiments: {}", names.join(", "))
            })?;
            resolved.validate()?;
            println!("config ok: experiment '{}'", resolved.experiment);
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config } => {
            let cfg = load_config(&config, cli.seed_override)?;
            if skelab_cli::default_config(&cfg.experiment).is_none() {
                let names: Vec<&str> = catalog().iter().map(|c| c.name).collect();
                eprintln!(
                    "unknown experiment '{}'; known experiments: {}",
                    cfg.experiment,
                    names.join(", ")
                );
                return Ok(ExitCode::from(2));
            }
            let out_dir = cli
                .output_dir
                .clone()
                .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out").join(&cfg.experiment));
            let report = run_from_config(cfg, &out_dir)?;
            let mut failed = 0usize;
            for a in &report.assertions {
                println!(
                    "[{}] {} - {}",
                    if a.passed { "pass" } else { "FAIL" },
                    a.label,
                    a.detail
                );
                if !a.passed {
                    failed += 1;
                }
            }
            println!(
                "{}: {} assertions, {} failed; artifacts in {}",
                report.experiment,
                report.assertions.len(),
                failed,
                out_dir.display()
            );
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::DumpField { input, output } => {
            let field: skelab::Field64 = skelab::grid::read_field_binary(&input)?;
            let out = output.unwrap_or_else(|| {
                let mut p = input.clone();
                p.set_extension("csv");
                p
            });
            skelab::grid::write_field_csv(&field, &out)?;
            println!(
                "wrote {} ({} x {} grid)",
                out.display(),
                field.grid.nx,
                field.grid.nv
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
