//! Run artifacts: assertion ledger, CSV writers, and the manifest.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// One named check with its measured value and threshold description.
#[derive(Debug, Clone)]
pub struct Assertion {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

/// Collects assertions and output files for one experiment run.
pub struct Report {
    pub experiment: String,
    pub assertions: Vec<Assertion>,
    pub artifacts: Vec<PathBuf>,
    out_dir: PathBuf,
}

impl Report {
    pub fn new(experiment: &str, out_dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Report {
            experiment: experiment.to_string(),
            assertions: Vec::new(),
            artifacts: Vec::new(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Records a check; failures are recorded, not fatal.
    pub fn check(&mut self, label: &str, passed: bool, detail: String) {
        self.assertions.push(Assertion {
            label: label.to_string(),
            passed,
            detail,
        });
    }

    /// Convenience: |value - target| <= tol.
    pub fn check_close(&mut self, label: &str, value: f64, target: f64, tol: f64) {
        let passed = (value - target).abs() <= tol;
        self.check(
            label,
            passed,
            format!("value {value:.6e} target {target:.6e} tol {tol:.2e}"),
        );
    }

    /// Convenience: lo <= value <= hi.
    pub fn check_window(&mut self, label: &str, value: f64, lo: f64, hi: f64) {
        let passed = value >= lo && value <= hi;
        self.check(label, passed, format!("value {value:.6} window [{lo}, {hi}]"));
    }

    /// Convenience: value <= bound.
    pub fn check_below(&mut self, label: &str, value: f64, bound: f64) {
        self.check(
            label,
            value <= bound,
            format!("value {value:.6e} bound {bound:.2e}"),
        );
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// Writes a CSV artifact: header line plus rows of f64 columns.
    pub fn write_csv(
        &mut self,
        name: &str,
        header: &str,
        rows: &[Vec<f64>],
    ) -> std::io::Result<PathBuf> {
        let path = self.out_dir.join(name);
        let mut text = String::new();
        writeln!(text, "{header}").unwrap();
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(text, "{}", cells.join(",")).unwrap();
        }
        std::fs::write(&path, text)?;
        self.artifacts.push(path.clone());
        Ok(path)
    }

    /// Registers an artifact written through other means (field dumps).
    pub fn register_artifact(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    /// Writes summary.csv and manifest.txt; returns overall pass/fail.
    pub fn finalize(&mut self, config: &ExperimentConfig) -> std::io::Result<bool> {
        let summary_path = self.out_dir.join("summary.csv");
        let mut text = String::from("label,passed,detail\n");
        for a in &self.assertions {
            writeln!(
                text,
                "{},{},\"{}\"",
                a.label,
                if a.passed { 1 } else { 0 },
                a.detail.replace('"', "'")
            )
            .unwrap();
        }
        std::fs::write(&summary_path, text)?;
        self.artifacts.push(summary_path);

        let config_echo = config.to_toml();
        let mut hasher = Sha256::new();
        hasher.update(config_echo.as_bytes());
        let hash = hasher.finalize();
        let manifest_path = self.out_dir.join("manifest.txt");
        let mut f = std::fs::File::create(&manifest_path)?;
        writeln!(f, "experiment: {}", self.experiment)?;
        writeln!(f, "skelab-version: {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(f, "config-sha256: {:x}", hash)?;
        writeln!(
            f,
            "assertions: {} passed, {} failed",
            self.assertions.iter().filter(|a| a.passed).count(),
            self.assertions.iter().filter(|a| !a.passed).count()
        )?;
        writeln!(f, "artifacts:")?;
        for a in &self.artifacts {
            writeln!(f, "  {}", a.file_name().unwrap().to_string_lossy())?;
        }
        writeln!(f, "--- config echo ---")?;
        writeln!(f, "{config_echo}")?;
        Ok(self.all_passed())
    }
}
