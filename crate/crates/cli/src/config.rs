//! Experiment configuration: a single TOML tree, versioned, with defaults
//! filled per experiment. The resolved configuration is echoed into the run
//! manifest so a rerun reproduces every output byte.

use serde::{Deserialize, Serialize};
use skelab::grid::{make_grid, PhaseGrid};
use skelab::noise::BasisKind;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: String,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub grid: Option<GridCfg>,
    #[serde(default)]
    pub time: Option<TimeCfg>,
    #[serde(default)]
    pub mc: Option<McCfg>,
    #[serde(default)]
    pub noise: Option<NoiseCfg>,
    #[serde(default)]
    pub besov: Option<BesovCfg>,
    #[serde(default)]
    pub filter: Option<FilterCfg>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub lx: f64,
    pub lv: f64,
    pub nx: usize,
    pub nv: usize,
}

impl GridCfg {
    pub fn build(&self) -> skelab::Result<PhaseGrid<f64>> {
        make_grid(self.lx, self.lv, self.nx, self.nv)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeCfg {
    pub dt: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct McCfg {
    pub paths: usize,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_stride() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseCfg {
    /// "trigonometric" or "haar".
    pub basis: String,
    /// 0 selects the grid-resolved default Nv/2.
    pub channels: usize,
}

impl NoiseCfg {
    pub fn kind(&self) -> skelab::Result<BasisKind> {
        match self.basis.as_str() {
            "trigonometric" => Ok(BasisKind::Trigonometric),
            "haar" => Ok(BasisKind::Haar),
            other => Err(skelab::Error::Config(format!(
                "unknown basis kind '{other}' (trigonometric|haar)"
            ))),
        }
    }

    pub fn resolve_channels(&self, nv: usize) -> usize {
        if self.channels == 0 {
            nv / 2
        } else {
            self.channels
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BesovCfg {
    /// 0 selects the largest partition level the grid supports.
    pub j_max: usize,
    pub s: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterCfg {
    /// dV drift coefficient: tilde_b = tilde_b_scale * v.
    pub tilde_b_scale: f64,
    pub tilde_sigma: f64,
    pub sigma: f64,
    /// observation drift: hat_b = hat_b_scale * tanh(v).
    pub hat_b_scale: f64,
    pub hat_sigma: f64,
    pub particles: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        if cfg.version != 1 {
            anyhow::bail!("unsupported config version {}", cfg.version);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    /// Fills unset sections from the experiment's defaults.
    pub fn resolve(mut self) -> anyhow::Result<ExperimentConfig> {
        let d = default_config(&self.experiment)
            .ok_or_else(|| anyhow::anyhow!("unknown experiment '{}'", self.experiment))?;
        self.grid = self.grid.or(d.grid);
        self.time = self.time.or(d.time);
        self.mc = self.mc.or(d.mc);
        self.noise = self.noise.or(d.noise);
        self.besov = self.besov.or(d.besov);
        self.filter = self.filter.or(d.filter);
        Ok(self)
    }

    /// Validates every referenced sub-configuration against the module
    /// preconditions before any computation starts.
    pub fn validate(&self) -> anyhow::Result<()> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("missing [grid]"))?
            .build()?;
        if let Some(t) = &self.time {
            if !(t.dt > 0.0) || !(t.horizon > 0.0) || t.dt > t.horizon {
                anyhow::bail!("need 0 < dt <= horizon");
            }
        }
        if let Some(mc) = &self.mc {
            if mc.paths == 0 {
                anyhow::bail!("mc.paths must be positive");
            }
        }
        if let Some(n) = &self.noise {
            let kind = n.kind()?;
            let channels = n.resolve_channels(grid.nv);
            skelab::noise::make_basis(&grid, channels, kind)?;
        }
        if let Some(b) = &self.besov {
            let theta = skelab::besov::AnisotropyWeights::default();
            let j = if b.j_max == 0 {
                skelab::besov::max_safe_level(&grid, theta)
            } else {
                b.j_max
            };
            skelab::besov::build_partition(&grid, theta, j)?;
            if !(b.p >= 1.0) {
                anyhow::bail!("besov.p must be >= 1");
            }
        }
        if let Some(f) = &self.filter {
            if f.tilde_sigma.abs() < 1e-9 || f.hat_sigma.abs() < 1e-9 {
                anyhow::bail!("tilde_sigma and hat_sigma must be nonsingular");
            }
            if f.particles < 1000 {
                anyhow::bail!("filter.particles must be >= 1000");
            }
        }
        Ok(())
    }
}

fn grid(lx: f64, lv: f64, nx: usize, nv: usize) -> Option<GridCfg> {
    Some(GridCfg { lx, lv, nx, nv })
}

fn time(dt: f64, horizon: f64) -> Option<TimeCfg> {
    Some(TimeCfg { dt, horizon })
}

fn mc(paths: usize, snapshot_stride: usize) -> Option<McCfg> {
    Some(McCfg {
        paths,
        snapshot_stride,
    })
}

fn trig(channels: usize) -> Option<NoiseCfg> {
    Some(NoiseCfg {
        basis: "trigonometric".into(),
        channels,
    })
}

/// Default configuration per experiment; the catalog's source of truth.
pub fn default_config(experiment: &str) -> Option<ExperimentConfig> {
    let base = ExperimentConfig {
        version: 1,
        experiment: experiment.to_string(),
        seed: 42,
        output_dir: None,
        grid: None,
        time: None,
        mc: None,
        noise: None,
        besov: None,
        filter: None,
    };
    let pi = std::f64::consts::PI;
    Some(match experiment {
        "semigroup-identities" => ExperimentConfig {
            grid: grid(8.0, 8.0, 256, 256),
            ..base
        },
        "besov-estimators" => ExperimentConfig {
            grid: grid(pi / 256.0, 2.0 * pi, 2048, 256),
            besov: Some(BesovCfg {
                j_max: 5,
                s: 0.5,
                p: 2.0,
            }),
            noise: trig(0),
            ..base
        },
        "noise-covariance" => ExperimentConfig {
            grid: grid(pi / 256.0, 2.0 * pi, 2048, 256),
            time: time(1.0 / 16.0, 1.0),
            mc: mc(10_000, 1),
            noise: trig(0),
            besov: Some(BesovCfg {
                j_max: 5,
                s: -0.5,
                p: 2.0,
            }),
            ..base
        },
        "model-ske-moments" => ExperimentConfig {
            grid: grid(8.0, 8.0, 64, 64),
            time: time(2.5e-3, 0.25),
            mc: mc(512, 16),
            noise: trig(0),
            ..base
        },
        "holder-exponents" => ExperimentConfig {
            grid: grid(4.0, 8.0, 256, 256),
            time: time(2.5e-4, 0.15),
            mc: mc(64, 64),
            noise: trig(128),
            ..base
        },
        "l1-contraction" => ExperimentConfig {
            grid: grid(8.0, 8.0, 64, 128),
            time: time(1e-3, 0.25),
            mc: mc(256, 50),
            noise: trig(16),
            ..base
        },
        "superlinear-pam" => ExperimentConfig {
            grid: grid(8.0, 8.0, 64, 64),
            time: time(5e-4, 0.15),
            mc: mc(4, 1),
            noise: trig(16),
            ..base
        },
        "filter-langevin" => ExperimentConfig {
            grid: grid(8.0, 8.0, 128, 128),
            time: time(1e-3, 0.5),
            filter: Some(FilterCfg {
                tilde_b_scale: 0.0,
                tilde_sigma: 1.0,
                sigma: -1.0,
                hat_b_scale: 0.0,
                hat_sigma: 1.0,
                particles: 100_000,
            }),
            ..base
        },
        "filter-general" => ExperimentConfig {
            grid: grid(8.0, 8.0, 64, 64),
            time: time(1e-3, 0.125),
            mc: mc(64, 1),
            filter: Some(FilterCfg {
                tilde_b_scale: -0.5,
                tilde_sigma: 1.0,
                sigma: 0.3,
                hat_b_scale: 0.8,
                hat_sigma: 1.0,
                particles: 20_000,
            }),
            ..base
        },
        "ito-wentzell" => ExperimentConfig {
            grid: grid(8.0, 8.0, 64, 64),
            time: time(1e-2, 0.25),
            mc: mc(16, 1),
            ..base
        },
        _ => return None,
    })
}

/// Experiment descriptor for the catalog listing.
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub expected_runtime: &'static str,
    /// Acceptance criteria exercised by this experiment.
    pub criteria: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "semigroup-identities",
            description: "kernel normalization/scaling/covariance, semigroup law, generator order",
            expected_runtime: "~20 s",
            criteria: "1, 2",
        },
        CatalogEntry {
            name: "besov-estimators",
            description: "partition reconstruction, Bernstein constants, estimator equivalence, comb-data block slopes",
            expected_runtime: "~60 s",
            criteria: "3",
        },
        CatalogEntry {
            name: "noise-covariance",
            description: "Brownian-sheet covariance, Walsh-sum consistency, lifting block estimate",
            expected_runtime: "~60 s",
            criteria: "4",
        },
        CatalogEntry {
            name: "model-ske-moments",
            description: "additive-noise variance, Duhamel mean field, weak-form martingale, time-regularity slope",
            expected_runtime: "~90 s",
            criteria: "5",
        },
        CatalogEntry {
            name: "holder-exponents",
            description: "pathwise v/x/t regularity exponents of the rough-data multiplicative-noise solution",
            expected_runtime: "~3 min",
            criteria: "8",
        },
        CatalogEntry {
            name: "l1-contraction",
            description: "positive-part L1 bound and positivity preservation under multiplicative noise",
            expected_runtime: "~2 min",
            criteria: "7",
        },
        CatalogEntry {
            name: "superlinear-pam",
            description: "truncation-level patching consistency and stopping report",
            expected_runtime: "~20 s",
            criteria: "9",
        },
        CatalogEntry {
            name: "filter-langevin",
            description: "grid filter vs particle filter on the Langevin model, pathwise mass identities",
            expected_runtime: "~60 s",
            criteria: "10",
        },
        CatalogEntry {
            name: "filter-general",
            description: "mass/stochastic-exponential identity, Kushner residual refinement, Bayes consistency",
            expected_runtime: "~3 min",
            criteria: "10",
        },
        CatalogEntry {
            name: "ito-wentzell",
            description: "coordinate-shift reduction of constant-coefficient gradient noise, weak-form residual order",
            expected_runtime: "~60 s",
            criteria: "6",
        },
    ]
}
