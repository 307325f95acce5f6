//! Experiment configuration file (TOML) and its translation into a core
//! [`ExperimentConfig`].

use std::path::Path;

use doa_core::evaluation::{ExperimentConfig, Method, OracleMode, Sweep};
use doa_core::{GridSpec, HeuristicStrategy, RandomSeed, SourceScenario, UlaGeometry};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The bundled default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub array: ArraySection,
    pub sources: SourcesSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub grid: GridSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristic: Option<HeuristicSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub elements: usize,
    #[serde(default = "default_spacing")]
    pub spacing_wavelengths: f64,
}

fn default_spacing() -> f64 {
    UlaGeometry::DEFAULT_SPACING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSection {
    pub doas_deg: Vec<f64>,
    pub snr_db: f64,
    pub snapshots: usize,
    #[serde(default = "default_noise_power")]
    pub noise_power: f64,
}

fn default_noise_power() -> f64 {
    1.0
}

/// Either an explicit list or an inclusive `{ start, stop, step }` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    List(Vec<T>),
    Range { start: T, stop: T, step: T },
}

impl Axis<f64> {
    fn values(&self, name: &str) -> Result<Vec<f64>, CliError> {
        match self {
            Axis::List(v) => Ok(v.clone()),
            &Axis::Range { start, stop, step } => {
                if !start.is_finite()
                    || !stop.is_finite()
                    || step.is_nan()
                    || step <= 0.0
                    || stop < start
                {
                    return Err(CliError::Config(format!(
                        "sweep.{name}: range needs finite start <= stop and step > 0"
                    )));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                Ok((0..count)
                    .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                    .collect())
            }
        }
    }
}

impl Axis<usize> {
    fn values(&self, name: &str) -> Result<Vec<usize>, CliError> {
        match self {
            Axis::List(v) => Ok(v.clone()),
            &Axis::Range { start, stop, step } => {
                if step == 0 || stop < start {
                    return Err(CliError::Config(format!(
                        "sweep.{name}: range needs start <= stop and step > 0"
                    )));
                }
                Ok((start..=stop).step_by(step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Axis<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Axis<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            start_deg: g.start_deg,
            stop_deg: g.stop_deg,
            step_deg: g.step_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<String>,
    #[serde(default)]
    pub oracle_mode: OracleMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicSection {
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Snr,
    Snapshots,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(config_err)
    }

    /// Reads `path`, or the bundled default when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Self::parse(DEFAULT_CONFIG),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| match e {
                    CliError::Config(msg) => CliError::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn geometry(&self) -> Result<UlaGeometry, CliError> {
        UlaGeometry::new(self.array.elements, self.array.spacing_wavelengths).map_err(config_err)
    }

    pub fn scenario(&self) -> Result<SourceScenario, CliError> {
        let s = SourceScenario::new(self.sources.doas_deg.clone(), self.sources.snr_db)
            .and_then(|s| s.with_noise_power(self.sources.noise_power))
            .map_err(config_err)?;
        s.validate_for(&self.geometry()?).map_err(config_err)?;
        Ok(s)
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.grid.start_deg, self.grid.stop_deg, self.grid.step_deg)
            .map_err(config_err)
    }

    pub fn methods(&self) -> Result<Vec<Method>, CliError> {
        let mut out = Vec::new();
        for name in &self.run.methods {
            let m = Method::from_name(name).map_err(config_err)?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        Ok(out)
    }

    pub fn heuristic(&self) -> Result<Option<HeuristicStrategy>, CliError> {
        self.heuristic
            .as_ref()
            .map(|h| HeuristicStrategy::from_name(&h.strategy, h.k).map_err(config_err))
            .transpose()
    }

    pub fn experiment(&self, kind: SweepKind) -> Result<ExperimentConfig, CliError> {
        let sweep = match kind {
            SweepKind::Snr => Sweep::SnrDb(
                self.sweep
                    .snr_db
                    .as_ref()
                    .ok_or_else(|| {
                        CliError::Config("sweep.snr_db is required for an SNR sweep".into())
                    })?
                    .values("snr_db")?,
            ),
            SweepKind::Snapshots => Sweep::Snapshots(
                self.sweep
                    .snapshots
                    .as_ref()
                    .ok_or_else(|| {
                        CliError::Config("sweep.snapshots is required for a snapshot sweep".into())
                    })?
                    .values("snapshots")?,
            ),
        };
        let config = ExperimentConfig {
            geometry: self.geometry()?,
            scenario: self.scenario()?,
            num_snapshots: self.sources.snapshots,
            sweep,
            num_trials: self.run.trials,
            grid: self.grid()?,
            methods: self.methods()?,
            heuristic: self.heuristic()?,
            oracle_mode: self.run.oracle_mode,
            seed: RandomSeed(self.run.seed),
            parallelism: self.run.parallelism,
        };
        config.validate().map_err(config_err)?;
        Ok(config)
    }
}
