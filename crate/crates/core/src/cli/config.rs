//! Run configuration: one TOML file with nested tables. Unset keys resolve to
//! defaults, and each resolved default is logged.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{C2stConfig, DEFAULT_COVERAGE_GRID};
use crate::error::{Error, Result};
use crate::neural::TrainConfig;
use crate::posterior::DEFAULT_BINS;
use crate::prior::{Component, FactorizablePrior};
use crate::simulator::{from_spec, Simulator};
use crate::truncation::TmnreConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Tmnre,
    Mnre,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub components: Vec<Component>,
}

/// Either an explicit observation or the noiseless output at `theta_o`. With
/// neither set the simulator's canonical `θ_o` is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_o: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_o: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorSpec {
    /// Bins per axis of the 1-d histograms.
    pub bins: usize,
    pub bins_2d: usize,
    /// Truncated-prior draws weighted by the ratio for histograms.
    pub histogram_samples: usize,
    /// Rejection samples per marginal.
    pub samples: usize,
    /// Grid points per axis used to find the rejection envelope.
    pub envelope_grid: usize,
    pub envelope_grid_2d: usize,
}

impl Default for PosteriorSpec {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            bins_2d: 50,
            histogram_samples: 100_000,
            samples: 10_000,
            envelope_grid: 1000,
            envelope_grid_2d: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub coverage_samples: usize,
    pub coverage_grid: usize,
    pub levels: Vec<f64>,
    pub reference_samples: usize,
    pub boundary_level: f64,
    pub kl_bins: usize,
    pub c2st: C2stConfig,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            coverage_samples: 10_000,
            coverage_grid: DEFAULT_COVERAGE_GRID,
            levels: (1..20).map(|i| i as f64 / 20.0).collect(),
            reference_samples: 10_000,
            boundary_level: 0.95,
            kl_bins: DEFAULT_BINS,
            c2st: C2stConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub algorithm: Algorithm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub simulator: SimulatorSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    pub observation: ObservationSpec,
    /// For `algorithm = "mnre"`, `budget` prior draws are simulated once and
    /// `final_marginals` are trained on them.
    pub tmnre: TmnreConfig,
    pub train: TrainConfig,
    pub posterior: PosteriorSpec,
    pub diagnostics: DiagnosticsSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            algorithm: Algorithm::Tmnre,
            out: None,
            simulator: SimulatorSpec::default(),
            prior: None,
            observation: ObservationSpec::default(),
            tmnre: TmnreConfig::default(),
            train: TrainConfig::default(),
            posterior: PosteriorSpec::default(),
            diagnostics: DiagnosticsSpec::default(),
        }
    }
}

/// A validated configuration with its simulator, prior and observation built.
pub struct Resolved {
    pub config: RunConfig,
    pub simulator: Box<dyn Simulator>,
    pub prior: FactorizablePrior,
    pub x_o: Vec<f64>,
}

impl std::fmt::Debug for Resolved {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Resolved")
            .field("config", &self.config)
            .field("simulator", &self.simulator.name())
            .field("x_o", &self.x_o)
            .finish()
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let cfg: RunConfig = RunConfig::deserialize(raw.clone()).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let full = toml::Table::try_from(&cfg).map_err(|e| Error::Config(vec![e.to_string()]))?;
        log_defaults(&full, &raw, "");
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Checks every field and builds the simulator, prior and observation.
    /// All problems are reported together.
    pub fn resolve(self) -> Result<Resolved> {
        let mut errs = Vec::new();
        if self.seed > i64::MAX as u64 {
            errs.push(format!("seed must be at most {}", i64::MAX));
        }
        errs.extend(self.tmnre.validate().into_iter().map(|e| format!("tmnre.{e}")));
        errs.extend(self.train.validate().into_iter().map(|e| format!("train.{e}")));
        let p = &self.posterior;
        for (name, v, min) in [
            ("bins", p.bins, 1),
            ("bins_2d", p.bins_2d, 1),
            ("histogram_samples", p.histogram_samples, 1),
            ("samples", p.samples, 1),
            ("envelope_grid", p.envelope_grid, 2),
            ("envelope_grid_2d", p.envelope_grid_2d, 2),
        ] {
            if v < min {
                errs.push(format!("posterior.{name} must be at least {min}, got {v}"));
            }
        }
        let d = &self.diagnostics;
        if d.coverage_samples < 100 {
            errs.push(format!("diagnostics.coverage_samples must be at least 100, got {}", d.coverage_samples));
        }
        if d.coverage_grid < 2 {
            errs.push("diagnostics.coverage_grid must be at least 2".into());
        }
        if d.levels.is_empty() || d.levels.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            errs.push("diagnostics.levels must be a non-empty list of values in (0, 1)".into());
        }
        if d.reference_samples < crate::diagnostics::C2ST_MIN_SAMPLES {
            errs.push(format!(
                "diagnostics.reference_samples must be at least {}",
                crate::diagnostics::C2ST_MIN_SAMPLES
            ));
        }
        if !(d.boundary_level > 0.0 && d.boundary_level <= 1.0) {
            errs.push(format!("diagnostics.boundary_level must lie in (0, 1], got {}", d.boundary_level));
        }
        if d.kl_bins == 0 {
            errs.push("diagnostics.kl_bins must be positive".into());
        }
        if d.c2st.folds < 2 || d.c2st.width_factor == 0 || d.c2st.batch_size == 0 || !(d.c2st.learning_rate > 0.0) {
            errs.push("diagnostics.c2st: folds ≥ 2, width_factor ≥ 1, batch_size ≥ 1 and learning_rate > 0 required".into());
        }

        let sim = if self.simulator.name.is_empty() {
            errs.push("simulator.name is required".into());
            None
        } else {
            match from_spec(&self.simulator.name, &self.simulator.params) {
                Ok(s) => Some(s),
                Err(Error::Config(e)) => {
                    errs.extend(e);
                    None
                }
                Err(e) => {
                    errs.push(e.to_string());
                    None
                }
            }
        };
        let prior = match (&self.prior, &sim) {
            (Some(spec), _) => match FactorizablePrior::new(spec.components.clone()) {
                Ok(p) => Some(p),
                Err(e) => {
                    errs.push(format!("prior: {e}"));
                    None
                }
            },
            (None, Some(s)) => Some(s.default_prior()),
            (None, None) => None,
        };
        let mut x_o = None;
        if let Some(s) = &sim {
            if let Some(p) = &prior {
                if p.dims() != s.param_dim() {
                    errs.push(format!(
                        "prior has {} components but simulator `{}` takes {} parameters",
                        p.dims(),
                        s.name(),
                        s.param_dim()
                    ));
                }
            }
            let obs = &self.observation;
            match (&obs.x_o, &obs.theta_o) {
                (Some(_), Some(_)) => errs.push("observation: set either x_o or theta_o, not both".into()),
                (Some(x), None) => {
                    if x.len() != s.data_dim() {
                        errs.push(format!("observation.x_o has {} values, simulator emits {}", x.len(), s.data_dim()));
                    } else {
                        x_o = Some(x.clone());
                    }
                }
                (None, theta) => {
                    let theta = theta.clone().or_else(|| s.default_theta_o());
                    match theta {
                        None => errs.push("observation: simulator has no default θ_o; set x_o or theta_o".into()),
                        Some(t) if t.len() != s.param_dim() => {
                            errs.push(format!("observation.theta_o has {} values, simulator takes {}", t.len(), s.param_dim()))
                        }
                        Some(t) => match s.noiseless(&t) {
                            Some(x) => x_o = Some(x),
                            None => errs.push(format!("simulator `{}` has no noiseless output; set x_o", s.name())),
                        },
                    }
                }
            }
            if let Some(x) = &x_o {
                if x.iter().any(|v| !v.is_finite()) {
                    errs.push("observation: x_o must be finite".into());
                }
            }
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        Ok(Resolved {
            config: self,
            simulator: sim.expect("checked above"),
            prior: prior.expect("checked above"),
            x_o: x_o.expect("checked above"),
        })
    }
}

/// Logs every key present in `full` but absent from `raw`.
fn log_defaults(full: &toml::Table, raw: &toml::Table, prefix: &str) {
    for (k, v) in full {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, raw.get(k)) {
            (toml::Value::Table(sub), Some(toml::Value::Table(rsub))) => log_defaults(sub, rsub, &path),
            (toml::Value::Table(sub), None) => log_defaults(sub, &toml::Table::new(), &path),
            (_, None) => log::info!("{path} not set; using default {v}"),
            _ => {}
        }
    }
}
