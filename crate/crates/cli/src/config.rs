//! Run specification: one TOML file, environment overrides, command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tfrc_core::ctmc::{SolveOptions, SolverChoice};
use tfrc_core::des::SimOptions;
use tfrc_core::model::{ModelConfig, ModelError, MultiClass, WithdrawalSchedule, DEFAULT_STATE_LIMIT};
use tfrc_core::system_chain::{AnalysisOptions, MetricsOptions};

/// Environment variables `TFRC_<SECTION>_<KEY>` override `[section] key`.
pub const ENV_PREFIX: &str = "TFRC_";

pub const SECTIONS: [&str; 8] = ["model", "schedule", "solver", "metrics", "simulation", "compare", "sweep", "output"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("environment variable {var}: {reason}")]
    Env { var: String, reason: String },
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

/// Everything a command needs, fully resolved.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub model: ModelConfig,
    pub schedule: ScheduleSection,
    pub solver: SolverSection,
    pub metrics: MetricsSection,
    pub simulation: SimulationSection,
    pub compare: CompareSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

/// Optional per-class withdrawal lists; classes left out follow `withdraw_step`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_i: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_ii: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_iii: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_iv: Option<Vec<u32>>,
}

impl ScheduleSection {
    fn lists(&self) -> [&Option<Vec<u32>>; 4] {
        [&self.class_i, &self.class_ii, &self.class_iii, &self.class_iv]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: SolverChoice,
    pub tol: f64,
    pub max_iterations: usize,
    pub direct_limit: usize,
    pub auto_direct_max: usize,
    pub state_limit: usize,
    /// Stair counts solved by `solve` and `sweep`; empty means `model.stairs`.
    pub stairs: Vec<u32>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolveOptions::default();
        Self {
            method: s.method,
            tol: s.tol,
            max_iterations: s.max_iterations,
            direct_limit: s.direct_limit,
            auto_direct_max: s.auto_direct_max,
            state_limit: DEFAULT_STATE_LIMIT,
            stairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub include_cap_in_dropping: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let s = SimOptions::default();
        Self { horizon: s.horizon, warmup_fraction: s.warmup_fraction, seed: s.seed, replications: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Stair counts of the analytic column; the largest is checked against the CI.
    pub stairs: Vec<u32>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { stairs: vec![1, 2, 4, 8, 16] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// A numeric `[model]` key.
    pub field: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// JSON result file; stdout when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Flat long-form CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Event trace of replication 0 (`simulate` only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

impl RunSpec {
    /// Reads `path` (if any), then applies `TFRC_*` overrides from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse { origin: p.display().to_string(), message: e.to_string() })?
            }
            None => toml::Table::new(),
        };
        apply_env(&mut table, env)?;
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse { origin: "after overrides".into(), message: e.message().to_string() })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { origin: "text".into(), message: e.message().to_string() })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run spec serializes to TOML")
    }

    /// Withdrawal schedule for `model`, with any per-class overrides.
    pub fn schedule_for(&self, model: &ModelConfig) -> Result<WithdrawalSchedule, ModelError> {
        let default = WithdrawalSchedule::from_config(model);
        if self.schedule.lists().iter().all(|l| l.is_none()) {
            return Ok(default);
        }
        let lists = MultiClass::ALL.map(|class| {
            self.schedule.lists()[class.index()].clone().unwrap_or_else(|| default.amounts(class).to_vec())
        });
        WithdrawalSchedule::from_lists(model, lists)
    }

    pub fn model_with_stairs(&self, stairs: u32) -> ModelConfig {
        ModelConfig { stairs, ..self.model.clone() }
    }

    pub fn solve_stairs(&self) -> Vec<u32> {
        if self.solver.stairs.is_empty() {
            vec![self.model.stairs]
        } else {
            self.solver.stairs.clone()
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            method: self.solver.method,
            tol: self.solver.tol,
            max_iterations: self.solver.max_iterations,
            direct_limit: self.solver.direct_limit,
            auto_direct_max: self.solver.auto_direct_max,
        }
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            solver: self.solve_options(),
            metrics: self.metrics_options(),
            state_limit: self.solver.state_limit,
        }
    }

    pub fn metrics_options(&self) -> MetricsOptions {
        MetricsOptions { include_cap_in_dropping: self.metrics.include_cap_in_dropping }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            horizon: self.simulation.horizon,
            warmup_fraction: self.simulation.warmup_fraction,
            seed: self.simulation.seed,
            ..SimOptions::default()
        }
    }

    /// Checks everything the commands rely on and returns the resolved schedule.
    pub fn validate(&self) -> Result<WithdrawalSchedule, ConfigError> {
        self.model.validate()?;
        let sched = self.schedule_for(&self.model)?;
        let s = &self.solver;
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return Err(invalid("solver.tol", format!("must be positive, got {}", s.tol)));
        }
        if s.max_iterations == 0 {
            return Err(invalid("solver.max_iterations", "must be positive"));
        }
        for (field, list) in [("solver.stairs", &s.stairs), ("compare.stairs", &self.compare.stairs)] {
            if let Some(&m) = list.iter().find(|&&m| m == 0) {
                return Err(invalid(field, format!("stair counts must be at least 1, got {m}")));
            }
        }
        if self.compare.stairs.is_empty() {
            return Err(invalid("compare.stairs", "needs at least one stair count"));
        }
        let sim = &self.simulation;
        if !(sim.horizon.is_finite() && sim.horizon > 0.0) {
            return Err(invalid("simulation.horizon", format!("must be positive, got {}", sim.horizon)));
        }
        if !(0.0..1.0).contains(&sim.warmup_fraction) {
            return Err(invalid("simulation.warmup_fraction", format!("must lie in [0, 1), got {}", sim.warmup_fraction)));
        }
        if sim.replications < 2 {
            return Err(invalid("simulation.replications", format!("a confidence interval needs at least 2, got {}", sim.replications)));
        }
        Ok(sched)
    }

    /// Checks the sweep axis.
    pub fn validate_sweep(&self) -> Result<(), ConfigError> {
        if !ModelConfig::FIELDS.contains(&self.sweep.field.as_str()) {
            return Err(invalid(
                "sweep.field",
                format!("`{}` is not a numeric model field (one of {})", self.sweep.field, ModelConfig::FIELDS.join(", ")),
            ));
        }
        if let Some(v) = self.sweep.values.iter().find(|v| !v.is_finite()) {
            return Err(invalid("sweep.values", format!("{v} is not finite")));
        }
        Ok(())
    }
}

/// Parses an override the way a TOML value would be written, falling back to
/// a comma-separated array and then to a bare string.
fn env_value(raw: &str) -> toml::Value {
    for candidate in [raw.to_string(), format!("[{raw}]")] {
        if let Ok(mut t) = format!("v = {candidate}").parse::<toml::Table>() {
            return t.remove("v").expect("key was just parsed");
        }
    }
    toml::Value::String(raw.to_string())
}

fn apply_env(table: &mut toml::Table, env: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    for (var, raw) in env {
        let Some(rest) = var.strip_prefix(ENV_PREFIX) else { continue };
        let lower = rest.to_lowercase();
        let Some((section, key)) = SECTIONS
            .iter()
            .find_map(|s| lower.strip_prefix(s).and_then(|k| k.strip_prefix('_')).map(|k| (*s, k)))
        else {
            return Err(ConfigError::Env { var, reason: format!("no section matches (expected one of {})", SECTIONS.join(", ")) });
        };
        if key.is_empty() {
            return Err(ConfigError::Env { var, reason: "missing key".into() });
        }
        let entry = table.entry(section).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(sec) = entry else {
            return Err(ConfigError::Env { var, reason: format!("`{section}` is not a table in the config file") });
        };
        sec.insert(key.to_string(), env_value(&raw));
    }
    Ok(())
}
