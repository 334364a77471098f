//! Run configuration: one JSON document with a block per subcommand.

use std::path::{Path, PathBuf};

use qdimer::analysis::GridSpec;
use qdimer::floquet::{Vectorization, DEFAULT_CAP};
use qdimer::lindblad::IntegratorConfig;
use qdimer::meanfield::{DEFAULT_INITIAL, DIAGRAM_BINS};
use qdimer::model::ModelParams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "QDIMER_OUT";

/// Inclusive uniform grid `min, min + step, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Range {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if ![self.min, self.max, self.step].iter().all(|v| v.is_finite()) {
            return Err(CliError::Usage("grid bounds must be finite".into()));
        }
        if self.max < self.min {
            return Err(CliError::Usage(format!("empty grid: max {} < min {}", self.max, self.min)));
        }
        if self.max == self.min {
            return Ok(vec![self.min]);
        }
        if !(self.step > 0.0) {
            return Err(CliError::Usage(format!("grid step must be positive, got {}", self.step)));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| ((self.min + self.step * k as f64) * 1e12).round() / 1e12).collect())
    }
}

/// How the asymptotic state is obtained for Husimi projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMethod {
    /// Direct master-equation propagation from `|N><N|`.
    Lindblad,
    /// Stroboscopic average over quantum trajectories.
    Trajectories,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateEstimate {
    pub method: StateMethod,
    /// Lindblad propagation length in periods.
    pub periods: usize,
    pub trajectories: usize,
    pub relax_periods: usize,
    pub measure_periods: usize,
}

impl Default for StateEstimate {
    fn default() -> Self {
        Self { method: StateMethod::Lindblad, periods: 100, trajectories: 16, relax_periods: 200, measure_periods: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanfieldSweep {
    pub u: Range,
    pub iterates: usize,
    pub bins: usize,
    pub transient_periods: usize,
    pub initial: (f64, f64),
}

impl Default for MeanfieldSweep {
    fn default() -> Self {
        Self {
            u: Range::new(0.0, 0.8, 0.004),
            iterates: 400,
            bins: DIAGRAM_BINS,
            transient_periods: 1000,
            initial: DEFAULT_INITIAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumBifurcation {
    pub u: Range,
    pub particles: usize,
    pub transient_periods: usize,
    pub periods: usize,
}

impl Default for QuantumBifurcation {
    fn default() -> Self {
        Self { u: Range::new(0.0, 0.3, 0.01), particles: 100, transient_periods: 100, periods: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Husimi {
    pub grid: GridSpec,
    pub state: StateEstimate,
    /// Mean-field stroboscopic points to export alongside; 0 disables.
    pub overlay_iterates: usize,
}

impl Default for Husimi {
    fn default() -> Self {
        Self { grid: GridSpec::default(), state: StateEstimate::default(), overlay_iterates: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Trajectories {
    /// Interaction values; empty means the model's `U`.
    pub u_values: Vec<f64>,
    pub trajectories: usize,
    pub relax_periods: usize,
    pub measure_periods: usize,
    pub histogram_bins: usize,
    pub omega_bins: usize,
}

impl Default for Trajectories {
    fn default() -> Self {
        Self {
            u_values: Vec::new(),
            trajectories: 16,
            relax_periods: 200,
            measure_periods: 200,
            histogram_bins: 50,
            omega_bins: qdimer::analysis::OMEGA_BINS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stacking {
    Column,
    Row,
}

impl From<Stacking> for Vectorization {
    fn from(s: Stacking) -> Self {
        match s {
            Stacking::Column => Vectorization::ColumnStacking,
            Stacking::Row => Vectorization::RowStacking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Floquet {
    /// Particle numbers for the gap table; empty skips it.
    pub n_list: Vec<usize>,
    /// Whether to export the full spectrum at the model's `N`.
    pub spectrum: bool,
    pub cap: usize,
    pub stacking: Stacking,
}

impl Default for Floquet {
    fn default() -> Self {
        Self { n_list: vec![10, 20, 30, 40, 50], spectrum: true, cap: DEFAULT_CAP, stacking: Stacking::Column }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BagelDiameter {
    pub u: Range,
    pub n_values: Vec<usize>,
    pub grid: GridSpec,
    pub state: StateEstimate,
}

impl Default for BagelDiameter {
    fn default() -> Self {
        Self {
            u: Range::new(0.08, 0.14, 0.01),
            n_values: vec![20, 50],
            grid: GridSpec::default(),
            state: StateEstimate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
    pub model: ModelParams<f64>,
    pub integrator: IntegratorConfig<f64>,
    pub meanfield_sweep: MeanfieldSweep,
    pub quantum_bifurcation: QuantumBifurcation,
    pub husimi: Husimi,
    pub trajectories: Trajectories,
    pub floquet: Floquet,
    pub bagel_diameter: BagelDiameter,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelParams::reference(0.1125, 50);
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 2024,
            workers: 1,
            out: PathBuf::from("out"),
            model,
            integrator: IntegratorConfig::reference(model.period),
            meanfield_sweep: MeanfieldSweep::default(),
            quantum_bifurcation: QuantumBifurcation::default(),
            husimi: Husimi::default(),
            trajectories: Trajectories::default(),
            floquet: Floquet::default(),
            bagel_diameter: BagelDiameter::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    /// Flags win over the file; `QDIMER_OUT` replaces the file's output
    /// directory when no `--out` is given.
    pub fn apply(&mut self, o: &Overrides, env_out: Option<PathBuf>) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(out) = o.out.clone().or(env_out) {
            self.out = out;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        self.model.validate()?;
        self.integrator.validate()?;
        Ok(())
    }
}
