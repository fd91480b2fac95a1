//! Project configuration.
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use epe_core::decomposition::{DecompositionConfig, Flow, InfiltrationModel, WarmupPolicy};
use epe_core::engine::Site;
use epe_core::estimation::FitOptions;
use epe_core::hvac::{Grid, HvacPlant};
use epe_core::residual_net::TrainConfig;
use epe_core::Interval;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::synth::Schedule;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}

/// Where the measured data comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum MeasuredSource {
    /// Simulate `real_building_file` under the weather file.
    Synthesize,
    File(PathBuf),
}

impl From<String> for MeasuredSource {
    fn from(s: String) -> Self {
        if s == "synthesize" { Self::Synthesize } else { Self::File(s.into()) }
    }
}

impl From<MeasuredSource> for String {
    fn from(m: MeasuredSource) -> String {
        match m {
            MeasuredSource::Synthesize => "synthesize".into(),
            MeasuredSource::File(p) => p.to_string_lossy().into_owned(),
        }
    }
}

impl fmt::Display for MeasuredSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from(self.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSettings {
    pub t_fixed1: f64,
    pub t_fixed2: f64,
    #[serde(default)]
    pub warmup: WarmupPolicy,
}

impl Default for DecompositionSettings {
    fn default() -> Self {
        Self { t_fixed1: 20.0, t_fixed2: 25.0, warmup: WarmupPolicy::PerRun }
    }
}

impl DecompositionSettings {
    pub fn for_window(&self, window: Interval) -> DecompositionConfig {
        DecompositionConfig { t_fixed1: self.t_fixed1, t_fixed2: self.t_fixed2, window, warmup: self.warmup }
    }
}

/// How Stage 2 calibrates the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Stage2Method {
    /// Scan the rated COP of a DX plant.
    Cop { grid: Grid },
    /// Boiler efficiency as a function of `p_blc` over quiet hours.
    BoilerRelation {
        p_blc_grid: Vec<f64>,
        /// Thresholds for the quiet-hour selection (W); `None` uses every hour.
        #[serde(default)]
        thresholds: Option<BTreeMap<Flow, f64>>,
        #[serde(default = "default_min_hours")]
        min_hours: i64,
    },
}

fn default_min_hours() -> i64 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvacSettings {
    /// Plant form assumed by the audit; its rated value is what Stage 2 estimates.
    pub plant: HvacPlant,
    /// Key of the metered plant input in the measured data.
    pub energy_channel: String,
    pub method: Stage2Method,
    /// Add the residual-net correction to the reconciled load.
    #[serde(default = "yes")]
    pub use_residual_net: bool,
}

fn yes() -> bool {
    true
}

/// Settings of the synthetic "real" building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSettings {
    /// Relative σ of the multiplicative Gaussian noise on loads and energy.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub schedule: Schedule,
    /// Plant that produces the metered energy channel.
    #[serde(default)]
    pub plant: Option<HvacPlant>,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self { noise: 0.0, schedule: Schedule::default(), plant: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    /// Audit model.
    pub building_file: PathBuf,
    #[serde(default)]
    pub real_building_file: Option<PathBuf>,
    pub weather_file: PathBuf,
    pub measured_data: MeasuredSource,
    /// Overrides the site of both building files (solar geometry).
    #[serde(default)]
    pub site: Option<Site>,
    pub stage1_window: Interval,
    #[serde(default)]
    pub stage2_window: Option<Interval>,
    /// Allow the two windows to overlap.
    #[serde(default)]
    pub shared_windows: bool,
    #[serde(default)]
    pub decomposition: DecompositionSettings,
    #[serde(default)]
    pub infiltration: Option<InfiltrationModel>,
    pub free_params: Vec<Flow>,
    #[serde(default)]
    pub active_tfs: Vec<Flow>,
    #[serde(default)]
    pub fit: FitOptions,
    /// `None` skips the residual network.
    #[serde(default)]
    pub residual_net: Option<TrainConfig>,
    #[serde(default)]
    pub hvac: Option<HvacSettings>,
    #[serde(default)]
    pub synthesis: SynthesisSettings,
    #[serde(default)]
    pub seed: u64,
}

impl ProjectConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.building_file);
        fix(&mut self.weather_file);
        if let Some(p) = self.real_building_file.as_mut() {
            fix(p);
        }
        if let MeasuredSource::File(p) = &mut self.measured_data {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.measured_data == MeasuredSource::Synthesize && self.real_building_file.is_none() {
            return bad("measured_data = \"synthesize\" requires real_building_file".into());
        }
        if let Some(w2) = &self.stage2_window {
            if !self.shared_windows && w2.overlaps(&self.stage1_window) {
                return bad(format!("stage windows {} and {w2} overlap; set shared_windows to allow it", self.stage1_window));
            }
        }
        if self.free_params.is_empty() && !self.active_tfs.is_empty() {
            return bad("active_tfs need a parameter fit; free_params is empty".into());
        }
        for f in &self.active_tfs {
            if !matches!(f, Flow::In | Flow::Sun) {
                return bad(format!("transfer functions are supported on q_in and q_sun, not {f}"));
            }
        }
        let mut seen = self.free_params.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.free_params.len() {
            return bad("free_params lists a flow twice".into());
        }
        if !(self.synthesis.noise >= 0.0) {
            return bad("synthesis.noise must be >= 0".into());
        }
        if self.hvac.is_some() && self.stage2_window.is_none() {
            return bad("hvac settings need a stage2_window".into());
        }
        self.decomposition.for_window(self.stage1_window).validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}
