//! Pipeline configuration. Every field has a default, so `{}` is a valid
//! config file and partial files only override what they name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinflow_core::filters::{FilterConfig, FilterKind};
use spinflow_core::logo::ExtractionConfig;
use spinflow_core::sim::{SimScene, SuiteKind, SuiteParams};
use spinflow_core::spin::{Mode, SpinConfig};
use spinflow_core::tracker::TrackerConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root of all randomness: simulator phase and noise, bench repetitions.
    pub seed: u64,
    /// Bench worker threads; `None` uses all cores.
    pub workers: Option<usize>,
    /// Event file for `run`; when absent `run` simulates `simulator.scenario`.
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub filter: FilterStage,
    pub tracker: TrackerStage,
    pub extraction: ExtractionConfig,
    pub estimator: EstimatorStage,
    pub simulator: SimulatorStage,
    pub bench: BenchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            input: None,
            output_dir: PathBuf::from("out"),
            filter: FilterStage::default(),
            tracker: TrackerStage::default(),
            extraction: ExtractionConfig::default(),
            estimator: EstimatorStage::default(),
            simulator: SimulatorStage::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterStage {
    /// `None` leaves the stream unfiltered in `run`.
    pub kind: Option<FilterKind>,
    pub threshold_us: u64,
}

impl Default for FilterStage {
    fn default() -> Self {
        Self {
            kind: None,
            threshold_us: FilterConfig::default().threshold_us,
        }
    }
}

impl FilterStage {
    pub fn filter_config(&self) -> Result<FilterConfig, CliError> {
        FilterConfig::new(self.threshold_us).ok_or_else(|| CliError::Config("filter.threshold_us must be positive".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrackerStage {
    #[serde(flatten)]
    pub config: TrackerConfig,
    /// Fixed ball `[x, y, r]` in pixels instead of running the tracker.
    pub static_ball: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorStage {
    pub mode: Mode,
    #[serde(flatten)]
    pub config: SpinConfig,
}

impl Default for EstimatorStage {
    fn default() -> Self {
        Self {
            mode: Mode::Refined,
            config: SpinConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorStage {
    /// Suite scene name such as `spinner/ball-1/topspin/50rps`.
    pub scenario: Option<String>,
    /// Explicit scene; takes precedence over `scenario`.
    pub scene: Option<SimScene>,
    /// Suite-wide settings used when building `scenario`.
    pub suite: SuiteParams,
}

impl Default for SimulatorStage {
    fn default() -> Self {
        Self {
            scenario: Some("spinner/ball-1/topspin/50rps".into()),
            scene: None,
            suite: SuiteParams::default(),
        }
    }
}

/// One benchmark column: how much of each recording the estimator sees and
/// in which mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub window_us: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub suite: SuiteKind,
    pub reps: usize,
    pub observations: Vec<Observation>,
    pub params: SuiteParams,
    /// Spinner balls do not move, so their rims produce no events to track;
    /// use the rendered position instead.
    pub spinner_static_track: bool,
    /// Include wall-clock timing in the report. Off by default so repeated
    /// runs write identical files.
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            suite: SuiteKind::Spinner,
            reps: 1,
            observations: vec![
                Observation {
                    window_us: 10_000,
                    mode: Mode::Fast,
                },
                Observation {
                    window_us: 100_000,
                    mode: Mode::Refined,
                },
            ],
            params: SuiteParams::default(),
            spinner_static_track: true,
            timing: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
