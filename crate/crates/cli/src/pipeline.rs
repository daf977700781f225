//! Stage functions shared by the subcommands, and the end-to-end `run`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Serialize;
use spinflow_core::events::{read_events, write_events, EventStream, Format};
use spinflow_core::filters;
use spinflow_core::logo::{extract_logo_events, write_logo, LogoStream};
use spinflow_core::sim::{render_scene, scenario_by_name, GroundTruth, SimScene};
use spinflow_core::spin::{axis_error_deg, estimate_spin, SpinReport};
use spinflow_core::tracker::{read_track_csv, static_track, track, write_track_csv, TrackRecord};

use crate::config::{EstimatorStage, PipelineConfig, SimulatorStage, TrackerStage};
use crate::error::{CliError, StageError};

pub fn load_events(path: &Path) -> Result<EventStream, StageError> {
    read_events(path, Format::from_path(path)).map_err(|e| StageError::events(path, e))
}

pub fn save_events(stream: &EventStream, path: &Path) -> Result<(), StageError> {
    write_events(stream, path, Format::from_path(path)).map_err(|e| StageError::events(path, e))
}

pub fn load_track(path: &Path) -> Result<Vec<TrackRecord>, StageError> {
    let file = File::open(path).map_err(|e| StageError::io(path, e))?;
    read_track_csv(BufReader::new(file)).map_err(|e| StageError::io(path, e))
}

pub fn save_track(records: &[TrackRecord], path: &Path) -> Result<(), StageError> {
    write_with(path, |out| write_track_csv(records, out))
}

pub fn save_logo(logo: &LogoStream, path: &Path) -> Result<(), StageError> {
    write_logo(logo, path, Format::from_path(path)).map_err(|e| StageError::events(path, e))
}

pub fn save_truth(truth: &GroundTruth, path: &Path) -> Result<(), StageError> {
    write_with(path, |out| truth.write_csv(out))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), StageError> {
    write_with(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)
    })
}

pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), StageError> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| StageError::io(path, e))?);
    f(&mut out).and_then(|_| out.flush()).map_err(|e| StageError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), StageError> {
    fs::create_dir_all(dir).map_err(|e| StageError::io(dir, e))
}

/// The scene the simulator stage describes, with `seed` as the suite seed.
pub fn resolve_scene(sim: &SimulatorStage, seed: u64) -> Result<(String, SimScene), CliError> {
    if let Some(scene) = &sim.scene {
        let mut scene = scene.clone();
        scene.seed = seed;
        return Ok(("custom".into(), scene));
    }
    let name = sim.scenario.as_deref().ok_or_else(|| CliError::Config("simulator: no scenario or scene given".into()))?;
    let params = spinflow_core::sim::SuiteParams { seed, ..sim.suite.clone() };
    let named = scenario_by_name(name, &params).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((named.name, named.scene))
}

pub fn simulate(scene: &SimScene) -> Result<(EventStream, GroundTruth), StageError> {
    Ok(render_scene(scene)?)
}

/// Tracks the ball, or lays down a constant track when a static ball is
/// configured.
pub fn build_track(stream: &EventStream, stage: &TrackerStage) -> Result<Vec<TrackRecord>, StageError> {
    if let Some([x, y, r]) = stage.static_ball {
        let (t0, t1) = stream.time_span().unwrap_or((0, 0));
        return Ok(static_track(x, y, r, t0, t1, &stage.config).iter().map(TrackRecord::from).collect());
    }
    Ok(track(stream, &stage.config)?.iter().map(TrackRecord::from).collect())
}

pub fn estimate(logo: &LogoStream, track: &[TrackRecord], stage: &EstimatorStage) -> Result<SpinReport, StageError> {
    Ok(estimate_spin(&logo.events, track, &stage.config, stage.mode)?)
}

/// Spin against simulator ground truth.
#[derive(Debug, Clone, Serialize)]
pub struct TruthComparison {
    pub omega: [f64; 3],
    pub rps: f64,
    pub magnitude_error_rps: f64,
    pub axis_error_deg: f64,
}

impl TruthComparison {
    pub fn new(truth: [f64; 3], report: &SpinReport) -> Self {
        let w = Vector3::from(truth);
        let e = report.estimate.omega_vec();
        Self {
            omega: truth,
            rps: w.norm() / std::f64::consts::TAU,
            magnitude_error_rps: (e.norm() - w.norm()).abs() / std::f64::consts::TAU,
            axis_error_deg: axis_error_deg(&e, &w),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpinOutput {
    pub scenario: Option<String>,
    #[serde(flatten)]
    pub report: SpinReport,
    pub truth: Option<TruthComparison>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
    pub spin: SpinOutput,
}

/// Runs filter (optional) → track → extract → estimate, simulating the input
/// first when no event file is configured. Intermediate files are written
/// before the estimate so a failed estimate still leaves them behind.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunArtifacts, CliError> {
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let mut files = Vec::new();
    let mut tracker = cfg.tracker.clone();
    let (scenario, stream, truth) = match &cfg.input {
        Some(path) => (None, load_events(path)?, None),
        None => {
            let (name, scene) = resolve_scene(&cfg.simulator, cfg.seed)?;
            let (stream, truth) = simulate(&scene)?;
            let p = dir.join("events.bin");
            save_events(&stream, &p)?;
            files.push(p);
            let p = dir.join("truth.csv");
            save_truth(&truth, &p)?;
            files.push(p);
            // A ball that does not move leaves no rim events to track.
            if tracker.static_ball.is_none() && scene.ball.velocity_m_s == [0.0; 3] {
                let (x, y, r) = scene.project_at(0.0);
                tracker.static_ball = Some([x, y, r]);
            }
            (Some(name), stream, Some(scene.truth_at(0).omega))
        }
    };
    let stream = match cfg.filter.kind {
        Some(kind) => filters::apply(kind, &stream, cfg.filter.filter_config()?),
        None => stream,
    };
    let track = build_track(&stream, &tracker)?;
    let p = dir.join("track.csv");
    save_track(&track, &p)?;
    files.push(p);
    let logo = extract_logo_events(&stream, &track, &cfg.extraction);
    let p = dir.join("logo.bin");
    save_logo(&logo, &p)?;
    files.push(p);
    let report = estimate(&logo, &track, &cfg.estimator)?;
    let truth = truth.map(|w| TruthComparison::new(w, &report));
    let spin = SpinOutput { scenario, report, truth };
    let p = dir.join("spin.json");
    save_json(&spin, &p)?;
    files.push(p);
    Ok(RunArtifacts { files, spin })
}
