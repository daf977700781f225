//! Scenario-suite benchmark: every scene × repetition is simulated, tracked,
//! extracted and estimated at each configured observation window.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use spinflow_core::logo::extract_logo_events;
use spinflow_core::sim::{render_scene, scenario_suite, NamedScene, SuiteKind, SuiteParams};
use spinflow_core::spin::{axis_error_deg, estimate_spin, Mode};
use spinflow_core::tracker::{static_track, track, TrackRecord};

use crate::config::{BenchConfig, EstimatorStage, Observation, PipelineConfig};
use crate::error::{CliError, StageError};
use crate::pipeline::{ensure_dir, save_json, write_with};

/// `None` is written as `"N/A"`.
fn na<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("N/A"),
    }
}

fn na_csv(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".into(), |x| format!("{x:.6}"))
}

/// One scene × repetition × observation window.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub scenario: String,
    pub kind: String,
    pub placement: Option<String>,
    pub velocity_setting: Option<u32>,
    pub rep: usize,
    pub seed: u64,
    pub window_us: u64,
    pub mode: Mode,
    pub true_rps: f64,
    pub true_omega: [f64; 3],
    pub success: bool,
    pub error: Option<String>,
    pub est_omega: Option<[f64; 3]>,
    pub est_rps: Option<f64>,
    pub magnitude_error_rps: Option<f64>,
    pub axis_error_deg: Option<f64>,
    pub events: usize,
    pub logo_events: usize,
    /// Tracked-centre error against ground truth (moving balls only), px.
    pub track_position_mae_px: Option<f64>,
    pub track_radius_mae_px: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    #[serde(serialize_with = "na")]
    pub mean: Option<f64>,
    #[serde(serialize_with = "na")]
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: None, std: None };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean: Some(mean),
            std: Some(var.sqrt()),
        }
    }
}

/// Aggregate over one group of trials. Errors are averaged over successful
/// trials only.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub successes: usize,
    #[serde(serialize_with = "na")]
    pub success_rate: Option<f64>,
    pub magnitude_mae_rps: Stat,
    /// Magnitude error relative to the true magnitude.
    pub magnitude_rel_mae: Stat,
    pub axis_mae_deg: Stat,
}

impl Summary {
    pub fn of<'a>(rows: impl IntoIterator<Item = &'a TrialRow>) -> Self {
        let rows: Vec<&TrialRow> = rows.into_iter().collect();
        let ok: Vec<&&TrialRow> = rows.iter().filter(|r| r.success).collect();
        let mag: Vec<f64> = ok.iter().filter_map(|r| r.magnitude_error_rps).collect();
        let rel: Vec<f64> = ok.iter().filter_map(|r| r.magnitude_error_rps.map(|e| e / r.true_rps)).collect();
        let axis: Vec<f64> = ok.iter().filter_map(|r| r.axis_error_deg).collect();
        Self {
            trials: rows.len(),
            successes: ok.len(),
            success_rate: (!rows.is_empty()).then(|| ok.len() as f64 / rows.len() as f64),
            magnitude_mae_rps: Stat::of(&mag),
            magnitude_rel_mae: Stat::of(&rel),
            axis_mae_deg: Stat::of(&axis),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Bin {
    pub window_us: u64,
    pub mode: Mode,
    pub kind: String,
    #[serde(serialize_with = "na")]
    pub true_rps: Option<f64>,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_time_s: f64,
    /// Tracking and extraction time summed over trials.
    pub processing_s: f64,
    pub estimation_s: f64,
    pub recording_s: f64,
    /// `processing_s / recording_s`.
    pub real_time_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackingSummary {
    pub position_mae_px: Stat,
    pub radius_mae_px: Stat,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub suite: SuiteKind,
    pub reps: usize,
    pub seed: u64,
    pub events_processed: u64,
    #[serde(flatten)]
    pub overall: Summary,
    pub by_window: Vec<Bin>,
    pub bins: Vec<Bin>,
    pub tracking: Option<TrackingSummary>,
    pub timing: Option<Timing>,
    pub scenarios: Vec<TrialRow>,
}

struct TrialOutput {
    rows: Vec<TrialRow>,
    events: usize,
    processing_s: f64,
    estimation_s: f64,
    recording_s: f64,
}

fn run_trial(ns: &NamedScene, rep: usize, seed: u64, bench: &BenchConfig, cfg: &PipelineConfig) -> TrialOutput {
    let truth_w = Vector3::from(ns.scene.ball.spin_rad_s);
    let row = |obs: &Observation| TrialRow {
        scenario: ns.name.clone(),
        kind: ns.kind.to_string(),
        placement: ns.placement.map(|p| p.to_string()),
        velocity_setting: ns.velocity_setting,
        rep,
        seed,
        window_us: obs.window_us,
        mode: obs.mode,
        true_rps: ns.rps,
        true_omega: ns.scene.ball.spin_rad_s,
        success: false,
        error: None,
        est_omega: None,
        est_rps: None,
        magnitude_error_rps: None,
        axis_error_deg: None,
        events: 0,
        logo_events: 0,
        track_position_mae_px: None,
        track_radius_mae_px: None,
    };
    let fail_all = |msg: String| TrialOutput {
        rows: bench
            .observations
            .iter()
            .map(|o| TrialRow {
                error: Some(msg.clone()),
                ..row(o)
            })
            .collect(),
        events: 0,
        processing_s: 0.0,
        estimation_s: 0.0,
        recording_s: ns.scene.duration_us as f64 * 1e-6,
    };
    let (stream, _) = match render_scene(&ns.scene) {
        Ok(r) => r,
        Err(e) => return fail_all(StageError::from(e).to_string()),
    };
    let t = Instant::now();
    let moving = ns.scene.ball.velocity_m_s != [0.0; 3];
    let tracked: Result<Vec<TrackRecord>, String> = if !moving && bench.spinner_static_track {
        let (x, y, r) = ns.scene.project_at(0.0);
        Ok(static_track(x, y, r, 0, ns.scene.duration_us, &cfg.tracker.config).iter().map(TrackRecord::from).collect())
    } else {
        track(&stream, &cfg.tracker.config)
            .map(|s| s.iter().map(TrackRecord::from).collect())
            .map_err(|e| StageError::from(e).to_string())
    };
    let track = match tracked {
        Ok(t) => t,
        Err(msg) => {
            let mut out = fail_all(msg);
            out.events = stream.len();
            out.processing_s = t.elapsed().as_secs_f64();
            return out;
        }
    };
    let logo = extract_logo_events(&stream, &track, &cfg.extraction);
    let processing_s = t.elapsed().as_secs_f64();
    let (pos_mae, r_mae) = if moving {
        let n = track.len() as f64;
        let (mut ep, mut er) = (0.0, 0.0);
        for s in &track {
            let g = ns.scene.truth_at(s.t_us);
            ep += (s.x - g.x_px).hypot(s.y - g.y_px);
            er += (s.r - g.r_px).abs();
        }
        (Some(ep / n), Some(er / n))
    } else {
        (None, None)
    };

    let t = Instant::now();
    let rows = bench
        .observations
        .iter()
        .map(|obs| {
            let end = logo.events.partition_point(|e| e.t < obs.window_us);
            let stage = EstimatorStage {
                mode: obs.mode,
                config: cfg.estimator.config,
            };
            let base = TrialRow {
                events: stream.window(0, obs.window_us).len(),
                logo_events: end,
                track_position_mae_px: pos_mae,
                track_radius_mae_px: r_mae,
                ..row(obs)
            };
            match estimate_spin(&logo.events[..end], &track, &stage.config, stage.mode) {
                Ok(rep) => {
                    let w = rep.estimate.omega_vec();
                    TrialRow {
                        success: true,
                        est_omega: Some(rep.estimate.omega),
                        est_rps: Some(rep.estimate.magnitude_rps),
                        magnitude_error_rps: Some((w.norm() - truth_w.norm()).abs() / std::f64::consts::TAU),
                        axis_error_deg: Some(axis_error_deg(&w, &truth_w)),
                        ..base
                    }
                }
                Err(e) => TrialRow {
                    error: Some(StageError::from(e).to_string()),
                    ..base
                },
            }
        })
        .collect();
    TrialOutput {
        rows,
        events: stream.len(),
        processing_s,
        estimation_s: t.elapsed().as_secs_f64(),
        recording_s: ns.scene.duration_us as f64 * 1e-6,
    }
}

fn bins_by<K: Ord + Clone>(rows: &[TrialRow], key: impl Fn(&TrialRow) -> K, make: impl Fn(&TrialRow, Summary) -> Bin) -> Vec<Bin> {
    let mut groups: BTreeMap<K, Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(r);
    }
    groups.into_values().map(|g| make(g[0], Summary::of(g.iter().copied()))).collect()
}

fn mode_rank(m: Mode) -> u8 {
    match m {
        Mode::Fast => 0,
        Mode::Refined => 1,
    }
}

/// Runs the configured suite. Trials run in parallel; rows come back in
/// scene order so the report does not depend on scheduling.
pub fn bench(cfg: &PipelineConfig) -> Result<BenchReport, CliError> {
    let b = &cfg.bench;
    if b.observations.is_empty() {
        return Err(CliError::Config("bench.observations is empty".into()));
    }
    let wall = Instant::now();
    let mut trials: Vec<(NamedScene, usize, u64)> = Vec::new();
    for rep in 0..b.reps {
        let seed = cfg.seed.wrapping_add(rep as u64);
        let params = SuiteParams { seed, ..b.params.clone() };
        let scenes = scenario_suite(b.suite, &params).map_err(|e| CliError::Config(e.to_string()))?;
        trials.extend(scenes.into_iter().map(|s| (s, rep, seed)));
    }
    let outputs: Vec<TrialOutput> = trials.par_iter().map(|(ns, rep, seed)| run_trial(ns, *rep, *seed, b, cfg)).collect();

    let rows: Vec<TrialRow> = outputs.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    let by_window = bins_by(
        &rows,
        |r| (r.window_us, mode_rank(r.mode)),
        |r, summary| Bin {
            window_us: r.window_us,
            mode: r.mode,
            kind: "all".into(),
            true_rps: None,
            summary,
        },
    );
    let bins = bins_by(
        &rows,
        |r| (r.window_us, mode_rank(r.mode), r.kind.clone(), (r.true_rps * 1000.0).round() as i64),
        |r, summary| Bin {
            window_us: r.window_us,
            mode: r.mode,
            kind: r.kind.clone(),
            true_rps: Some(r.true_rps),
            summary,
        },
    );
    // One tracking figure per trial, not per observation window.
    let per_trial: Vec<&TrialRow> = outputs.iter().filter_map(|o| o.rows.first()).collect();
    let pos: Vec<f64> = per_trial.iter().filter_map(|r| r.track_position_mae_px).collect();
    let rad: Vec<f64> = per_trial.iter().filter_map(|r| r.track_radius_mae_px).collect();
    let tracking = (!pos.is_empty()).then(|| TrackingSummary {
        position_mae_px: Stat::of(&pos),
        radius_mae_px: Stat::of(&rad),
    });
    let processing_s: f64 = outputs.iter().map(|o| o.processing_s).sum();
    let recording_s: f64 = outputs.iter().map(|o| o.recording_s).sum();
    let timing = b.timing.then(|| Timing {
        wall_time_s: wall.elapsed().as_secs_f64(),
        processing_s,
        estimation_s: outputs.iter().map(|o| o.estimation_s).sum(),
        recording_s,
        real_time_ratio: if recording_s > 0.0 { processing_s / recording_s } else { f64::NAN },
    });
    Ok(BenchReport {
        suite: b.suite,
        reps: b.reps,
        seed: cfg.seed,
        events_processed: outputs.iter().map(|o| o.events as u64).sum(),
        overall: Summary::of(&rows),
        by_window,
        bins,
        tracking,
        timing,
        scenarios: rows,
    })
}

pub const TRIALS_CSV_HEADER: &str = "scenario,kind,placement,velocity_setting,rep,seed,window_us,mode,true_rps,success,est_rps,magnitude_error_rps,axis_error_deg,events,logo_events,track_position_mae_px,track_radius_mae_px,error";
pub const PLOT_CSV_HEADER: &str = "window_us,mode,kind,true_rps,trials,success_rate,magnitude_mae_rps,magnitude_std_rps,axis_mae_deg,axis_std_deg";

fn mode_str(m: Mode) -> &'static str {
    match m {
        Mode::Fast => "fast",
        Mode::Refined => "refined",
    }
}

pub fn write_trials_csv<W: Write>(rows: &[TrialRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{TRIALS_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.kind,
            r.placement.as_deref().unwrap_or(""),
            r.velocity_setting.map_or_else(String::new, |v| v.to_string()),
            r.rep,
            r.seed,
            r.window_us,
            mode_str(r.mode),
            r.true_rps,
            r.success,
            na_csv(r.est_rps),
            na_csv(r.magnitude_error_rps),
            na_csv(r.axis_error_deg),
            r.events,
            r.logo_events,
            na_csv(r.track_position_mae_px),
            na_csv(r.track_radius_mae_px),
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        )?;
    }
    Ok(())
}

/// Plot data: x = true rps, y = MAE, one series per window/mode/kind.
pub fn write_plot_csv<W: Write>(bins: &[Bin], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{PLOT_CSV_HEADER}")?;
    for b in bins {
        let s = &b.summary;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            b.window_us,
            mode_str(b.mode),
            b.kind,
            na_csv(b.true_rps),
            s.trials,
            na_csv(s.success_rate),
            na_csv(s.magnitude_mae_rps.mean),
            na_csv(s.magnitude_mae_rps.std),
            na_csv(s.axis_mae_deg.mean),
            na_csv(s.axis_mae_deg.std),
        )?;
    }
    Ok(())
}

/// Writes `report.json`, `trials.csv` and `plot.csv` into `dir`.
pub fn write_bench_outputs(report: &BenchReport, dir: &Path) -> Result<(), StageError> {
    ensure_dir(dir)?;
    save_json(report, &dir.join("report.json"))?;
    write_with(&dir.join("trials.csv"), |out| write_trials_csv(&report.scenarios, out))?;
    write_with(&dir.join("plot.csv"), |out| write_plot_csv(&report.bins, out))
}
