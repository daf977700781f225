use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spinflow_cli::config::PipelineConfig;
use spinflow_cli::error::{CliError, StageError};
use spinflow_cli::pipeline::{
    build_track, estimate, load_events, load_track, resolve_scene, save_events, save_json, save_logo, save_track, save_truth, simulate,
    write_with, SpinOutput,
};
use spinflow_cli::{bench, run_pipeline, write_bench_outputs};
use spinflow_core::filters::{self, FilterKind};
use spinflow_core::logo::{extract_logo_events, read_logo};
use spinflow_core::events::Format;
use spinflow_core::sim::SuiteKind;
use spinflow_core::spin::Mode;
use spinflow_core::surfaces::{accumulate, ErosSurface, LinearTimeSurface};

#[derive(Parser)]
#[command(name = "spinflow", version, about = "Event-camera ball tracking and spin estimation")]
struct Cli {
    /// Seed for all randomness (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `bench`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON pipeline config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurfaceKind {
    Eros,
    /// Event-count frame.
    #[value(alias = "count")]
    Acc,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene to an event file (and its ground truth).
    Simulate {
        /// Scene JSON with SimScene fields; without it `--scenario` is used.
        scene: Option<PathBuf>,
        /// Suite scene name, e.g. spinner/ball-1/topspin/50rps.
        #[arg(long, conflicts_with = "scene")]
        scenario: Option<String>,
        #[arg(long)]
        duration_us: Option<u64>,
        /// Background noise rate, Hz per pixel.
        #[arg(long)]
        noise: Option<f64>,
        /// Event file; `.csv` for text, anything else binary.
        #[arg(long, short, visible_alias = "output")]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Apply an STC / TRAIL / STC-cut-TRAIL filter.
    Filter {
        input: PathBuf,
        output: PathBuf,
        /// stc, trail or stc-cut-trail.
        #[arg(long)]
        kind: Option<FilterKind>,
        #[arg(long)]
        threshold_us: Option<u64>,
    },
    /// Write a time surface or event-count frame as a PGM image.
    Surface {
        input: PathBuf,
        #[arg(long, short, visible_alias = "output")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "eros")]
        kind: SurfaceKind,
        /// Snapshot time; defaults to the last event.
        #[arg(long)]
        t_us: Option<u64>,
        /// Linear decay constant or count window, µs.
        #[arg(long, default_value_t = 10_000)]
        window_us: u64,
        /// Remove isolated specks from the EROS surface first.
        #[arg(long)]
        clean: bool,
    },
    /// Track the ball and write track.csv.
    Track {
        input: PathBuf,
        #[arg(long, short, visible_alias = "output")]
        out: PathBuf,
        /// Fixed ball "x,y,r" in pixels instead of tracking.
        #[arg(long, value_parser = parse_ball)]
        static_ball: Option<[f64; 3]>,
    },
    /// Keep the events inside the tracked ball, in ball-centric coordinates.
    Extract {
        input: PathBuf,
        track: PathBuf,
        /// Rim pad in pixels; default max(2, 0.1 r).
        #[arg(long)]
        pad: Option<f64>,
        #[arg(long, short, visible_alias = "output")]
        out: PathBuf,
    },
    /// Estimate the spin from logo events and write spin.json.
    Estimate {
        logo: PathBuf,
        track: PathBuf,
        #[arg(long, short, visible_alias = "output")]
        out: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        t_acc_us: Option<u64>,
    },
    /// Simulate (or read) → track → extract → estimate into a directory.
    Run {
        /// Event file; without it the configured scenario is simulated.
        input: Option<PathBuf>,
        #[arg(long, conflicts_with = "input")]
        scenario: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Run a scenario suite and write report.json, trials.csv and plot.csv.
    Bench {
        #[arg(long)]
        suite: Option<SuiteKind>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Comma-separated spin magnitudes, rps.
        #[arg(long, value_delimiter = ',')]
        spins: Option<Vec<f64>>,
        /// Comma-separated placements (spinner), e.g. ball-1,ball-5.
        #[arg(long, value_delimiter = ',')]
        placements: Option<Vec<String>>,
        /// Add wall-clock timing to the report (makes it run-dependent).
        #[arg(long)]
        timing: bool,
    },
}

fn parse_ball(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected x,y,r".to_string())
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    match cli.command {
        Command::Simulate {
            scene,
            scenario,
            duration_us,
            noise,
            out,
            truth,
        } => {
            if let Some(p) = scene {
                let text = std::fs::read_to_string(&p).map_err(|e| StageError::io(&p, e))?;
                cfg.simulator.scene = Some(serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?);
            } else if scenario.is_some() {
                cfg.simulator.scenario = scenario;
                cfg.simulator.scene = None;
            }
            if let Some(d) = duration_us {
                cfg.simulator.suite.duration_us = d;
            }
            if let Some(n) = noise {
                cfg.simulator.suite.noise_hz_per_px = n;
            }
            let (_, mut scene) = resolve_scene(&cfg.simulator, cfg.seed)?;
            if cfg.simulator.scene.is_some() {
                if let Some(d) = duration_us {
                    scene.duration_us = d;
                }
                if let Some(n) = noise {
                    scene.sensor.noise_hz_per_px = n;
                }
            }
            let (stream, gt) = simulate(&scene)?;
            save_events(&stream, &out)?;
            if let Some(p) = truth {
                save_truth(&gt, &p)?;
            }
        }
        Command::Filter {
            input,
            output,
            kind,
            threshold_us,
        } => {
            if let Some(t) = threshold_us {
                cfg.filter.threshold_us = t;
            }
            let kind = kind.or(cfg.filter.kind).unwrap_or(FilterKind::StcCutTrail);
            let fc = cfg.filter.filter_config()?;
            let stream = load_events(&input)?;
            save_events(&filters::apply(kind, &stream, fc), &output)?;
        }
        Command::Surface {
            input,
            out,
            kind,
            t_us,
            window_us,
            clean,
        } => {
            let stream = load_events(&input)?;
            let t_now = t_us.or(stream.time_span().map(|s| s.1)).unwrap_or(0);
            let upto = stream.window(0, t_now.saturating_add(1));
            let image = match kind {
                SurfaceKind::Eros => {
                    let tc = &cfg.tracker.config;
                    let gamma = tc.gamma.unwrap_or_else(|| spinflow_core::surfaces::default_gamma(tc.k_eros));
                    let mut s = ErosSurface::new(stream.geometry(), tc.k_eros, gamma);
                    for e in upto {
                        s.update(e);
                    }
                    if clean {
                        s.clean_isolated(None);
                    }
                    s.to_image()
                }
                SurfaceKind::Linear => {
                    let mut s = LinearTimeSurface::new(stream.geometry(), window_us.max(1));
                    for e in upto {
                        s.update(e);
                    }
                    s.render(t_now)
                }
                SurfaceKind::Acc => accumulate(&stream, t_now.saturating_sub(window_us), window_us).to_image(),
            };
            write_with(&out, |w| image.write_pgm(w))?;
        }
        Command::Track { input, out, static_ball } => {
            if static_ball.is_some() {
                cfg.tracker.static_ball = static_ball;
            }
            let stream = load_events(&input)?;
            save_track(&build_track(&stream, &cfg.tracker)?, &out)?;
        }
        Command::Extract { input, track, pad, out } => {
            if pad.is_some() {
                cfg.extraction.pad = pad;
            }
            let stream = load_events(&input)?;
            let track = load_track(&track)?;
            save_logo(&extract_logo_events(&stream, &track, &cfg.extraction), &out)?;
        }
        Command::Estimate {
            logo,
            track,
            out,
            mode,
            t_acc_us,
        } => {
            if let Some(m) = mode {
                cfg.estimator.mode = m;
            }
            if t_acc_us.is_some() {
                cfg.estimator.config.t_acc_us = t_acc_us;
            }
            let logo_stream = read_logo(&logo, Format::from_path(&logo)).map_err(|e| StageError::events(&logo, e))?;
            let track = load_track(&track)?;
            let report = estimate(&logo_stream, &track, &cfg.estimator)?;
            save_json(
                &SpinOutput {
                    scenario: None,
                    report,
                    truth: None,
                },
                &out,
            )?;
        }
        Command::Run {
            input,
            scenario,
            out_dir,
            mode,
        } => {
            if input.is_some() {
                cfg.input = input;
            }
            if scenario.is_some() {
                cfg.simulator.scenario = scenario;
                cfg.simulator.scene = None;
            }
            if let Some(d) = out_dir {
                cfg.output_dir = d;
            }
            if let Some(m) = mode {
                cfg.estimator.mode = m;
            }
            let art = run_pipeline(&cfg)?;
            let e = &art.spin.report.estimate;
            println!(
                "spin {:.2} rps, axis [{:.3}, {:.3}, {:.3}]",
                e.magnitude_rps, e.axis[0], e.axis[1], e.axis[2]
            );
        }
        Command::Bench {
            suite,
            reps,
            out_dir,
            spins,
            placements,
            timing,
        } => {
            let b = &mut cfg.bench;
            if let Some(s) = suite {
                b.suite = s;
            }
            if let Some(r) = reps {
                b.reps = r;
            }
            if let Some(s) = spins {
                b.params.spins_rps = s;
            }
            if let Some(p) = placements {
                b.params.placements = p.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(config_err)?;
            }
            b.timing |= timing;
            if let Some(d) = out_dir {
                cfg.output_dir = d;
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers.unwrap_or(0))
                .build()
                .map_err(config_err)?;
            let report = pool.install(|| bench(&cfg))?;
            write_bench_outputs(&report, &cfg.output_dir)?;
            let s = &report.overall;
            eprintln!(
                "{} trials, {} succeeded{}",
                s.trials,
                s.successes,
                report.timing.as_ref().map_or_else(String::new, |t| format!(", real-time ratio {:.3}", t.real_time_ratio))
            );
        }
    }
    Ok(())
}
