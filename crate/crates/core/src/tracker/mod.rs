//! Ball tracking: EROS surface → hit-or-miss cleanup → Hough circles →
//! gated constant-velocity Kalman filter, evaluated at a fixed tick rate.

pub mod blob;
pub mod hough;
pub mod kalman;

use std::io::{self, BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Event, EventStream, SensorGeometry};
use crate::surfaces::{default_gamma, ErosSurface, Rect, DEFAULT_K_EROS};

pub use blob::{blob_oracle, BlobObservation, NoBlob};
pub use hough::{hough_circles, CircleDetection, HoughParams};
pub use kalman::{kf_predict, kf_update, GateReject, NoiseParams, TrackState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub tick_hz: f64,
    pub k_eros: usize,
    /// EROS decay; `None` uses `0.3^(1/k_eros)`.
    pub gamma: Option<f32>,
    /// Acquisition search (full frame, coarse grid).
    pub hough: HoughParams,
    /// Half-width of the radius search around the filtered radius, px.
    pub radius_window: f64,
    /// Minimum extra search margin around the predicted centre, px.
    pub search_margin: f64,
    pub noise: NoiseParams,
    /// Largest plausible image speed when pairing the first two detections.
    pub max_speed_px_s: f64,
    /// Consecutive ticks without an accepted measurement before the track
    /// is dropped.
    pub lost_after: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tick_hz: 200.0,
            k_eros: DEFAULT_K_EROS,
            gamma: None,
            hough: HoughParams::default(),
            radius_window: 3.0,
            search_margin: 6.0,
            noise: NoiseParams::default(),
            max_speed_px_s: 30_000.0,
            lost_after: 20,
        }
    }
}

impl TrackerConfig {
    pub fn tick_period_us(&self) -> u64 {
        (1e6 / self.tick_hz).round().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("track lost: no accepted measurement in {ticks} consecutive ticks")]
    TrackLost { ticks: u32 },
    #[error("invalid tracker configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TickOutcome {
    /// No track yet; still looking for two consistent detections.
    Searching,
    /// Measurement accepted.
    Tracked(TrackState),
    /// No acceptable measurement; state is the prediction.
    Coasting(TrackState),
    /// Too many consecutive misses; the track was dropped.
    Lost,
}

/// Streaming tracker. Feed events with [`Tracker::push`] and call
/// [`Tracker::tick`] at the configured rate.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    eros: ErosSurface,
    touched: Vec<(u16, u16)>,
    state: Option<TrackState>,
    seed: Option<(Vector3<f64>, u64)>,
    misses: u32,
}

impl Tracker {
    pub fn new(geometry: SensorGeometry, cfg: TrackerConfig) -> Result<Self, TrackerError> {
        if !(cfg.tick_hz > 0.0) {
            return Err(TrackerError::Config("tick rate must be positive".into()));
        }
        if !(cfg.hough.r_max >= cfg.hough.r_min) {
            return Err(TrackerError::Config("empty Hough radius range".into()));
        }
        let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(cfg.k_eros));
        Ok(Self {
            eros: ErosSurface::new(geometry, cfg.k_eros, gamma),
            cfg,
            touched: Vec::new(),
            state: None,
            seed: None,
            misses: 0,
        })
    }

    pub fn surface(&self) -> &ErosSurface {
        &self.eros
    }

    pub fn state(&self) -> Option<&TrackState> {
        self.state.as_ref()
    }

    pub fn push(&mut self, e: &Event) {
        self.eros.update(e);
        self.touched.push((e.x, e.y));
    }

    pub fn tick(&mut self, t_us: u64) -> TickOutcome {
        self.eros.clean_around(self.touched.drain(..));
        match self.state {
            None => self.acquire(t_us),
            Some(state) => self.follow(state, t_us),
        }
    }

    fn acquire(&mut self, t_us: u64) -> TickOutcome {
        let det = hough_circles(&self.eros, &self.cfg.hough, None);
        let Some(top) = det.first() else {
            self.seed = None;
            return TickOutcome::Searching;
        };
        let z = Vector3::new(top.cx, top.cy, top.r);
        if let Some((prev, t_prev)) = self.seed {
            let dt = (t_us - t_prev) as f64 * 1e-6;
            let dist = (z[0] - prev[0]).hypot(z[1] - prev[1]);
            if dt > 0.0 && dist <= self.cfg.max_speed_px_s * dt && (z[2] - prev[2]).abs() <= self.cfg.radius_window {
                let s = kalman::initialize(prev, z, dt, t_us, &self.cfg.noise);
                self.state = Some(s);
                self.seed = None;
                self.misses = 0;
                return TickOutcome::Tracked(s);
            }
        }
        self.seed = Some((z, t_us));
        TickOutcome::Searching
    }

    fn follow(&mut self, state: TrackState, t_us: u64) -> TickOutcome {
        let dt = t_us.saturating_sub(state.t_us) as f64 * 1e-6;
        let pred = kf_predict(&state, dt, &self.cfg.noise.q_matrix());
        let (px, py) = pred.position();
        let r = pred.radius().max(self.cfg.hough.r_min);
        let sigma = pred.p[(0, 0)].max(pred.p[(1, 1)]).sqrt();
        let margin = self.cfg.search_margin.max(3.0 * sigma);
        let g = self.eros.geometry();
        let clampx = |v: f64| v.clamp(0.0, g.width as f64 - 1.0) as usize;
        let clampy = |v: f64| v.clamp(0.0, g.height as f64 - 1.0) as usize;
        let roi = Rect {
            x0: clampx(px - margin),
            y0: clampy(py - margin),
            x1: clampx(px + margin),
            y1: clampy(py + margin),
        };
        let params = HoughParams {
            r_min: (r - self.cfg.radius_window).max(self.cfg.hough.r_min),
            r_max: (r + self.cfg.radius_window).min(self.cfg.hough.r_max),
            cell: 1,
            ..self.cfg.hough
        };
        let in_frame = px >= -r && py >= -r && px <= g.width as f64 + r && py <= g.height as f64 + r;
        let candidates = if in_frame {
            hough_circles(&self.eros, &params, Some(roi))
        } else {
            Vec::new()
        };
        let r_mat = self.cfg.noise.r_matrix();
        let best = candidates
            .iter()
            .map(|c| {
                let z = Vector3::new(c.cx, c.cy, c.r);
                (kalman::mahalanobis(&pred, &z, &r_mat), z)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let updated = best.and_then(|(_, z)| kf_update(&pred, &z, &self.cfg.noise).ok());
        match updated {
            Some(s) => {
                self.state = Some(s);
                self.misses = 0;
                TickOutcome::Tracked(s)
            }
            None => {
                self.misses += 1;
                if self.misses >= self.cfg.lost_after {
                    self.state = None;
                    self.misses = 0;
                    TickOutcome::Lost
                } else {
                    self.state = Some(pred);
                    TickOutcome::Coasting(pred)
                }
            }
        }
    }
}

/// Runs the tracker over a whole stream.
///
/// Ticks fall at `t_first + k · period`. The output holds the post-update
/// state of every tick while a track is held; coasting states that end in a
/// lost track are dropped. Fails with `TrackLost` when no track was ever
/// established.
pub fn track(stream: &EventStream, cfg: &TrackerConfig) -> Result<Vec<TrackState>, TrackerError> {
    let mut tracker = Tracker::new(stream.geometry(), cfg.clone())?;
    let Some((first, last)) = stream.time_span() else {
        return Err(TrackerError::TrackLost { ticks: 0 });
    };
    let period = cfg.tick_period_us();
    let events = stream.events();
    let mut out: Vec<TrackState> = Vec::new();
    let mut coasting = 0usize;
    let mut misses_without_track = 0u32;
    let mut i = 0;
    let mut t_tick = first + period;
    loop {
        while i < events.len() && events[i].t <= t_tick {
            tracker.push(&events[i]);
            i += 1;
        }
        match tracker.tick(t_tick) {
            TickOutcome::Searching => misses_without_track += 1,
            TickOutcome::Tracked(s) => {
                out.push(s);
                coasting = 0;
            }
            TickOutcome::Coasting(s) => {
                out.push(s);
                coasting += 1;
            }
            TickOutcome::Lost => {
                out.truncate(out.len() - coasting);
                coasting = 0;
            }
        }
        if t_tick >= last {
            break;
        }
        t_tick += period;
    }
    out.truncate(out.len() - coasting);
    if out.is_empty() {
        return Err(TrackerError::TrackLost {
            ticks: misses_without_track,
        });
    }
    Ok(out)
}

/// A constant track for a ball whose image position is known, one state per
/// tick over `[t0, t1]`.
pub fn static_track(x: f64, y: f64, r: f64, t0: u64, t1: u64, cfg: &TrackerConfig) -> Vec<TrackState> {
    let period = cfg.tick_period_us();
    let p = kalman::Covariance::from_diagonal(&kalman::StateVector::from_column_slice(&[
        cfg.noise.r[0],
        cfg.noise.r[1],
        0.0,
        0.0,
        cfg.noise.r[2],
    ]));
    let mut out = Vec::new();
    let mut t = t0;
    loop {
        out.push(TrackState {
            x: kalman::StateVector::from_column_slice(&[x, y, 0.0, 0.0, r]),
            p,
            t_us: t,
        });
        if t >= t1 {
            break;
        }
        t += period;
    }
    out
}

/// One row of `track.csv`: `t_us,x,y,vx,vy,r,cov_trace`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub t_us: u64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub cov_trace: f64,
}

impl From<&TrackState> for TrackRecord {
    fn from(s: &TrackState) -> Self {
        Self {
            t_us: s.t_us,
            x: s.x[0],
            y: s.x[1],
            vx: s.x[2],
            vy: s.x[3],
            r: s.x[4],
            cov_trace: s.cov_trace(),
        }
    }
}

pub const TRACK_CSV_HEADER: &str = "t_us,x,y,vx,vy,r,cov_trace";

pub fn write_track_csv<W: Write>(records: &[TrackRecord], out: &mut W) -> io::Result<()> {
    writeln!(out, "{TRACK_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{},{},{},{}", r.t_us, r.x, r.y, r.vx, r.vy, r.r, r.cov_trace)?;
    }
    Ok(())
}

pub fn read_track_csv<R: BufRead>(input: R) -> io::Result<Vec<TrackRecord>> {
    let bad = |line: usize, msg: String| io::Error::new(io::ErrorKind::InvalidData, format!("track line {line}: {msg}"));
    let mut out: Vec<TrackRecord> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t_us") {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(bad(i + 1, format!("expected 7 fields, got {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| bad(i + 1, format!("field {k}: {e}")));
        let rec = TrackRecord {
            t_us: f[0].parse::<u64>().map_err(|e| bad(i + 1, format!("t_us: {e}")))?,
            x: num(1)?,
            y: num(2)?,
            vx: num(3)?,
            vy: num(4)?,
            r: num(5)?,
            cov_trace: num(6)?,
        };
        if let Some(prev) = out.last() {
            if rec.t_us < prev.t_us {
                return Err(bad(i + 1, "track rows out of time order".into()));
            }
        }
        out.push(rec);
    }
    Ok(out)
}
