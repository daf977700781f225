//! Synthetic event camera viewing a spinning, translating, logo-bearing
//! ball, with exact ground truth.
//!
//! Coordinates: the ball centre lives in a pinhole camera frame (X right,
//! Y down, Z = depth along the optical axis). Surface normals and spin use
//! (x right, y down, z towards the camera), the frame the estimator reports
//! in; surface velocity is `ω × r` evaluated component-wise in that frame.

pub mod scenarios;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Event, EventStream, Polarity, SensorGeometry};

pub use scenarios::{scenario_by_name, scenario_suite, NamedScene, Placement, SpinKind, SuiteKind, SuiteParams, UnknownScenario};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid scene: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ball {
    pub radius_m: f64,
    /// Initial centre `[X, Y, Z]`, metres, Z = depth.
    pub center_m: [f64; 3],
    pub velocity_m_s: [f64; 3],
    /// Angular velocity, rad/s.
    pub spin_rad_s: [f64; 3],
    /// Initial orientation of the body frame as a rotation vector.
    pub attitude_rotvec: [f64; 3],
}

impl Default for Ball {
    fn default() -> Self {
        Self {
            radius_m: 0.02,
            center_m: [0.0, 0.0, 0.5],
            velocity_m_s: [0.0; 3],
            spin_rad_s: [0.0; 3],
            attitude_rotvec: [0.0; 3],
        }
    }
}

/// A band of half-width `half_width_rad` around the great-circle arc with
/// unit normal `axis` (body frame), from `start_rad` to `end_rad`.
///
/// Arc angles are measured in the basis `a` = the part of body z orthogonal
/// to `axis` (body x when `axis` is parallel to z), `b = axis × a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub axis: [f64; 3],
    pub start_rad: f64,
    pub end_rad: f64,
    pub half_width_rad: f64,
}

impl Stroke {
    pub fn basis(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let n = Vector3::from(self.axis).normalize();
        let mut a = Vector3::z() - n * n.z;
        if a.norm() < 1e-9 {
            a = Vector3::x() - n * n.x;
        }
        let a = a.normalize();
        (n, a, n.cross(&a))
    }

    /// Arc through `center` heading along `direction`, extending
    /// `half_length_rad` each way.
    pub fn through(center: Vector3<f64>, direction: Vector3<f64>, half_length_rad: f64, half_width_rad: f64) -> Self {
        let c = center.normalize();
        let d = (direction - c * c.dot(&direction)).normalize();
        let n = c.cross(&d);
        let mut s = Self {
            axis: n.into(),
            start_rad: 0.0,
            end_rad: 0.0,
            half_width_rad,
        };
        let (_, a, b) = s.basis();
        let th = c.dot(&b).atan2(c.dot(&a));
        s.start_rad = th - half_length_rad;
        s.end_rad = th + half_length_rad;
        s
    }

    pub fn point_at(&self, theta: f64) -> Vector3<f64> {
        let (_, a, b) = self.basis();
        a * theta.cos() + b * theta.sin()
    }
}

/// Precomputed stroke test.
#[derive(Debug, Clone, Copy)]
struct StrokeGeom {
    n: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
    /// Unit direction of the arc midpoint in the (a, b) plane.
    mid: (f64, f64),
    /// Cosine of half the arc span; -1 for a full circle.
    cos_half: f64,
    sin_hw: f64,
}

impl StrokeGeom {
    fn new(s: &Stroke) -> Self {
        let (n, a, b) = s.basis();
        let span = (s.end_rad - s.start_rad).clamp(0.0, std::f64::consts::TAU);
        let m = s.start_rad + span / 2.0;
        Self {
            n,
            a,
            b,
            mid: (m.cos(), m.sin()),
            cos_half: (span / 2.0).cos(),
            sin_hw: s.half_width_rad.sin(),
        }
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        if p.dot(&self.n).abs() > self.sin_hw {
            return false;
        }
        let (x, y) = (p.dot(&self.a), p.dot(&self.b));
        x * self.mid.0 + y * self.mid.1 >= self.cos_half * (x * x + y * y).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Logo {
    pub strokes: Vec<Stroke>,
}

/// Log-intensity levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Photometric {
    pub background: f64,
    pub ball: f64,
    pub logo: f64,
}

impl Default for Photometric {
    fn default() -> Self {
        Self {
            background: 0.0,
            ball: 1.5,
            logo: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub c_on: f64,
    pub c_off: f64,
    pub refractory_us: u64,
    /// Background activity per pixel, Hz.
    pub noise_hz_per_px: f64,
    pub latency_on_us: u64,
    pub latency_off_us: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            c_on: 0.2,
            c_off: 0.2,
            refractory_us: 0,
            noise_hz_per_px: 0.1,
            latency_on_us: 0,
            latency_off_us: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimScene {
    pub width: u16,
    pub height: u16,
    pub focal_px: f64,
    pub table_distance_m: f64,
    pub ball: Ball,
    pub logo: Logo,
    pub photometric: Photometric,
    pub sensor: SensorModel,
    pub duration_us: u64,
    pub supersample_hz: f64,
    /// Anti-aliasing samples per pixel side.
    pub subpixel: usize,
    pub truth_interval_us: u64,
    pub seed: u64,
}

impl Default for SimScene {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            focal_px: 800.0,
            table_distance_m: 1.0,
            ball: Ball::default(),
            logo: Logo::default(),
            photometric: Photometric::default(),
            sensor: SensorModel::default(),
            duration_us: 100_000,
            supersample_hz: 20_000.0,
            subpixel: 3,
            truth_interval_us: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t_us: u64,
    pub x_px: f64,
    pub y_px: f64,
    pub r_px: f64,
    pub omega: [f64; 3],
    pub logo_visible: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub samples: Vec<TruthSample>,
}

pub const TRUTH_CSV_HEADER: &str = "t_us,x_px,y_px,r_px,wx,wy,wz";

impl GroundTruth {
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{TRUTH_CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.t_us, s.x_px, s.y_px, s.r_px, s.omega[0], s.omega[1], s.omega[2]
            )?;
        }
        Ok(())
    }
}

impl SimScene {
    pub fn geometry(&self) -> Result<SensorGeometry, ConfigError> {
        SensorGeometry::new(self.width, self.height).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn omega(&self) -> Vector3<f64> {
        Vector3::from(self.ball.spin_rad_s)
    }

    /// Ball centre (m, camera frame) at `t_us`.
    pub fn center_at(&self, t_us: f64) -> Vector3<f64> {
        Vector3::from(self.ball.center_m) + Vector3::from(self.ball.velocity_m_s) * (t_us * 1e-6)
    }

    /// Projected centre and radius (px) at `t_us`.
    pub fn project_at(&self, t_us: f64) -> (f64, f64, f64) {
        let c = self.center_at(t_us);
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        (
            cx + self.focal_px * c.x / c.z,
            cy + self.focal_px * c.y / c.z,
            self.focal_px * self.ball.radius_m / c.z,
        )
    }

    /// Body-to-camera rotation at `t_us`.
    pub fn attitude_at(&self, t_us: f64) -> Rotation3<f64> {
        let r0 = Rotation3::from_scaled_axis(Vector3::from(self.ball.attitude_rotvec));
        Rotation3::from_scaled_axis(self.omega() * (t_us * 1e-6)) * r0
    }

    /// Worst-case events per second at one pixel from logo edges sweeping by.
    pub fn max_pixel_event_rate(&self) -> f64 {
        let rps = self.omega().norm() / std::f64::consts::TAU;
        let c_min = self.sensor.c_on.min(self.sensor.c_off);
        let per_edge = ((self.photometric.logo - self.photometric.ball).abs() / c_min).ceil();
        rps * 2.0 * self.logo.strokes.len() as f64 * per_edge
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError(m.to_string()));
        self.geometry()?;
        if !(self.focal_px > 0.0) {
            return bad("focal_px must be positive");
        }
        if !(self.table_distance_m > 0.0) {
            return bad("table_distance_m must be positive");
        }
        if !(self.ball.radius_m > 0.0) {
            return bad("ball radius must be positive");
        }
        if self.duration_us == 0 {
            return bad("duration must be positive");
        }
        if !(self.sensor.c_on > 0.0 && self.sensor.c_off > 0.0) {
            return bad("contrast thresholds must be positive");
        }
        if !(self.sensor.noise_hz_per_px >= 0.0) {
            return bad("noise rate must be non-negative");
        }
        if self.subpixel == 0 || self.truth_interval_us == 0 {
            return bad("subpixel and truth_interval_us must be positive");
        }
        for t in [0.0, self.duration_us as f64] {
            if !(self.center_at(t).z > self.ball.radius_m) {
                return bad("ball must stay in front of the camera");
            }
        }
        for s in &self.logo.strokes {
            if !(Vector3::from(s.axis).norm() > 0.0) || !(s.half_width_rad > 0.0) {
                return bad("stroke needs a non-zero axis and positive width");
            }
        }
        let all = [
            self.photometric.background,
            self.photometric.ball,
            self.photometric.logo,
        ];
        if all.iter().chain(&self.ball.center_m).chain(&self.ball.spin_rad_s).any(|v| !v.is_finite()) {
            return bad("non-finite scene parameter");
        }
        if !(self.supersample_hz >= 10.0 * self.max_pixel_event_rate()) || !(self.supersample_hz > 0.0) {
            return Err(ConfigError(format!(
                "supersample rate {} Hz is below 10x the peak per-pixel event rate {} Hz",
                self.supersample_hz,
                self.max_pixel_event_rate()
            )));
        }
        Ok(())
    }

    pub fn truth_at(&self, t_us: u64) -> TruthSample {
        let (x, y, r) = self.project_at(t_us as f64);
        let rot = self.attitude_at(t_us as f64);
        let logo_visible = self.logo.strokes.iter().any(|s| {
            (0..=16).any(|k| {
                let th = s.start_rad + (s.end_rad - s.start_rad) * k as f64 / 16.0;
                (rot * s.point_at(th)).z > 0.0
            })
        });
        TruthSample {
            t_us,
            x_px: x,
            y_px: y,
            r_px: r,
            omega: self.ball.spin_rad_s,
            logo_visible,
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let samples = (0..=self.duration_us)
            .step_by(self.truth_interval_us.max(1) as usize)
            .map(|t| self.truth_at(t))
            .collect();
        GroundTruth { samples }
    }
}

fn logo_cap(strokes: &[Stroke]) -> (Vector3<f64>, f64) {
    const K: usize = 32;
    let pts: Vec<Vector3<f64>> = strokes
        .iter()
        .flat_map(|s| (0..=K).map(move |k| s.point_at(s.start_rad + (s.end_rad - s.start_rad) * k as f64 / K as f64)))
        .collect();
    let sum: Vector3<f64> = pts.iter().sum();
    if strokes.is_empty() || sum.norm() < 1e-9 {
        return (Vector3::z(), -1.0);
    }
    let c = sum.normalize();
    let widest = strokes.iter().map(|s| s.half_width_rad).fold(0.0, f64::max);
    let reach = pts
        .iter()
        .map(|p| p.dot(&c).clamp(-1.0, 1.0).acos())
        .fold(0.0, f64::max);
    // Margin covers the arc between samples.
    let radius = reach + widest + 0.05;
    (c, if radius >= std::f64::consts::PI { -1.0 } else { radius.cos() })
}

/// Evaluates mean linear intensity per pixel and turns log-intensity
/// changes into events.
struct Renderer<'a> {
    scene: &'a SimScene,
    strokes: Vec<StrokeGeom>,
    /// Spherical cap (centre, cosine of angular radius) holding every stroke.
    cap: (Vector3<f64>, f64),
    cap_angle: f64,
    /// Linear background, ball and logo intensities.
    linear: [f64; 3],
    w: usize,
    h: usize,
    level: Vec<f64>,
    reference: Vec<f64>,
    last_event: Vec<f64>,
    events: Vec<Event>,
}

impl<'a> Renderer<'a> {
    fn new(scene: &'a SimScene) -> Self {
        let (w, h) = (scene.width as usize, scene.height as usize);
        let ph = &scene.photometric;
        let bg = ph.background;
        let cap = logo_cap(&scene.logo.strokes);
        Self {
            scene,
            strokes: scene.logo.strokes.iter().map(StrokeGeom::new).collect(),
            cap,
            cap_angle: cap.1.clamp(-1.0, 1.0).acos(),
            linear: [ph.background.exp(), ph.ball.exp(), ph.logo.exp()],
            w,
            h,
            level: vec![bg; w * h],
            reference: vec![bg; w * h],
            last_event: vec![f64::NEG_INFINITY; w * h],
            events: Vec::new(),
        }
    }

    fn bbox(&self, cx: f64, cy: f64, r: f64) -> (usize, usize, usize, usize) {
        let x0 = (cx - r - 1.0).floor().clamp(0.0, self.w as f64 - 1.0) as usize;
        let x1 = (cx + r + 1.0).ceil().clamp(0.0, self.w as f64 - 1.0) as usize;
        let y0 = (cy - r - 1.0).floor().clamp(0.0, self.h as f64 - 1.0) as usize;
        let y1 = (cy + r + 1.0).ceil().clamp(0.0, self.h as f64 - 1.0) as usize;
        (x0, y0, x1, y1)
    }

    fn pixel_level(&self, px: usize, py: usize, cx: f64, cy: f64, r: f64, to_body: &Rotation3<f64>, cap_cam: &Vector3<f64>) -> f64 {
        let ph = &self.scene.photometric;
        // Whole pixel on the ball and provably clear of the logo cap: the
        // normals of its samples lie within `spread` of the centre normal.
        let (dx, dy) = ((px as f64 - cx) / r, (py as f64 - cy) / r);
        let (fx, fy) = (dx.abs() + 0.5 / r, dy.abs() + 0.5 / r);
        let far = (fx * fx + fy * fy).sqrt();
        if far < 0.98 && self.cap.1 > -1.0 {
            let centre = Vector3::new(dx, dy, (1.0 - dx * dx - dy * dy).max(0.0).sqrt());
            let spread = 0.75 / r / (1.0 - far * far).sqrt();
            let limit = self.cap_angle + spread;
            if limit < std::f64::consts::PI && centre.dot(cap_cam) < limit.cos() {
                return ph.ball;
            }
        }
        let n = self.scene.subpixel;
        let [bg, ball, logo] = self.linear;
        let mut sum = 0.0;
        for j in 0..n {
            for i in 0..n {
                let sx = px as f64 + (i as f64 + 0.5) / n as f64 - 0.5;
                let sy = py as f64 + (j as f64 + 0.5) / n as f64 - 0.5;
                let (dx, dy) = ((sx - cx) / r, (sy - cy) / r);
                let rho2 = dx * dx + dy * dy;
                if rho2 >= 1.0 {
                    sum += bg;
                    continue;
                }
                let p = to_body * Vector3::new(dx, dy, (1.0 - rho2).sqrt());
                let on_logo = p.dot(&self.cap.0) >= self.cap.1 && self.strokes.iter().any(|s| s.contains(&p));
                sum += if on_logo { logo } else { ball };
            }
        }
        (sum / (n * n) as f64).ln()
    }

    /// Advances pixel `i` from its stored level to `l1` over `(t0, t1]` µs.
    fn emit(&mut self, i: usize, l1: f64, t0: f64, t1: f64) {
        let l0 = self.level[i];
        self.level[i] = l1;
        if l1 == l0 {
            return;
        }
        let s = &self.scene.sensor;
        let (x, y) = ((i % self.w) as u16, (i / self.w) as u16);
        loop {
            let r = self.reference[i];
            let (target, pol, lat) = if l1 - r >= s.c_on {
                (r + s.c_on, Polarity::On, s.latency_on_us)
            } else if r - l1 >= s.c_off {
                (r - s.c_off, Polarity::Off, s.latency_off_us)
            } else {
                break;
            };
            self.reference[i] = target;
            let frac = ((target - l0) / (l1 - l0)).clamp(0.0, 1.0);
            let t = t0 + frac * (t1 - t0);
            if t - self.last_event[i] < s.refractory_us as f64 {
                continue;
            }
            self.last_event[i] = t;
            self.events.push(Event::new(t.round() as u64 + lat, x, y, pol));
        }
    }

    fn run(mut self) -> Vec<Event> {
        let sc = self.scene;
        let dt = 1e6 / sc.supersample_hz;
        let steps = (sc.duration_us as f64 / dt).ceil() as usize;
        let bg = sc.photometric.background;

        let (cx, cy, r) = sc.project_at(0.0);
        let rot = sc.attitude_at(0.0).inverse();
        let cap_cam = rot.inverse() * self.cap.0;
        let mut prev_box = self.bbox(cx, cy, r);
        let (x0, y0, x1, y1) = prev_box;
        for py in y0..=y1 {
            for px in x0..=x1 {
                let l = self.pixel_level(px, py, cx, cy, r, &rot, &cap_cam);
                let i = py * self.w + px;
                self.level[i] = l;
                self.reference[i] = l;
            }
        }

        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for k in 1..=steps {
            let t1 = (k as f64 * dt).min(sc.duration_us as f64);
            let t0 = (k - 1) as f64 * dt;
            let (cx, cy, r) = sc.project_at(t1);
            let rot = sc.attitude_at(t1).inverse();
            let cap_cam = rot.inverse() * self.cap.0;
            let cur = self.bbox(cx, cy, r);
            let ux0 = cur.0.min(prev_box.0);
            let uy0 = cur.1.min(prev_box.1);
            let ux1 = cur.2.max(prev_box.2);
            let uy1 = cur.3.max(prev_box.3);
            scratch.clear();
            for py in uy0..=uy1 {
                for px in ux0..=ux1 {
                    let inside = px >= cur.0 && px <= cur.2 && py >= cur.1 && py <= cur.3;
                    let l = if inside { self.pixel_level(px, py, cx, cy, r, &rot, &cap_cam) } else { bg };
                    scratch.push((py * self.w + px, l));
                }
            }
            for &(i, l) in &scratch {
                self.emit(i, l, t0, t1);
            }
            prev_box = cur;
        }
        self.events
    }
}

fn noise_events(scene: &SimScene, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let total = scene.sensor.noise_hz_per_px * scene.width as f64 * scene.height as f64;
    let mut out = Vec::new();
    if !(total > 0.0) {
        return out;
    }
    let gap = Exp::new(total).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gap.sample(rng) * 1e6;
        if t >= scene.duration_us as f64 {
            break;
        }
        let x = rng.gen_range(0..scene.width);
        let y = rng.gen_range(0..scene.height);
        let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
        out.push(Event::new(t as u64, x, y, p));
    }
    out
}

/// Renders the scene into an event stream plus sampled ground truth.
pub fn render_scene(scene: &SimScene) -> Result<(EventStream, GroundTruth), ConfigError> {
    scene.validate()?;
    let geometry = scene.geometry()?;
    let mut events = Renderer::new(scene).run();
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    events.extend(noise_events(scene, &mut rng));
    events.sort_by_key(|e| e.t);
    let stream = EventStream::new(geometry, events).map_err(|e| ConfigError(e.to_string()))?;
    Ok((stream, scene.ground_truth()))
}
