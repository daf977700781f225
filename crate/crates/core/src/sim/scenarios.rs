//! Named benchmark scenes: a static ball spinner with several logo
//! placements, and a ball thrower at four velocity settings.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Ball, Logo, Photometric, SensorModel, SimScene, Stroke};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown scenario {0:?}")]
pub struct UnknownScenario(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    Spinner,
    Thrower,
}

impl FromStr for SuiteKind {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spinner" => Ok(Self::Spinner),
            "thrower" => Ok(Self::Thrower),
            _ => Err(UnknownScenario(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinKind {
    Topspin,
    Backspin,
    Sidespin,
}

impl SpinKind {
    pub const ALL: [SpinKind; 3] = [SpinKind::Topspin, SpinKind::Backspin, SpinKind::Sidespin];

    /// Unit spin axis in the camera frame. Sidespin is about the viewing
    /// axis tilted by `tilt_deg` towards +y.
    pub fn axis(self, tilt_deg: f64) -> Vector3<f64> {
        match self {
            SpinKind::Topspin => Vector3::x(),
            SpinKind::Backspin => -Vector3::x(),
            SpinKind::Sidespin => {
                let t = tilt_deg.to_radians();
                Vector3::new(0.0, t.sin(), t.cos())
            }
        }
    }
}

impl fmt::Display for SpinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpinKind::Topspin => "topspin",
            SpinKind::Backspin => "backspin",
            SpinKind::Sidespin => "sidespin",
        })
    }
}

impl FromStr for SpinKind {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "topspin" => Ok(Self::Topspin),
            "backspin" => Ok(Self::Backspin),
            "sidespin" => Ok(Self::Sidespin),
            _ => Err(UnknownScenario(s.to_string())),
        }
    }
}

/// Logo placement on the ball, `ball-1` … `ball-7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement(pub u8);

impl Placement {
    pub const ALL: [Placement; 7] = [
        Placement(1),
        Placement(2),
        Placement(3),
        Placement(4),
        Placement(5),
        Placement(6),
        Placement(7),
    ];

    /// Whether the logo sits on the spin axis.
    pub fn is_singular(self) -> bool {
        self.0 == 5
    }

    /// Logo centre and in-plane rotation (rad) for the given spin axis.
    fn layout(self, axis: &Vector3<f64>) -> (Vector3<f64>, f64) {
        let tilted = |deg: f64| {
            let t = f64::to_radians(deg);
            Vector3::new(t.sin(), 0.0, t.cos())
        };
        match self.0 {
            2 => (tilted(30.0), 0.0),
            3 => (tilted(45.0), 0.0),
            4 => (tilted(60.0), 0.0),
            // On the axis; when the axis faces the camera use the far pole.
            5 => (if axis.z > 1e-9 { -axis } else { *axis }, 0.0),
            6 => (Vector3::z(), PI / 4.0),
            7 => (Vector3::z(), PI / 2.0),
            _ => (Vector3::z(), 0.0),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ball-{}", self.0)
    }
}

impl FromStr for Placement {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("ball-")
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|n| (1..=7).contains(n))
            .map(Placement)
            .ok_or_else(|| UnknownScenario(s.to_string()))
    }
}

/// Thrower velocity setting → ball speed, m/s.
pub fn thrower_speed(setting: u32) -> Result<f64, UnknownScenario> {
    match setting {
        10 => Ok(4.0),
        15 => Ok(5.5),
        20 => Ok(7.5),
        25 => Ok(9.0),
        _ => Err(UnknownScenario(format!("velocity setting {setting}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteParams {
    pub spins_rps: Vec<f64>,
    pub kinds: Vec<SpinKind>,
    /// Spinner only.
    pub placements: Vec<Placement>,
    /// Thrower only.
    pub velocity_settings: Vec<u32>,
    pub duration_us: u64,
    pub noise_hz_per_px: f64,
    pub sidespin_tilt_deg: f64,
    /// Logo stroke half-width, rad.
    pub stroke_half_width: f64,
    pub seed: u64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            spins_rps: vec![10.0, 25.0, 50.0, 75.0, 100.0],
            kinds: SpinKind::ALL.to_vec(),
            placements: Placement::ALL.to_vec(),
            velocity_settings: vec![10, 15, 20, 25],
            duration_us: 100_000,
            noise_hz_per_px: 0.0,
            sidespin_tilt_deg: 25.0,
            stroke_half_width: 0.07,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScene {
    pub name: String,
    pub suite: SuiteKind,
    pub kind: SpinKind,
    pub rps: f64,
    pub placement: Option<Placement>,
    pub velocity_setting: Option<u32>,
    pub scene: SimScene,
}

/// Three-stroke asymmetric mark centred on `center`: a long bar, a short
/// cross bar and a short bar near one end of the long one.
pub fn logo_strokes(center: Vector3<f64>, in_plane_rot: f64, half_width: f64) -> Vec<Stroke> {
    let c = center.normalize();
    let mut d1 = Vector3::x() - c * c.x;
    if d1.norm() < 1e-6 {
        d1 = Vector3::y() - c * c.y;
    }
    let d1 = Rotation3::from_axis_angle(&Unit::new_normalize(c), in_plane_rot) * d1.normalize();
    let d2 = c.cross(&d1);
    let end = Rotation3::from_axis_angle(&Unit::new_normalize(d2), -0.25) * c;
    vec![
        Stroke::through(c, d1, 0.35, half_width),
        Stroke::through(c, d2, 0.2, half_width),
        Stroke::through(end, d2, 0.12, half_width),
    ]
}

fn base_scene(width: u16, height: u16, focal_px: f64) -> SimScene {
    SimScene {
        width,
        height,
        focal_px,
        table_distance_m: 1.0,
        photometric: Photometric::default(),
        sensor: SensorModel::default(),
        ..SimScene::default()
    }
}

fn finish(mut scene: SimScene, axis: Vector3<f64>, rps: f64, center: Vector3<f64>, rot: f64, p: &SuiteParams, rng: &mut ChaCha8Rng) -> SimScene {
    let phase = rng.gen::<f64>() * TAU;
    scene.ball.spin_rad_s = (axis * rps * TAU).into();
    scene.ball.attitude_rotvec = (axis * phase).into();
    scene.logo = Logo {
        strokes: logo_strokes(center, rot, p.stroke_half_width),
    };
    scene.sensor.noise_hz_per_px = p.noise_hz_per_px;
    scene.duration_us = p.duration_us;
    scene.seed = rng.gen();
    scene.supersample_hz = (10.0 * scene.max_pixel_event_rate()).max(20_000.0).ceil();
    scene
}

/// Per-scene generator keyed by the suite seed and the scene name, so a
/// scene is the same whichever other scenes are built with it.
fn scene_rng(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Builds the named scenes of a suite. Spin phase and noise seeds come from
/// `params.seed` and the scene name.
pub fn scenario_suite(kind: SuiteKind, params: &SuiteParams) -> Result<Vec<NamedScene>, UnknownScenario> {
    let mut out = Vec::new();
    match kind {
        SuiteKind::Spinner => {
            for &placement in &params.placements {
                if !(1..=7).contains(&placement.0) {
                    return Err(UnknownScenario(placement.to_string()));
                }
                for &spin in &params.kinds {
                    for &rps in &params.spins_rps {
                        let name = format!("spinner/{placement}/{spin}/{rps}rps");
                        let mut rng = scene_rng(params.seed, &name);
                        let axis = spin.axis(params.sidespin_tilt_deg);
                        let (center, rot) = placement.layout(&axis);
                        let mut scene = base_scene(160, 120, 800.0);
                        scene.ball = Ball {
                            center_m: [0.0, 0.0, 0.5],
                            ..Ball::default()
                        };
                        let scene = finish(scene, axis, rps, center, rot, params, &mut rng);
                        out.push(NamedScene {
                            name,
                            suite: kind,
                            kind: spin,
                            rps,
                            placement: Some(placement),
                            velocity_setting: None,
                            scene,
                        });
                    }
                }
            }
        }
        SuiteKind::Thrower => {
            for &setting in &params.velocity_settings {
                let speed = thrower_speed(setting)?;
                for &spin in &params.kinds {
                    for &rps in &params.spins_rps {
                        let name = format!("thrower/v{setting}/{spin}/{rps}rps");
                        let mut rng = scene_rng(params.seed, &name);
                        let axis = spin.axis(params.sidespin_tilt_deg);
                        let mut scene = base_scene(640, 360, 1000.0);
                        let z = 1.0;
                        let dir = rng.gen_range(-0.15..0.15f64);
                        let span_m = 0.5 * 640.0 / 1000.0 * z;
                        let flight_us = ((2.0 * span_m - 0.1) / speed * 1e6) as u64;
                        scene.ball = Ball {
                            center_m: [-span_m + 0.05, -0.4 * dir, z],
                            velocity_m_s: [speed * dir.cos(), speed * dir.sin(), 0.0],
                            ..Ball::default()
                        };
                        let mut p = params.clone();
                        p.duration_us = params.duration_us.min(flight_us);
                        let scene = finish(scene, axis, rps, Vector3::z(), 0.0, &p, &mut rng);
                        out.push(NamedScene {
                            name,
                            suite: kind,
                            kind: spin,
                            rps,
                            placement: None,
                            velocity_setting: Some(setting),
                            scene,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Builds one scene from its suite name, e.g. `spinner/ball-1/topspin/50rps`
/// or `thrower/v15/sidespin/25rps`. Suite-wide settings (duration, noise,
/// seed, ...) come from `params`; the name overrides the lists.
pub fn scenario_by_name(name: &str, params: &SuiteParams) -> Result<NamedScene, UnknownScenario> {
    let bad = || UnknownScenario(name.to_string());
    let parts: Vec<&str> = name.split('/').collect();
    let [suite, where_, spin, rps] = parts[..] else {
        return Err(bad());
    };
    let suite: SuiteKind = suite.parse().map_err(|_| bad())?;
    let kind: SpinKind = spin.parse().map_err(|_| bad())?;
    let rps: f64 = rps.strip_suffix("rps").and_then(|r| r.parse().ok()).ok_or_else(bad)?;
    let mut p = SuiteParams {
        spins_rps: vec![rps],
        kinds: vec![kind],
        ..params.clone()
    };
    match suite {
        SuiteKind::Spinner => p.placements = vec![where_.parse().map_err(|_| bad())?],
        SuiteKind::Thrower => {
            p.velocity_settings = vec![where_.strip_prefix('v').and_then(|v| v.parse().ok()).ok_or_else(bad)?]
        }
    }
    let mut scenes = scenario_suite(suite, &p)?;
    match scenes.pop() {
        Some(s) if s.name == name => Ok(s),
        _ => Err(bad()),
    }
}
