//! Spin estimation from logo events.
//!
//! The flow path slices the logo stream into `t_acc` windows, fits local
//! flow, lifts each flow vector onto the sphere and aggregates the per-point
//! angular velocities. The event-rate path recovers the magnitude alone from
//! the periodic modulation of the logo event rate.

pub mod flow;
pub mod rate;

use std::f64::consts::TAU;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logo::LogoEvent;
use crate::tracker::TrackRecord;

pub use flow::{flow_to_spin, plane_fit_flow, plane_fit_flow_in, surface_normal, FlowVector};
pub use rate::{estimate_magnitude_event_rate, estimate_magnitude_event_rate_in, magnitude_from_transitions, RateConfig, RateEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpinError {
    #[error("expected spin must be positive, got {rps} rps")]
    InvalidSpin { rps: f64 },
    #[error("no pixel qualified for a flow fit")]
    NoFlow,
    #[error("point too close to the limb (e_r,z = {e_rz:.3})")]
    SingularPoint { e_rz: f64 },
    #[error("no window produced enough flow ({windows} windows, best had {best_flows} flows)")]
    InsufficientFlow { windows: usize, best_flows: usize },
    #[error("event rate shows no periodicity ({transitions} transitions)")]
    NoPeriodicity { transitions: usize },
    #[error("empty track")]
    EmptyTrack,
}

/// How per-point angular velocities combine into one window estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Arithmetic mean of the per-point `e_r × v / R`.
    Mean,
    /// Component-wise median of the per-point estimates.
    Median,
    /// Solves `Σ(I − e eᵀ) ω = Σ ω_i`: each point only constrains the spin
    /// perpendicular to its normal, so this recovers the full vector.
    LeastSquares,
    /// Treats each flow vector as normal flow (the component across the
    /// local edge) and solves the linear constraints `n̂ · r (ω × e)_xy = |f|`
    /// for `ω` in the least-squares sense.
    NormalFlow,
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "median" => Ok(Self::Median),
            "least-squares" => Ok(Self::LeastSquares),
            "normal-flow" => Ok(Self::NormalFlow),
            _ => Err(format!("unknown aggregation {s:?} (mean|median|least-squares|normal-flow)")),
        }
    }
}

/// Timestamp a pixel contributes to the plane fit when it fired several
/// times in one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PixelTime {
    Latest,
    /// Mean of the latest burst (events closer than the burst gap); an edge
    /// crossing that fires several events is placed at its midpoint.
    BurstMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Fast,
    Refined,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Self::Fast),
            "refined" => Ok(Self::Refined),
            _ => Err(format!("unknown mode {s:?} (fast|refined)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpinConfig {
    /// Fixed accumulation window; `None` derives it from the spin rate.
    pub t_acc_us: Option<u64>,
    /// Median expected spin used by the fast mode, rps.
    pub expected_rps: f64,
    /// Side of the plane-fit neighbourhood, px.
    pub neighborhood: usize,
    pub min_neighbors: usize,
    pub pixel_time: PixelTime,
    /// Largest gap inside one burst, as a fraction of `t_acc`.
    pub burst_gap_frac: f64,
    /// RMS plane residual limit as a fraction of `t_acc`.
    pub residual_frac: f64,
    /// Smallest accepted squared timestamp gradient, (µs/px)².
    pub gradient_floor: f64,
    pub max_flow_px_s: Option<f64>,
    pub e_rz_min: f64,
    pub ball_radius_m: f64,
    /// Valid flows a window needs to count.
    pub min_flows: usize,
    pub aggregation: Aggregation,
    /// Tikhonov weight for least-squares aggregation, per flow.
    pub ls_regularization: f64,
    pub rate: RateConfig,
}

impl Default for SpinConfig {
    fn default() -> Self {
        Self {
            t_acc_us: None,
            expected_rps: 50.0,
            neighborhood: 5,
            min_neighbors: 8,
            pixel_time: PixelTime::BurstMean,
            burst_gap_frac: 0.25,
            residual_frac: 0.25,
            gradient_floor: 1e-9,
            max_flow_px_s: None,
            e_rz_min: 0.15,
            ball_radius_m: 0.02,
            min_flows: 5,
            aggregation: Aggregation::NormalFlow,
            ls_regularization: 0.01,
            rate: RateConfig::default(),
        }
    }
}

/// One tenth of the rotation period, µs.
pub fn choose_t_acc(expected_rps: f64) -> Result<u64, SpinError> {
    if !(expected_rps > 0.0) || !expected_rps.is_finite() {
        return Err(SpinError::InvalidSpin { rps: expected_rps });
    }
    Ok((1e6 / (10.0 * expected_rps)).round().max(1.0) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinEstimate {
    /// Angular velocity, rad/s, camera frame (x right, y down, z towards
    /// the camera).
    pub omega: [f64; 3],
    pub magnitude_rps: f64,
    pub axis: [f64; 3],
    pub n_flows: usize,
    pub window: [u64; 2],
}

impl SpinEstimate {
    pub fn from_omega(omega: Vector3<f64>, n_flows: usize, window: [u64; 2]) -> Self {
        let norm = omega.norm();
        let axis = if norm > 0.0 { omega / norm } else { Vector3::zeros() };
        Self {
            omega: omega.into(),
            magnitude_rps: norm / TAU,
            axis: axis.into(),
            n_flows,
            window,
        }
    }

    pub fn omega_vec(&self) -> Vector3<f64> {
        Vector3::from(self.omega)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinReport {
    pub mode: Mode,
    pub estimate: SpinEstimate,
    pub t_acc_us: u64,
    /// Windows with enough valid flow, in time order.
    pub windows: Vec<SpinEstimate>,
    pub windows_total: usize,
    /// Event-rate magnitude (refined mode only), rps.
    pub rate_rps: Option<f64>,
    /// Agreement of the window axes: length of their mean unit vector.
    pub confidence: f64,
}

/// Combines per-point angular velocities (with the surface normals they were
/// measured at) into one vector. `NormalFlow` needs the flows themselves and
/// is handled by [`solve_normal_flow`]; here it falls back to `LeastSquares`.
pub fn aggregate(omegas: &[Vector3<f64>], normals: &[Vector3<f64>], how: Aggregation, regularization: f64) -> Vector3<f64> {
    let n = omegas.len();
    if n == 0 {
        return Vector3::zeros();
    }
    match how {
        Aggregation::Mean => omegas.iter().sum::<Vector3<f64>>() / n as f64,
        Aggregation::Median => Vector3::from_fn(|k, _| {
            let mut c: Vec<f64> = omegas.iter().map(|w| w[k]).collect();
            c.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                c[n / 2]
            } else {
                0.5 * (c[n / 2 - 1] + c[n / 2])
            }
        }),
        Aggregation::LeastSquares | Aggregation::NormalFlow => {
            let mut a = Matrix3::identity() * (regularization * n as f64);
            let mut b = Vector3::zeros();
            for (w, e) in omegas.iter().zip(normals) {
                a += Matrix3::identity() - e * e.transpose();
                b += w;
            }
            a.cholesky().map_or_else(|| b / n as f64, |ch| ch.solve(&b))
        }
    }
}

/// Least-squares spin from normal-flow constraints. Each flow `f` at normal
/// `e` contributes `(f/|f|) · r_px (ω × e)_xy = |f|`.
pub fn solve_normal_flow(flows: &[FlowVector], normals: &[Vector3<f64>], r_px: f64, regularization: f64) -> Vector3<f64> {
    let (a, b) = normal_flow_system(flows, normals, r_px);
    solve_regularized(a, b, regularization)
}

/// Normal equations `(Σ rowᵀrow, Σ row·|f|)` of the normal-flow constraints.
fn normal_flow_system(flows: &[FlowVector], normals: &[Vector3<f64>], r_px: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (f, e) in flows.iter().zip(normals) {
        let s = f.fx.hypot(f.fy);
        if !(s > 0.0) {
            continue;
        }
        let (nx, ny) = (f.fx / s, f.fy / s);
        let row = Vector3::new(-ny * e.z, nx * e.z, ny * e.x - nx * e.y) * r_px;
        a += row * row.transpose();
        b += row * s;
    }
    (a, b)
}

fn solve_regularized(mut a: Matrix3<f64>, b: Vector3<f64>, regularization: f64) -> Vector3<f64> {
    let scale = a.trace() / 3.0;
    if !(scale > 0.0) {
        return Vector3::zeros();
    }
    a += Matrix3::identity() * (regularization * scale);
    a.cholesky().map_or_else(Vector3::zeros, |ch| ch.solve(&b))
}

fn radius_at(track: &[TrackRecord], t: u64) -> f64 {
    let i = track.partition_point(|s| s.t_us <= t);
    track[i.saturating_sub(1)].r
}

/// Angular velocity in consecutive `t_acc_us` windows starting at the first
/// logo event. The overall estimate pools the normal-flow constraints of all
/// valid windows, or averages the windows for the other aggregations.
pub fn estimate_spin_flow(
    logo: &[LogoEvent],
    track: &[TrackRecord],
    t_acc_us: u64,
    cfg: &SpinConfig,
) -> Result<(SpinEstimate, Vec<SpinEstimate>, usize), SpinError> {
    if track.is_empty() {
        return Err(SpinError::EmptyTrack);
    }
    let (Some(first), Some(last)) = (logo.first(), logo.last()) else {
        return Err(SpinError::InsufficientFlow {
            windows: 0,
            best_flows: 0,
        });
    };
    let t_acc = t_acc_us.max(1);
    let n_windows = ((last.t - first.t) / t_acc + 1) as usize;
    let mut windows = Vec::new();
    let mut best_flows = 0;
    let mut start = 0usize;
    let mut pooled = (Matrix3::zeros(), Vector3::zeros());
    for k in 0..n_windows {
        let t0 = first.t + k as u64 * t_acc;
        let t1 = t0 + t_acc;
        let end = start + logo[start..].partition_point(|e| e.t < t1);
        if end == start {
            continue;
        }
        let margin = t_acc / 2;
        let lo = logo.partition_point(|e| e.t + margin < t0);
        let hi = logo.partition_point(|e| e.t < t1 + margin);
        start = end;
        let Ok(flows) = plane_fit_flow_in(&logo[lo..hi], t0, t1, t_acc, cfg) else {
            continue;
        };
        let r_px = radius_at(track, (t0 + t1) / 2);
        let mut omegas = Vec::with_capacity(flows.len());
        let mut normals = Vec::with_capacity(flows.len());
        let mut used = Vec::with_capacity(flows.len());
        for f in &flows {
            if let Ok(w) = flow_to_spin(f, r_px, cfg) {
                omegas.push(w);
                normals.push(surface_normal(f.u, f.v, r_px, cfg.e_rz_min)?);
                used.push(*f);
            }
        }
        best_flows = best_flows.max(omegas.len());
        if omegas.len() < cfg.min_flows.max(1) {
            continue;
        }
        let w = match cfg.aggregation {
            Aggregation::NormalFlow => {
                let (a, b) = normal_flow_system(&used, &normals, r_px);
                pooled.0 += a;
                pooled.1 += b;
                solve_regularized(a, b, cfg.ls_regularization)
            }
            how => aggregate(&omegas, &normals, how, cfg.ls_regularization),
        };
        windows.push(SpinEstimate::from_omega(w, omegas.len(), [t0, t1]));
    }
    if windows.is_empty() {
        return Err(SpinError::InsufficientFlow {
            windows: n_windows,
            best_flows,
        });
    }
    // Normal-flow constraints are pooled over all windows, which constrains
    // directions a single window's edges may leave open.
    let mean = match cfg.aggregation {
        Aggregation::NormalFlow => solve_regularized(pooled.0, pooled.1, cfg.ls_regularization / windows.len() as f64),
        _ => windows.iter().map(SpinEstimate::omega_vec).sum::<Vector3<f64>>() / windows.len() as f64,
    };
    let n_flows = windows.iter().map(|w| w.n_flows).sum();
    let span = [windows[0].window[0], windows[windows.len() - 1].window[1]];
    Ok((SpinEstimate::from_omega(mean, n_flows, span), windows, n_windows))
}

fn axis_consistency(windows: &[SpinEstimate]) -> f64 {
    let axes: Vec<Vector3<f64>> = windows.iter().map(|w| Vector3::from(w.axis)).collect();
    if axes.is_empty() {
        return 0.0;
    }
    (axes.iter().sum::<Vector3<f64>>() / axes.len() as f64).norm()
}

/// Fast mode: `t_acc` from the expected spin, flow gives the full vector.
/// Refined mode: the event rate gives the magnitude and `t_acc`; flow gives
/// the axis.
pub fn estimate_spin(logo: &[LogoEvent], track: &[TrackRecord], cfg: &SpinConfig, mode: Mode) -> Result<SpinReport, SpinError> {
    if track.is_empty() {
        return Err(SpinError::EmptyTrack);
    }
    let (t_acc_us, rate_rps, (flow_est, windows, windows_total)) = match mode {
        Mode::Fast => {
            let t_acc = cfg.t_acc_us.map_or_else(|| choose_t_acc(cfg.expected_rps), Ok)?;
            (t_acc, None, estimate_spin_flow(logo, track, t_acc, cfg)?)
        }
        Mode::Refined => {
            let times: Vec<u64> = logo.iter().map(|e| e.t).collect();
            let span = (track[0].t_us, track[track.len() - 1].t_us);
            let rate = estimate_magnitude_event_rate_in(&times, span, &cfg.rate)?.rps;
            let t_acc = cfg.t_acc_us.map_or_else(|| choose_t_acc(rate), Ok)?;
            let flow = estimate_spin_flow(logo, track, t_acc, cfg)?;
            (t_acc, Some(rate), flow)
        }
    };
    let estimate = match rate_rps {
        Some(rps) => {
            let axis = Vector3::from(flow_est.axis);
            SpinEstimate::from_omega(axis * rps * TAU, flow_est.n_flows, flow_est.window)
        }
        None => flow_est,
    };
    Ok(SpinReport {
        mode,
        estimate,
        t_acc_us,
        confidence: axis_consistency(&windows),
        windows,
        windows_total,
        rate_rps,
    })
}

/// Angle between two spin axes in degrees.
pub fn axis_error_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 180.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_acc_is_a_tenth_of_the_period() {
        assert_eq!(choose_t_acc(50.0), Ok(2000));
        assert_eq!(choose_t_acc(100.0), Ok(1000));
        assert!(matches!(choose_t_acc(0.0), Err(SpinError::InvalidSpin { .. })));
    }

    #[test]
    fn least_squares_recovers_full_vector() {
        let w = Vector3::new(30.0, -120.0, 250.0);
        let normals: Vec<Vector3<f64>> = [(0.3, 0.1), (-0.4, 0.2), (0.1, -0.5), (0.0, 0.0), (0.5, 0.5)]
            .iter()
            .map(|&(x, y)| Vector3::new(x, y, (1.0f64 - x * x - y * y).sqrt()))
            .collect();
        let omegas: Vec<Vector3<f64>> = normals.iter().map(|e| w - e * e.dot(&w)).collect();
        let got = aggregate(&omegas, &normals, Aggregation::LeastSquares, 0.0);
        assert!((got - w).norm() / w.norm() < 1e-12);
        let mean = aggregate(&omegas, &normals, Aggregation::Mean, 0.0);
        assert!((mean - w).norm() / w.norm() > 0.1);
    }

    #[test]
    fn empty_logo_is_insufficient_flow() {
        let track = [TrackRecord {
            t_us: 0,
            x: 0.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            r: 20.0,
            cov_trace: 0.0,
        }];
        assert!(matches!(
            estimate_spin_flow(&[], &track, 2000, &SpinConfig::default()),
            Err(SpinError::InsufficientFlow { .. })
        ));
    }

    #[test]
    fn axis_error_of_opposite_axes() {
        let a = Vector3::new(1.0, 0.0, 0.0);
        assert!((axis_error_deg(&a, &-a) - 180.0).abs() < 1e-9);
        assert!(axis_error_deg(&a, &(a * 3.0)).abs() < 1e-6);
    }
}
