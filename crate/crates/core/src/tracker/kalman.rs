//! Constant-velocity Kalman filter over `[x, y, ẋ, ẏ, r]`.
//!
//! Only position and radius are observed; the velocity is corrected through
//! the position/velocity cross-covariance.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

pub type StateVector = SVector<f64, 5>;
pub type Covariance = SMatrix<f64, 5, 5>;
pub type Observation = SMatrix<f64, 3, 5>;

/// Filter state after a predict or update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    /// `[x_b, y_b, ẋ_b, ẏ_b, r]` in pixels and pixels/s.
    pub x: StateVector,
    pub p: Covariance,
    /// Time of the last predict/update, microseconds.
    pub t_us: u64,
}

impl TrackState {
    pub fn position(&self) -> (f64, f64) {
        (self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.x[2], self.x[3])
    }

    pub fn radius(&self) -> f64 {
        self.x[4]
    }

    pub fn cov_trace(&self) -> f64 {
        self.p.trace()
    }

    pub fn predicted_measurement(&self) -> Vector3<f64> {
        observation() * self.x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Process noise diagonal added per predict.
    pub q: [f64; 5],
    /// Measurement noise diagonal for `[x, y, r]`.
    pub r: [f64; 3],
    /// Initial velocity variance, (px/s)².
    pub p0_velocity: f64,
    /// Mahalanobis distance beyond which a measurement is rejected.
    pub gate: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            q: [1.0, 1.0, 1e4, 1e4, 0.1],
            r: [0.25, 0.25, 1.0],
            p0_velocity: 1e6,
            gate: 5.0,
        }
    }
}

impl NoiseParams {
    pub fn q_matrix(&self) -> Covariance {
        Covariance::from_diagonal(&StateVector::from_column_slice(&self.q))
    }

    pub fn r_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from_column_slice(&self.r))
    }
}

/// State transition for a step of `dt` seconds.
pub fn transition(dt: f64) -> Covariance {
    let mut f = Covariance::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

/// Selects `[x, y, r]` from the state.
pub fn observation() -> Observation {
    let mut h = Observation::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    h[(2, 4)] = 1.0;
    h
}

fn symmetrize(p: &Covariance) -> Covariance {
    (p + p.transpose()) * 0.5
}

/// Propagates the state by `dt` seconds: `x ← F x`, `P ← F P Fᵀ + Q`.
pub fn kf_predict(state: &TrackState, dt: f64, q: &Covariance) -> TrackState {
    assert!(dt >= 0.0, "negative prediction step");
    let f = transition(dt);
    TrackState {
        x: f * state.x,
        p: symmetrize(&(f * state.p * f.transpose() + q)),
        t_us: state.t_us + (dt * 1e6).round() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateReject {
    pub distance: f64,
}

/// Mahalanobis distance of `z` from the predicted measurement.
pub fn mahalanobis(state: &TrackState, z: &Vector3<f64>, r: &Matrix3<f64>) -> f64 {
    let h = observation();
    let s = h * state.p * h.transpose() + r;
    let innov = z - h * state.x;
    match s.cholesky() {
        Some(ch) => innov.dot(&ch.solve(&innov)).max(0.0).sqrt(),
        None => f64::INFINITY,
    }
}

/// Gated measurement update (Joseph form).
pub fn kf_update(state: &TrackState, z: &Vector3<f64>, noise: &NoiseParams) -> Result<TrackState, GateReject> {
    let r = noise.r_matrix();
    let d = mahalanobis(state, z, &r);
    if !(d <= noise.gate) {
        return Err(GateReject { distance: d });
    }
    Ok(update_unchecked(state, z, &r))
}

fn update_unchecked(state: &TrackState, z: &Vector3<f64>, r: &Matrix3<f64>) -> TrackState {
    let h = observation();
    let s = h * state.p * h.transpose() + r;
    let s_inv = s.try_inverse().expect("innovation covariance is positive definite");
    let k = state.p * h.transpose() * s_inv;
    let innov = z - h * state.x;
    let i_kh = Covariance::identity() - k * h;
    let p = i_kh * state.p * i_kh.transpose() + k * r * k.transpose();
    TrackState {
        x: state.x + k * innov,
        p: symmetrize(&p),
        t_us: state.t_us,
    }
}

/// Starts a track from two detections `dt` seconds apart; the velocity is
/// their finite difference.
pub fn initialize(first: Vector3<f64>, second: Vector3<f64>, dt: f64, t_us: u64, noise: &NoiseParams) -> TrackState {
    let vx = (second[0] - first[0]) / dt;
    let vy = (second[1] - first[1]) / dt;
    let x = StateVector::from_column_slice(&[second[0], second[1], vx, vy, second[2]]);
    let p = Covariance::from_diagonal(&StateVector::from_column_slice(&[
        noise.r[0],
        noise.r[1],
        noise.p0_velocity,
        noise.p0_velocity,
        noise.r[2],
    ]));
    TrackState { x, p, t_us }
}
