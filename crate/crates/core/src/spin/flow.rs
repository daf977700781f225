//! Local optical flow by timestamp plane fitting, and its lift onto the
//! sphere.

use nalgebra::{Matrix3, Vector3};

use super::{PixelTime, SpinConfig, SpinError};
use crate::events::Polarity;
use crate::logo::LogoEvent;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    /// Ball-centric location, px.
    pub u: f64,
    pub v: f64,
    /// Flow, px/s.
    pub fx: f64,
    pub fy: f64,
}

/// Per rounded ball-centric pixel: a timestamp (µs after `t_ref`) and the
/// offset it was observed at.
struct TimeMap {
    w: usize,
    h: usize,
    cells: Vec<Option<(f64, f64, f64)>>,
}

impl TimeMap {
    /// `keep` limits which pixel times are used; events outside it only
    /// complete bursts that straddle its ends.
    fn build(events: &[&LogoEvent], t_ref: u64, keep: (f64, f64), how: PixelTime, burst_gap: f64) -> Option<Self> {
        let mut bounds: Option<(i64, i64, i64, i64)> = None;
        for e in events {
            let (iu, iv) = (e.u.round() as i64, e.v.round() as i64);
            bounds = Some(match bounds {
                None => (iu, iv, iu, iv),
                Some((a, b, c, d)) => (a.min(iu), b.min(iv), c.max(iu), d.max(iv)),
            });
        }
        let (u0, v0, u1, v1) = bounds?;
        let (w, h) = ((u1 - u0 + 1) as usize, (v1 - v0 + 1) as usize);
        let in_keep = |t: f64| t >= keep.0 && t < keep.1;
        let mut cells: Vec<Option<(f64, f64, f64)>> = vec![None; w * h];
        // Running burst per pixel: (sum t, sum u, sum v, count, last t).
        let mut open = vec![(0.0, 0.0, 0.0, 0usize, f64::NEG_INFINITY); w * h];
        let close = |b: &(f64, f64, f64, usize, f64), cell: &mut Option<(f64, f64, f64)>| {
            if b.3 > 0 {
                let n = b.3 as f64;
                let m = (b.0 / n, b.1 / n, b.2 / n);
                if in_keep(m.0) {
                    *cell = Some(m);
                }
            }
        };
        for e in events {
            let i = (e.v.round() as i64 - v0) as usize * w + (e.u.round() as i64 - u0) as usize;
            let t = e.t as f64 - t_ref as f64;
            match how {
                PixelTime::Latest => {
                    if in_keep(t) {
                        cells[i] = Some((t, e.u, e.v));
                    }
                }
                PixelTime::BurstMean => {
                    let b = &mut open[i];
                    if t - b.4 > burst_gap {
                        close(b, &mut cells[i]);
                        *b = (0.0, 0.0, 0.0, 0, t);
                    }
                    *b = (b.0 + t, b.1 + e.u, b.2 + e.v, b.3 + 1, t);
                }
            }
        }
        if how == PixelTime::BurstMean {
            for (b, cell) in open.iter().zip(cells.iter_mut()) {
                close(b, cell);
            }
        }
        Some(Self { w, h, cells })
    }
}

/// Fits `t = a·u + b·v + c` around every active pixel of the per-polarity
/// timestamp maps and converts the gradient to a flow vector.
pub fn plane_fit_flow(events: &[LogoEvent], t_acc_us: u64, cfg: &SpinConfig) -> Result<Vec<FlowVector>, SpinError> {
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Err(SpinError::NoFlow);
    };
    plane_fit_flow_in(events, first.t, last.t + 1, t_acc_us, cfg)
}

/// As [`plane_fit_flow`], using only pixel times in `[t0, t1)`; events
/// outside that range give context to edge crossings cut by it.
pub fn plane_fit_flow_in(events: &[LogoEvent], t0: u64, t1: u64, t_acc_us: u64, cfg: &SpinConfig) -> Result<Vec<FlowVector>, SpinError> {
    let Some(t_ref) = events.first().map(|e| e.t) else {
        return Err(SpinError::NoFlow);
    };
    let keep = (t0 as f64 - t_ref as f64, t1 as f64 - t_ref as f64);
    let burst_gap = cfg.burst_gap_frac * t_acc_us as f64;
    let residual_max = cfg.residual_frac * t_acc_us as f64;
    let half = (cfg.neighborhood / 2) as i64;
    let mut flows = Vec::new();
    for pol in [Polarity::On, Polarity::Off] {
        let same: Vec<&LogoEvent> = events.iter().filter(|e| e.polarity == pol).collect();
        let Some(map) = TimeMap::build(&same, t_ref, keep, cfg.pixel_time, burst_gap) else {
            continue;
        };
        let mut pts: Vec<(f64, f64, f64)> = Vec::with_capacity(cfg.neighborhood * cfg.neighborhood);
        for cy in 0..map.h as i64 {
            for cx in 0..map.w as i64 {
                let Some((tc, uc, vc)) = map.cells[cy as usize * map.w + cx as usize] else {
                    continue;
                };
                pts.clear();
                for y in (cy - half).max(0)..=(cy + half).min(map.h as i64 - 1) {
                    for x in (cx - half).max(0)..=(cx + half).min(map.w as i64 - 1) {
                        if let Some((t, _, _)) = map.cells[y as usize * map.w + x as usize] {
                            pts.push(((x - cx) as f64, (y - cy) as f64, t - tc));
                        }
                    }
                }
                if pts.len() < cfg.min_neighbors + 1 {
                    continue;
                }
                let Some((a, b)) = fit_plane(&pts, residual_max) else {
                    continue;
                };
                let g2 = a * a + b * b;
                if g2 < cfg.gradient_floor {
                    continue;
                }
                let (fx, fy) = (a / g2 * 1e6, b / g2 * 1e6);
                if cfg.max_flow_px_s.is_some_and(|m| fx.hypot(fy) > m) {
                    continue;
                }
                flows.push(FlowVector { u: uc, v: vc, fx, fy });
            }
        }
    }
    if flows.is_empty() {
        return Err(SpinError::NoFlow);
    }
    Ok(flows)
}

/// Least-squares plane through `(du, dv, dt)`; returns the gradient
/// `(a, b)` in µs/px when the RMS residual is within `residual_max`.
fn fit_plane(pts: &[(f64, f64, f64)], residual_max: f64) -> Option<(f64, f64)> {
    let mut m = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for &(u, v, t) in pts {
        let row = Vector3::new(u, v, 1.0);
        m += row * row.transpose();
        rhs += row * t;
    }
    let sol = m.cholesky()?.solve(&rhs);
    let ss: f64 = pts
        .iter()
        .map(|&(u, v, t)| (sol[0] * u + sol[1] * v + sol[2] - t).powi(2))
        .sum();
    let rms = (ss / pts.len() as f64).sqrt();
    (rms <= residual_max).then_some((sol[0], sol[1]))
}

/// Unit surface normal under ball-centric pixel `(u, v)` for a ball of
/// radius `r_px`, or `SingularPoint` when `e_r,z` falls below `e_rz_min`.
pub fn surface_normal(u: f64, v: f64, r_px: f64, e_rz_min: f64) -> Result<Vector3<f64>, SpinError> {
    let rho2 = (u * u + v * v) / (r_px * r_px);
    let e_rz = (1.0 - rho2).max(0.0).sqrt();
    if !(e_rz >= e_rz_min) {
        return Err(SpinError::SingularPoint { e_rz });
    }
    Ok(Vector3::new(u / r_px, v / r_px, e_rz))
}

/// Lifts an image flow onto the sphere tangent plane and returns
/// `ω = e_r × v / R`, rad/s. Only the component of the spin perpendicular
/// to `e_r` is observable from a single point.
pub fn flow_to_spin(fv: &FlowVector, r_px: f64, cfg: &SpinConfig) -> Result<Vector3<f64>, SpinError> {
    let e = surface_normal(fv.u, fv.v, r_px, cfg.e_rz_min)?;
    let mpp = cfg.ball_radius_m / r_px;
    let vz = -(fv.fx * e.x + fv.fy * e.y) / e.z;
    let vel = Vector3::new(fv.fx, fv.fy, vz) * mpp;
    Ok(e.cross(&vel) / cfg.ball_radius_m)
}
