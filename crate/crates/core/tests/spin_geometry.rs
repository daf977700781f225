use std::f64::consts::TAU;
use std::time::Instant;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinflow_core::logo::LogoEvent;
use spinflow_core::spin::{
    aggregate, axis_error_deg, estimate_spin, flow_to_spin, solve_normal_flow, surface_normal, Aggregation, FlowVector, Mode, SpinConfig,
};
use spinflow_core::tracker::TrackRecord;
use spinflow_core::Polarity;

/// Image flow of the visible surface point at ball-centric `(u, v)` for a
/// rigid rotation `omega` (rad/s), from `v = ω × p` projected onto the image.
fn analytic_flow(omega: &Vector3<f64>, u: f64, v: f64, r_px: f64) -> FlowVector {
    let p = Vector3::new(u, v, (r_px * r_px - u * u - v * v).sqrt());
    let vel = omega.cross(&p);
    FlowVector { u, v, fx: vel.x, fy: vel.y }
}

fn random_omega(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let axis = Unit::new_normalize(Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    axis.into_inner() * rng.gen_range(10.0..100.0) * TAU
}

fn random_point(rng: &mut ChaCha8Rng, r_px: f64, e_rz_min: f64) -> (f64, f64) {
    loop {
        let (u, v) = (rng.gen_range(-r_px..r_px), rng.gen_range(-r_px..r_px));
        let rho2 = (u * u + v * v) / (r_px * r_px);
        if rho2 < 1.0 && (1.0 - rho2).sqrt() >= e_rz_min {
            return (u, v);
        }
    }
}

#[test]
fn random_rotations_are_recovered_exactly() {
    let start = Instant::now();
    let cfg = SpinConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let omega = random_omega(&mut rng);
        let r_px = rng.gen_range(10.0..80.0);
        let mut flows = Vec::new();
        let mut normals = Vec::new();
        let mut omegas = Vec::new();
        for _ in 0..12 {
            let (u, v) = random_point(&mut rng, r_px, cfg.e_rz_min);
            let f = analytic_flow(&omega, u, v, r_px);
            let e = surface_normal(u, v, r_px, cfg.e_rz_min).unwrap();
            // A single point sees the spin component perpendicular to its
            // normal; the radial component leaves no image motion.
            let perp = omega - e * e.dot(&omega);
            let w = flow_to_spin(&f, r_px, &cfg).unwrap();
            assert!((w - perp).norm() <= 1e-6 * perp.norm(), "point {u},{v}: {w} vs {perp}");
            flows.push(f);
            normals.push(e);
            omegas.push(w);
        }
        let nf = solve_normal_flow(&flows, &normals, r_px, 0.0);
        assert!((nf - omega).norm() <= 1e-6 * omega.norm(), "normal flow {nf} vs {omega}");
        let ls = aggregate(&omegas, &normals, Aggregation::LeastSquares, 0.0);
        assert!((ls - omega).norm() <= 1e-6 * omega.norm(), "least squares {ls} vs {omega}");
    }
    assert!(start.elapsed().as_secs_f64() < 1.0, "took {:?}", start.elapsed());
}

#[test]
fn rim_points_are_rejected() {
    let cfg = SpinConfig::default();
    let r = 20.0;
    let f = analytic_flow(&Vector3::new(0.0, 0.0, 100.0), 19.9, 0.0, r);
    assert!(flow_to_spin(&f, r, &cfg).is_err());
}

/// Logo events of a stripe pattern rotating with `omega`, sampled on a pixel
/// grid: each pixel fires when a stripe boundary passes under it.
fn rotating_stripes(omega: &Vector3<f64>, r_px: f64, t0: u64, duration_us: u64) -> Vec<LogoEvent> {
    let axis = Unit::new_normalize(*omega);
    let rate = omega.norm();
    let stripes = 6.0;
    let mut events = Vec::new();
    let n = r_px as i32;
    for y in -n..=n {
        for x in -n..=n {
            let (u, v) = (x as f64, y as f64);
            let rho2 = (u * u + v * v) / (r_px * r_px);
            if rho2 >= 0.95 {
                continue;
            }
            let p = Vector3::new(u, v, (r_px * r_px - u * u - v * v).sqrt()) / r_px;
            let mut prev = None;
            for dt in (0..duration_us).step_by(20) {
                let rot = UnitQuaternion::from_axis_angle(&axis, -rate * dt as f64 * 1e-6);
                let q = rot * p;
                let band = ((q.y.atan2(q.x) + std::f64::consts::PI) / TAU * stripes).floor() as i64 + (q.z * 3.0).floor() as i64;
                let on = band.rem_euclid(2) == 0;
                if prev.is_some_and(|b| b != on) {
                    events.push(LogoEvent {
                        t: t0 + dt,
                        u,
                        v,
                        polarity: if on { Polarity::On } else { Polarity::Off },
                    });
                }
                prev = Some(on);
            }
        }
    }
    events.sort_by_key(|e| e.t);
    events
}

fn static_track(r: f64, t0: u64, t1: u64) -> Vec<TrackRecord> {
    (t0..=t1)
        .step_by(5_000)
        .map(|t| TrackRecord {
            t_us: t,
            x: 100.0,
            y: 100.0,
            vx: 0.0,
            vy: 0.0,
            r,
            cov_trace: 0.0,
        })
        .collect()
}

#[test]
fn time_shift_does_not_change_the_estimate() {
    let omega = Vector3::new(0.3, 1.0, 0.2).normalize() * 40.0 * TAU;
    let r = 24.0;
    let cfg = SpinConfig {
        t_acc_us: Some(2_500),
        ..SpinConfig::default()
    };
    let a = rotating_stripes(&omega, r, 0, 20_000);
    let shift = 1_234_567;
    let b: Vec<LogoEvent> = a.iter().map(|e| LogoEvent { t: e.t + shift, ..*e }).collect();
    let ra = estimate_spin(&a, &static_track(r, 0, 20_000), &cfg, Mode::Fast).unwrap();
    let rb = estimate_spin(&b, &static_track(r, shift, shift + 20_000), &cfg, Mode::Fast).unwrap();
    assert_eq!(ra.estimate.omega, rb.estimate.omega);
    assert_eq!(ra.windows.len(), rb.windows.len());
}

#[test]
fn rotating_stripes_give_the_spin() {
    let omega = Vector3::new(0.3, 1.0, 0.2).normalize() * 40.0 * TAU;
    let cfg = SpinConfig {
        t_acc_us: Some(2_500),
        ..SpinConfig::default()
    };
    let r = estimate_spin(&rotating_stripes(&omega, 24.0, 0, 20_000), &static_track(24.0, 0, 20_000), &cfg, Mode::Fast).unwrap();
    assert!(axis_error_deg(&r.estimate.omega_vec(), &omega) < 5.0);
    assert!((r.estimate.magnitude_rps - 40.0).abs() < 6.0, "{}", r.estimate.magnitude_rps);
}

proptest! {
    #[test]
    fn single_point_spin_is_perpendicular_to_normal(
        wx in -600.0f64..600.0, wy in -600.0f64..600.0, wz in -600.0f64..600.0,
        a in 0.0f64..TAU, rho in 0.0f64..0.98, r_px in 5.0f64..100.0,
    ) {
        let cfg = SpinConfig::default();
        let omega = Vector3::new(wx, wy, wz);
        let (u, v) = (rho * r_px * a.cos(), rho * r_px * a.sin());
        let f = analytic_flow(&omega, u, v, r_px);
        let e = surface_normal(u, v, r_px, 0.0).unwrap();
        let w = flow_to_spin(&f, r_px, &SpinConfig { e_rz_min: 0.0, ..cfg }).unwrap();
        prop_assert!(w.dot(&e).abs() <= 1e-9 * (1.0 + omega.norm()));
    }
}
