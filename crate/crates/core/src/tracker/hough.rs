//! Hough circle transform over EROS surfaces.
//!
//! Every surface pixel above `edge_floor` votes, weighted by its value, for
//! the centres lying on a circle of each candidate radius around it. Centres
//! are binned on a `cell`-pixel grid. Peaks are refined to sub-cell accuracy
//! from the 3×3 accumulator neighbourhood and, optionally, by a weighted
//! geometric circle fit to the rim pixels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::surfaces::{ErosSurface, Rect};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleDetection {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    /// Weighted accumulator votes at the peak.
    pub score: f64,
}

impl CircleDetection {
    /// Votes per unit of circumference at the detected radius.
    pub fn support(&self) -> f64 {
        self.score / (2.0 * PI * self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughParams {
    pub r_min: f64,
    pub r_max: f64,
    /// Minimum peak votes as a fraction of the circumference `2πr`.
    pub vote_threshold: f64,
    /// Centre grid step in pixels.
    pub cell: usize,
    /// Surface values at or below this do not vote.
    pub edge_floor: f32,
    pub max_candidates: usize,
    /// Geometric least-squares refinement after the accumulator peak.
    pub refine_fit: bool,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            r_min: 6.0,
            r_max: 60.0,
            vote_threshold: 0.35,
            cell: 2,
            edge_floor: 0.05,
            max_candidates: 4,
            refine_fit: true,
        }
    }
}

struct EdgePoint {
    x: f64,
    y: f64,
    w: f64,
}

fn edge_points(surface: &ErosSurface, rect: Rect, floor: f32) -> Vec<EdgePoint> {
    let mut pts = Vec::new();
    for y in rect.y0..=rect.y1 {
        for x in rect.x0..=rect.x1 {
            let v = surface.get(x, y);
            if v > floor {
                pts.push(EdgePoint {
                    x: x as f64,
                    y: y as f64,
                    w: v as f64,
                });
            }
        }
    }
    pts
}

/// Detects circles whose centre lies inside `roi` (whole surface if `None`).
///
/// Radii outside `[3, min(width, height) / 2)` are clamped into that range.
pub fn hough_circles(surface: &ErosSurface, params: &HoughParams, roi: Option<Rect>) -> Vec<CircleDetection> {
    let (w, h) = (surface.width(), surface.height());
    let r_lo = params.r_min.max(3.0).floor() as usize;
    let r_hi = (params.r_max.ceil() as usize).min(w.min(h).saturating_sub(1) / 2);
    if r_hi < r_lo {
        return Vec::new();
    }
    let roi = roi.unwrap_or(Rect {
        x0: 0,
        y0: 0,
        x1: w - 1,
        y1: h - 1,
    });
    let roi = Rect {
        x0: roi.x0.min(w - 1),
        y0: roi.y0.min(h - 1),
        x1: roi.x1.min(w - 1),
        y1: roi.y1.min(h - 1),
    };
    // Rims of circles centred in the ROI reach r_hi beyond it.
    let vote_rect = Rect {
        x0: roi.x0.saturating_sub(r_hi + 1),
        y0: roi.y0.saturating_sub(r_hi + 1),
        x1: (roi.x1 + r_hi + 1).min(w - 1),
        y1: (roi.y1 + r_hi + 1).min(h - 1),
    };
    let pts = edge_points(surface, vote_rect, params.edge_floor);
    if pts.is_empty() {
        return Vec::new();
    }

    let cell = params.cell.max(1) as f64;
    let nx = ((roi.x1 - roi.x0) as f64 / cell).floor() as usize + 1;
    let ny = ((roi.y1 - roi.y0) as f64 / cell).floor() as usize + 1;
    let nr = r_hi - r_lo + 1;
    let mut acc = vec![0f32; nx * ny * nr];
    let idx = |ix: usize, iy: usize, ir: usize| (ir * ny + iy) * nx + ix;

    // Centre offsets in cells for each sub-cell residue of the voting pixel,
    // so the vote loop is integer only.
    let c = params.cell.max(1);
    let pts_cell: Vec<(i64, i64, usize, f32)> = pts
        .iter()
        .map(|p| {
            let (ax, ay) = (p.x as i64 - roi.x0 as i64, p.y as i64 - roi.y0 as i64);
            let c = c as i64;
            (ax.div_euclid(c), ay.div_euclid(c), (ay.rem_euclid(c) * c + ax.rem_euclid(c)) as usize, p.w as f32)
        })
        .collect();
    let mut offsets: Vec<Vec<(i64, i64)>> = vec![Vec::new(); c * c];
    for ir in 0..nr {
        let r = (r_lo + ir) as f64;
        let n = ((2.0 * PI * r / cell).ceil() as usize).max(8);
        for (k, table) in offsets.iter_mut().enumerate() {
            let (rx, ry) = ((k % c) as f64, (k / c) as f64);
            table.clear();
            table.extend((0..n).map(|j| {
                let a = 2.0 * PI * j as f64 / n as f64;
                (((rx - r * a.cos()) / cell).round() as i64, ((ry - r * a.sin()) / cell).round() as i64)
            }));
        }
        let gain = (2.0 * PI * r / cell / n as f64) as f32;
        let plane = &mut acc[ir * nx * ny..(ir + 1) * nx * ny];
        for &(qx, qy, k, w) in &pts_cell {
            let vote = w * gain;
            for &(dx, dy) in &offsets[k] {
                let (ix, iy) = (qx + dx, qy + dy);
                if ix < 0 || iy < 0 || ix >= nx as i64 || iy >= ny as i64 {
                    continue;
                }
                plane[iy as usize * nx + ix as usize] += vote;
            }
        }
    }

    // Peaks: 3×3×3 local maxima above threshold.
    let mut peaks: Vec<(f32, usize, usize, usize)> = Vec::new();
    for ir in 0..nr {
        let r = (r_lo + ir) as f64;
        let min_votes = (params.vote_threshold * 2.0 * PI * r) as f32;
        for iy in 0..ny {
            for ix in 0..nx {
                let v = acc[idx(ix, iy, ir)];
                if v < min_votes || v <= 0.0 {
                    continue;
                }
                let mut is_max = true;
                'nb: for dr in -1i32..=1 {
                    for dy in -1i32..=1 {
                        for dx in -1i32..=1 {
                            if dr == 0 && dy == 0 && dx == 0 {
                                continue;
                            }
                            let (jx, jy, jr) = (ix as i32 + dx, iy as i32 + dy, ir as i32 + dr);
                            if jx < 0 || jy < 0 || jr < 0 || jx >= nx as i32 || jy >= ny as i32 || jr >= nr as i32 {
                                continue;
                            }
                            let u = acc[idx(jx as usize, jy as usize, jr as usize)];
                            // Strict on one side so plateaus yield one peak.
                            let earlier = (jr, jy, jx) < (ir as i32, iy as i32, ix as i32);
                            if u > v || (earlier && u == v) {
                                is_max = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_max {
                    peaks.push((v, ix, iy, ir));
                }
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.3, a.2, a.1).cmp(&(b.3, b.2, b.1))));

    let mut out: Vec<CircleDetection> = Vec::new();
    for (score, ix, iy, ir) in peaks {
        if out.len() >= params.max_candidates {
            break;
        }
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let (jx, jy) = (ix as i32 + dx, iy as i32 + dy);
                if jx < 0 || jy < 0 || jx >= nx as i32 || jy >= ny as i32 {
                    continue;
                }
                let v = acc[idx(jx as usize, jy as usize, ir)] as f64;
                sx += v * jx as f64;
                sy += v * jy as f64;
                sw += v;
            }
        }
        let cx = roi.x0 as f64 + cell * sx / sw;
        let cy = roi.y0 as f64 + cell * sy / sw;
        let mut r = (r_lo + ir) as f64;
        if ir > 0 && ir + 1 < nr {
            let a = acc[idx(ix, iy, ir - 1)] as f64;
            let b = score as f64;
            let c = acc[idx(ix, iy, ir + 1)] as f64;
            let denom = a - 2.0 * b + c;
            if denom < 0.0 {
                r += (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
            }
        }
        let mut det = CircleDetection {
            cx,
            cy,
            r,
            score: score as f64,
        };
        if params.refine_fit {
            if let Some(fit) = refine_circle(&pts, &det, cell.max(1.5)) {
                det.cx = fit.0;
                det.cy = fit.1;
                det.r = fit.2;
            }
        }
        let min_sep = params.r_min.max(3.0);
        if out
            .iter()
            .any(|o| (o.cx - det.cx).hypot(o.cy - det.cy) < min_sep)
        {
            continue;
        }
        out.push(det);
    }
    out
}

/// Weighted geometric circle fit (Gauss-Newton) to the points within `band`
/// of the initial circle.
fn refine_circle(pts: &[EdgePoint], init: &CircleDetection, band: f64) -> Option<(f64, f64, f64)> {
    let (mut cx, mut cy, mut r) = (init.cx, init.cy, init.r);
    let sel: Vec<&EdgePoint> = pts
        .iter()
        .filter(|p| ((p.x - cx).hypot(p.y - cy) - r).abs() <= band)
        .collect();
    if sel.len() < 8 {
        return None;
    }
    for _ in 0..8 {
        // Normal equations for residual d_i - r, d_i = |p_i - c|.
        let mut jtj = nalgebra::Matrix3::<f64>::zeros();
        let mut jtr = nalgebra::Vector3::<f64>::zeros();
        for p in &sel {
            let (dx, dy) = (p.x - cx, p.y - cy);
            let d = dx.hypot(dy);
            if d < 1e-9 {
                continue;
            }
            let j = nalgebra::Vector3::new(-dx / d, -dy / d, -1.0);
            let res = d - r;
            jtj += p.w * j * j.transpose();
            jtr += p.w * j * res;
        }
        let step = jtj.lu().solve(&(-jtr))?;
        cx += step[0];
        cy += step[1];
        r += step[2];
        if step.norm() < 1e-6 {
            break;
        }
    }
    let moved = (cx - init.cx).hypot(cy - init.cy);
    if !r.is_finite() || r <= 0.0 || moved > band * 2.0 || (r - init.r).abs() > band * 2.0 {
        return None;
    }
    Some((cx, cy, r))
}

/// Sets every pixel within half a pixel of the circle to `value`.
///
/// Used by tests and benchmarks as a synthetic rim renderer.
pub fn render_rim(surface: &mut ErosSurface, cx: f64, cy: f64, r: f64, value: f32) {
    let (w, h) = (surface.width(), surface.height());
    let x0 = (cx - r - 1.0).floor().max(0.0) as usize;
    let y0 = (cy - r - 1.0).floor().max(0.0) as usize;
    let x1 = ((cx + r + 1.0).ceil() as usize).min(w - 1);
    let y1 = ((cy + r + 1.0).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = (x as f64 - cx).hypot(y as f64 - cy);
            if (d - r).abs() <= 0.5 {
                surface.set(x, y, value);
            }
        }
    }
}
