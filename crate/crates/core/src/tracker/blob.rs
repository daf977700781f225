//! Reference ball positions from long-exposure event frames.
//!
//! Each `t_acc` window is accumulated into a binary occupancy image; the
//! largest 8-connected component gives the ball centroid and an
//! area-equivalent radius.

use crate::events::EventStream;
use crate::surfaces::accumulate;

pub const DEFAULT_BLOB_T_ACC_US: u64 = 10_000;
pub const DEFAULT_MIN_AREA: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobObservation {
    pub t0_us: u64,
    pub t1_us: u64,
    pub cx: f64,
    pub cy: f64,
    pub r_equiv: f64,
    pub area: usize,
}

impl BlobObservation {
    pub fn t_mid_us(&self) -> f64 {
        (self.t0_us + self.t1_us) as f64 / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no blob of at least {min_area} px in window [{t0_us}, {t1_us})")]
pub struct NoBlob {
    pub t0_us: u64,
    pub t1_us: u64,
    pub min_area: usize,
}

/// One result per `t_acc` window, windows starting at the first event.
pub fn blob_oracle(stream: &EventStream, t_acc_us: u64, min_area: usize) -> Vec<Result<BlobObservation, NoBlob>> {
    let Some((first, last)) = stream.time_span() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut t0 = first;
    while t0 <= last {
        out.push(blob_in_window(stream, t0, t_acc_us, min_area));
        t0 += t_acc_us;
    }
    out
}

pub fn blob_in_window(stream: &EventStream, t0: u64, t_acc_us: u64, min_area: usize) -> Result<BlobObservation, NoBlob> {
    let frame = accumulate(stream, t0, t_acc_us);
    let g = frame.geometry;
    let (w, h) = (g.width as usize, g.height as usize);
    let occupied: Vec<bool> = frame.on.iter().zip(&frame.off).map(|(a, b)| a + b > 0).collect();
    let mut label = vec![false; w * h];
    let mut best: Option<(usize, f64, f64)> = None;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !occupied[start] || label[start] {
            continue;
        }
        label[start] = true;
        stack.push(start);
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            n += 1;
            sx += x as f64;
            sy += y as f64;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if occupied[j] && !label[j] {
                        label[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if best.map_or(true, |(bn, _, _)| n > bn) {
            best = Some((n, sx, sy));
        }
    }
    let t1 = t0 + t_acc_us;
    match best {
        Some((n, sx, sy)) if n >= min_area => Ok(BlobObservation {
            t0_us: t0,
            t1_us: t1,
            cx: sx / n as f64,
            cy: sy / n as f64,
            r_equiv: (n as f64 / std::f64::consts::PI).sqrt(),
            area: n,
        }),
        _ => Err(NoBlob {
            t0_us: t0,
            t1_us: t1,
            min_area,
        }),
    }
}
