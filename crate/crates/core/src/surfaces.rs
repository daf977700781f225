//! Event-to-image representations.

use std::io::{self, Write};

use crate::events::{Event, EventStream, Polarity, SensorGeometry};

/// Row-major single-channel image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Binary 8-bit PGM (P5), values clamped to `[0, 1]` and scaled to 255.
    pub fn write_pgm<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        out.write_all(&bytes)
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn full(g: SensorGeometry) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: g.width as usize - 1,
            y1: g.height as usize - 1,
        }
    }

    fn clip(self, g: SensorGeometry) -> Self {
        Self {
            x0: self.x0.min(g.width as usize - 1),
            y0: self.y0.min(g.height as usize - 1),
            x1: self.x1.min(g.width as usize - 1),
            y1: self.y1.min(g.height as usize - 1),
        }
    }
}

/// Per-pixel ON/OFF counts over `[t0, t0 + t_acc)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatedFrame {
    pub geometry: SensorGeometry,
    pub t0: u64,
    pub t_acc: u64,
    pub on: Vec<u32>,
    pub off: Vec<u32>,
}

impl AccumulatedFrame {
    pub fn count(&self, x: u16, y: u16) -> u32 {
        let i = self.geometry.index(x, y);
        self.on[i] + self.off[i]
    }

    pub fn total(&self) -> u64 {
        self.on.iter().chain(&self.off).map(|&c| c as u64).sum()
    }

    /// Counts normalised by the busiest pixel.
    pub fn to_image(&self) -> GrayImage {
        let g = self.geometry;
        let mut img = GrayImage::zeros(g.width as usize, g.height as usize);
        let max = self.on.iter().zip(&self.off).map(|(a, b)| a + b).max().unwrap_or(0);
        if max > 0 {
            for (i, v) in img.data.iter_mut().enumerate() {
                *v = (self.on[i] + self.off[i]) as f32 / max as f32;
            }
        }
        img
    }
}

/// Counts the events with `t0 <= t < t0 + t_acc`. `t_acc` must be positive.
pub fn accumulate(stream: &EventStream, t0: u64, t_acc: u64) -> AccumulatedFrame {
    assert!(t_acc > 0, "accumulation time must be positive");
    let g = stream.geometry();
    let mut frame = AccumulatedFrame {
        geometry: g,
        t0,
        t_acc,
        on: vec![0; g.pixel_count()],
        off: vec![0; g.pixel_count()],
    };
    for e in stream.window(t0, t0.saturating_add(t_acc)) {
        let i = g.index(e.x, e.y);
        match e.polarity {
            Polarity::On => frame.on[i] += 1,
            Polarity::Off => frame.off[i] += 1,
        }
    }
    frame
}

/// Most recent event time per pixel and polarity, rendered with a linear
/// decay of length `tau_us`.
#[derive(Debug, Clone)]
pub struct LinearTimeSurface {
    geometry: SensorGeometry,
    pub tau_us: u64,
    last_on: Vec<Option<u64>>,
    last_off: Vec<Option<u64>>,
}

impl LinearTimeSurface {
    pub fn new(geometry: SensorGeometry, tau_us: u64) -> Self {
        assert!(tau_us > 0, "decay constant must be positive");
        Self {
            geometry,
            tau_us,
            last_on: vec![None; geometry.pixel_count()],
            last_off: vec![None; geometry.pixel_count()],
        }
    }

    pub fn update(&mut self, e: &Event) {
        let i = self.geometry.index(e.x, e.y);
        match e.polarity {
            Polarity::On => self.last_on[i] = Some(e.t),
            Polarity::Off => self.last_off[i] = Some(e.t),
        }
    }

    fn value(&self, last: Option<u64>, t_now: u64) -> f32 {
        match last {
            Some(t) => {
                let age = t_now.saturating_sub(t) as f64;
                (1.0 - age / self.tau_us as f64).max(0.0) as f32
            }
            None => 0.0,
        }
    }

    /// Both polarities merged (pixelwise max).
    pub fn render(&self, t_now: u64) -> GrayImage {
        let g = self.geometry;
        let mut img = GrayImage::zeros(g.width as usize, g.height as usize);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = self.value(self.last_on[i], t_now).max(self.value(self.last_off[i], t_now));
        }
        img
    }

    pub fn render_polarity(&self, t_now: u64, polarity: Polarity) -> GrayImage {
        let g = self.geometry;
        let src = match polarity {
            Polarity::On => &self.last_on,
            Polarity::Off => &self.last_off,
        };
        let mut img = GrayImage::zeros(g.width as usize, g.height as usize);
        for (v, &last) in img.data.iter_mut().zip(src) {
            *v = self.value(last, t_now);
        }
        img
    }
}

pub const DEFAULT_K_EROS: usize = 10;

/// Default EROS decay: a pixel whose neighbourhood receives `k` events decays
/// to 0.3.
pub fn default_gamma(k_eros: usize) -> f32 {
    0.3f64.powf(1.0 / k_eros as f64) as f32
}

/// Exponential reduced ordinal surface.
///
/// Each event multiplies its `k × k` neighbourhood by `gamma` and then sets
/// its own pixel to 1. Values therefore stay in `[0, 1]` and edges stay
/// sharp regardless of their speed.
#[derive(Debug, Clone)]
pub struct ErosSurface {
    geometry: SensorGeometry,
    k: usize,
    gamma: f32,
    data: Vec<f32>,
}

impl ErosSurface {
    pub fn new(geometry: SensorGeometry, k: usize, gamma: f32) -> Self {
        assert!(k >= 1, "k_eros must be at least 1");
        assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
        Self {
            geometry,
            k,
            gamma,
            data: vec![0.0; geometry.pixel_count()],
        }
    }

    pub fn with_defaults(geometry: SensorGeometry) -> Self {
        Self::new(geometry, DEFAULT_K_EROS, default_gamma(DEFAULT_K_EROS))
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> f32 {
        self.gamma
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn width(&self) -> usize {
        self.geometry.width as usize
    }

    pub fn height(&self) -> usize {
        self.geometry.height as usize
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width() + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        let w = self.width();
        self.data[y * w + x] = v.clamp(0.0, 1.0);
    }

    pub fn clear(&mut self) {
        self.data.fill(0.0);
    }

    pub fn update(&mut self, e: &Event) {
        let (w, h) = (self.width(), self.height());
        let (x, y) = (e.x as usize, e.y as usize);
        let half = self.k / 2;
        let x0 = x.saturating_sub(half);
        let y0 = y.saturating_sub(half);
        let x1 = (x + (self.k - 1 - half)).min(w - 1);
        let y1 = (y + (self.k - 1 - half)).min(h - 1);
        for yy in y0..=y1 {
            let row = &mut self.data[yy * w + x0..=yy * w + x1];
            for v in row {
                *v *= self.gamma;
            }
        }
        self.data[y * w + x] = 1.0;
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width(),
            height: self.height(),
            data: self.data.clone(),
        }
    }

    #[inline]
    fn fg(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 || x >= self.width() as isize || y >= self.height() as isize {
            return false;
        }
        self.data[y as usize * self.width() + x as usize] > 0.0
    }

    /// Tests the 4×4 hit-or-miss placement with top-left corner `(x0, y0)`
    /// and clears its 2×2 centre on a match. Returns true on a match.
    fn try_placement(&mut self, x0: isize, y0: isize) -> bool {
        let mut any_center = false;
        for dy in 0..4 {
            for dx in 0..4 {
                let inner = (1..=2).contains(&dx) && (1..=2).contains(&dy);
                let fg = self.fg(x0 + dx, y0 + dy);
                if inner {
                    any_center |= fg;
                } else if fg {
                    return false;
                }
            }
        }
        if !any_center {
            return false;
        }
        let w = self.width();
        for dy in 1..=2 {
            for dx in 1..=2 {
                let (x, y) = (x0 + dx, y0 + dy);
                if self.fg(x, y) {
                    self.data[y as usize * w + x as usize] = 0.0;
                }
            }
        }
        true
    }

    /// Hit-or-miss removal of isolated specks.
    ///
    /// The kernel is 4×4: a 2×2 foreground centre surrounded by a 12-cell
    /// background ring. Wherever the binarised surface (`value > 0`) has an
    /// empty ring around a non-empty centre, the centre is zeroed. Single
    /// pixels and any speck fitting inside 2×2 are removed; pixels outside
    /// the sensor count as background.
    pub fn clean_isolated(&mut self, region: Option<Rect>) -> usize {
        let r = region.unwrap_or_else(|| Rect::full(self.geometry)).clip(self.geometry);
        let mut matches = 0;
        // Placements whose centre intersects the region.
        for y0 in (r.y0 as isize - 2)..=(r.y1 as isize - 1) {
            for x0 in (r.x0 as isize - 2)..=(r.x1 as isize - 1) {
                if self.try_placement(x0, y0) {
                    matches += 1;
                }
            }
        }
        matches
    }

    /// Hit-or-miss restricted to the placements whose centre contains one of
    /// `pixels`. Equivalent to a full pass for surfaces whose only changes
    /// since the previous clean are at those pixels.
    pub fn clean_around(&mut self, pixels: impl IntoIterator<Item = (u16, u16)>) -> usize {
        let mut matches = 0;
        for (x, y) in pixels {
            let (x, y) = (x as isize, y as isize);
            if !self.fg(x, y) {
                continue;
            }
            'placements: for cy in [y - 2, y - 1] {
                for cx in [x - 2, x - 1] {
                    if self.try_placement(cx, cy) {
                        matches += 1;
                        break 'placements;
                    }
                }
            }
        }
        matches
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(w: u16, h: u16) -> SensorGeometry {
        SensorGeometry::new(w, h).unwrap()
    }

    #[test]
    fn accumulate_counts_window() {
        let s = EventStream::new(
            geom(8, 8),
            vec![
                Event::new(5, 3, 4, Polarity::On),
                Event::new(15, 3, 4, Polarity::Off),
            ],
        )
        .unwrap();
        let f = accumulate(&s, 0, 10);
        assert_eq!(f.on[f.geometry.index(3, 4)], 1);
        assert_eq!(f.total(), 1);
        let before = accumulate(&s, 0, 5);
        assert_eq!(before.total(), 0);
    }

    #[test]
    fn eros_sets_event_pixel_and_decays_neighbours() {
        let mut s = ErosSurface::new(geom(32, 32), 10, 0.8);
        s.update(&Event::new(0, 10, 10, Polarity::On));
        assert_eq!(s.get(10, 10), 1.0);
        assert_eq!(s.data().iter().filter(|&&v| v > 0.0).count(), 1);
        s.set(11, 10, 1.0);
        s.update(&Event::new(1, 10, 10, Polarity::On));
        assert!((s.get(11, 10) - 0.8).abs() < 1e-7);
        assert_eq!(s.get(10, 10), 1.0);
    }

    #[test]
    fn eros_window_is_k_wide_and_clipped() {
        let mut s = ErosSurface::new(geom(32, 32), 10, 0.5);
        for y in 0..32 {
            for x in 0..32 {
                s.set(x, y, 1.0);
            }
        }
        s.update(&Event::new(0, 16, 16, Polarity::On));
        let decayed = s.data().iter().filter(|&&v| v < 1.0).count();
        assert_eq!(decayed, 10 * 10 - 1);
        s.update(&Event::new(1, 0, 0, Polarity::On));
        assert_eq!(s.get(0, 0), 1.0);
    }

    #[test]
    fn default_gamma_value() {
        assert!((default_gamma(10) - 0.88649).abs() < 1e-4);
    }

    #[test]
    fn hit_or_miss_removes_single_pixel_and_2x2() {
        let mut s = ErosSurface::new(geom(16, 16), 10, 0.5);
        s.set(3, 3, 0.7);
        for (x, y) in [(9, 9), (10, 9), (9, 10), (10, 10)] {
            s.set(x, y, 1.0);
        }
        s.clean_isolated(None);
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hit_or_miss_keeps_larger_structures() {
        let mut s = ErosSurface::new(geom(16, 16), 10, 0.5);
        for x in 2..9 {
            s.set(x, 5, 1.0);
        }
        let before = s.data().to_vec();
        s.clean_isolated(None);
        assert_eq!(s.data(), &before[..]);
    }

    #[test]
    fn hit_or_miss_at_border() {
        let mut s = ErosSurface::new(geom(8, 8), 10, 0.5);
        s.set(0, 0, 1.0);
        s.set(7, 7, 1.0);
        s.clean_isolated(None);
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_surface_values() {
        let mut ts = LinearTimeSurface::new(geom(4, 4), 1000);
        ts.update(&Event::new(1000, 0, 0, Polarity::On));
        ts.update(&Event::new(1500, 1, 0, Polarity::Off));
        ts.update(&Event::new(2000, 2, 0, Polarity::On));
        let img = ts.render(2000);
        assert_eq!(img.get(0, 0), 0.0);
        assert!((img.get(1, 0) - 0.5).abs() < 1e-7);
        assert_eq!(img.get(2, 0), 1.0);
        assert_eq!(img.get(3, 3), 0.0);
    }

    #[test]
    fn pgm_header() {
        let mut buf = Vec::new();
        GrayImage::zeros(3, 2).write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(buf.len(), 11 + 6);
    }
}
