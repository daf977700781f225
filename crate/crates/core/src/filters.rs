//! Per-pixel burst filters.
//!
//! * STC drops the first event of every same-polarity burst at a pixel and
//!   passes the later burst members.
//! * TRAIL keeps the first event of a burst and drops same-polarity events
//!   that follow the last *kept* event within the window. A polarity change
//!   always passes.
//! * STC-cut-TRAIL chains the two so that one event per burst survives.
//!
//! All filters are single pass with O(1) state per pixel.

use serde::{Deserialize, Serialize};

use crate::events::{Event, EventStream, Polarity, SensorGeometry};

/// Default burst window, microseconds.
pub const DEFAULT_THRESHOLD_US: u64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub threshold_us: u64,
}

impl FilterConfig {
    pub fn new(threshold_us: u64) -> Option<Self> {
        (threshold_us > 0).then_some(Self { threshold_us })
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            threshold_us: DEFAULT_THRESHOLD_US,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Stc,
    Trail,
    StcCutTrail,
}

impl std::str::FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stc" => Ok(FilterKind::Stc),
            "trail" => Ok(FilterKind::Trail),
            "stc-cut-trail" => Ok(FilterKind::StcCutTrail),
            other => Err(format!("unknown filter kind {other:?} (stc, trail, stc-cut-trail)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    t: u64,
    polarity: Option<Polarity>,
}

const EMPTY: Slot = Slot { t: 0, polarity: None };

/// Last seen (or last kept) event per pixel.
#[derive(Debug, Clone)]
pub struct PixelMemory {
    geometry: SensorGeometry,
    slots: Vec<Slot>,
}

impl PixelMemory {
    pub fn new(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            slots: vec![EMPTY; geometry.pixel_count()],
        }
    }

    fn slot(&mut self, e: &Event) -> &mut Slot {
        let i = self.geometry.index(e.x, e.y);
        &mut self.slots[i]
    }
}

/// Streaming STC filter.
#[derive(Debug, Clone)]
pub struct Stc {
    cfg: FilterConfig,
    last: PixelMemory,
}

impl Stc {
    pub fn new(geometry: SensorGeometry, cfg: FilterConfig) -> Self {
        Self {
            cfg,
            last: PixelMemory::new(geometry),
        }
    }

    pub fn accept(&mut self, e: &Event) -> bool {
        let threshold = self.cfg.threshold_us;
        let slot = self.last.slot(e);
        let pass = slot.polarity == Some(e.polarity) && e.t - slot.t <= threshold;
        *slot = Slot {
            t: e.t,
            polarity: Some(e.polarity),
        };
        pass
    }
}

/// Streaming TRAIL filter; the window is anchored at the last kept event.
#[derive(Debug, Clone)]
pub struct Trail {
    cfg: FilterConfig,
    kept: PixelMemory,
}

impl Trail {
    pub fn new(geometry: SensorGeometry, cfg: FilterConfig) -> Self {
        Self {
            cfg,
            kept: PixelMemory::new(geometry),
        }
    }

    pub fn accept(&mut self, e: &Event) -> bool {
        let threshold = self.cfg.threshold_us;
        let slot = self.kept.slot(e);
        let pass = match slot.polarity {
            None => true,
            Some(p) if p != e.polarity => true,
            Some(_) => e.t - slot.t > threshold,
        };
        if pass {
            *slot = Slot {
                t: e.t,
                polarity: Some(e.polarity),
            };
        }
        pass
    }
}

/// STC followed by TRAIL, both fed event by event.
#[derive(Debug, Clone)]
pub struct StcCutTrail {
    stc: Stc,
    trail: Trail,
}

impl StcCutTrail {
    pub fn new(geometry: SensorGeometry, cfg: FilterConfig) -> Self {
        Self {
            stc: Stc::new(geometry, cfg),
            trail: Trail::new(geometry, cfg),
        }
    }

    pub fn accept(&mut self, e: &Event) -> bool {
        self.stc.accept(e) && self.trail.accept(e)
    }
}

fn run(stream: &EventStream, mut accept: impl FnMut(&Event) -> bool) -> EventStream {
    let kept = stream.events().iter().filter(|e| accept(e)).copied().collect();
    EventStream::from_subsequence(stream.geometry(), kept)
}

pub fn stc_filter(stream: &EventStream, cfg: FilterConfig) -> EventStream {
    let mut f = Stc::new(stream.geometry(), cfg);
    run(stream, |e| f.accept(e))
}

pub fn trail_filter(stream: &EventStream, cfg: FilterConfig) -> EventStream {
    let mut f = Trail::new(stream.geometry(), cfg);
    run(stream, |e| f.accept(e))
}

pub fn stc_cut_trail(stream: &EventStream, cfg: FilterConfig) -> EventStream {
    let mut f = StcCutTrail::new(stream.geometry(), cfg);
    run(stream, |e| f.accept(e))
}

pub fn apply(kind: FilterKind, stream: &EventStream, cfg: FilterConfig) -> EventStream {
    match kind {
        FilterKind::Stc => stc_filter(stream, cfg),
        FilterKind::Trail => trail_filter(stream, cfg),
        FilterKind::StcCutTrail => stc_cut_trail(stream, cfg),
    }
}
