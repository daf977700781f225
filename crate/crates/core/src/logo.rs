//! Logo-event extraction: keep events strictly inside the tracked ball disc
//! (shrunk by a rim pad) and re-express them relative to the ball centre.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{
    bin_header, encode_record, parse_csv_header, read_bin_header, read_records, EventError, EventStream, Format,
    Polarity, SensorGeometry,
};
use crate::tracker::TrackRecord;

pub const LOGO_BIN_MAGIC: &[u8; 4] = b"EVL1";
/// Fixed-point scale of `u`, `v` in the BIN codec (1/64 px).
pub const LOGO_FIXED_SCALE: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogoEvent {
    pub t: u64,
    /// `x_e − x_b(t_e)`, px.
    pub u: f64,
    /// `y_e − y_b(t_e)`, px.
    pub v: f64,
    pub polarity: Polarity,
}

/// Logo events with the geometry of the sensor they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LogoStream {
    pub geometry: SensorGeometry,
    pub events: Vec<LogoEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// Rim pad in pixels; `None` uses `max(2, 0.1·r)`.
    pub pad: Option<f64>,
    /// Furthest an event may lie past the last tick and still be placed.
    pub max_extrapolation_us: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            pad: None,
            max_extrapolation_us: 10_000,
        }
    }
}

impl ExtractionConfig {
    pub fn pad_for(&self, r: f64) -> f64 {
        self.pad.unwrap_or_else(|| (0.1 * r).max(2.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("time {t_us} µs is outside the track range")]
pub struct OutOfTrackRange {
    pub t_us: u64,
}

/// Ball centre and radius at `t_e`, extrapolated from the latest tick at or
/// before `t_e` with that tick's velocity.
pub fn ball_position_at(track: &[TrackRecord], t_e: u64, max_extrapolation_us: u64) -> Result<(f64, f64, f64), OutOfTrackRange> {
    let i = track.partition_point(|s| s.t_us <= t_e);
    if i == 0 {
        return Err(OutOfTrackRange { t_us: t_e });
    }
    let s = &track[i - 1];
    if i == track.len() && t_e - s.t_us > max_extrapolation_us {
        return Err(OutOfTrackRange { t_us: t_e });
    }
    Ok(extrapolate(s, t_e))
}

fn extrapolate(s: &TrackRecord, t_e: u64) -> (f64, f64, f64) {
    let dt = (t_e - s.t_us) as f64 * 1e-6;
    (s.x + s.vx * dt, s.y + s.vy * dt, s.r)
}

/// Keeps the events with `(x_e − x_b)² + (y_e − y_b)² < (r − pad)²`.
/// Events the track does not cover are skipped.
pub fn extract_logo_events(stream: &EventStream, track: &[TrackRecord], cfg: &ExtractionConfig) -> LogoStream {
    let mut out = Vec::new();
    let mut i = 0usize;
    for e in stream.events() {
        while i < track.len() && track[i].t_us <= e.t {
            i += 1;
        }
        if i == 0 {
            continue;
        }
        let s = &track[i - 1];
        if i == track.len() && e.t - s.t_us > cfg.max_extrapolation_us {
            break;
        }
        let (xb, yb, r) = extrapolate(s, e.t);
        let lim = r - cfg.pad_for(r);
        if lim <= 0.0 {
            continue;
        }
        let u = e.x as f64 - xb;
        let v = e.y as f64 - yb;
        if u * u + v * v < lim * lim {
            out.push(LogoEvent {
                t: e.t,
                u,
                v,
                polarity: e.polarity,
            });
        }
    }
    LogoStream {
        geometry: stream.geometry(),
        events: out,
    }
}

pub fn read_logo(path: &Path, format: Format) -> Result<LogoStream, EventError> {
    let file = BufReader::new(File::open(path)?);
    match format {
        Format::Csv => read_logo_csv(file),
        Format::Bin => read_logo_bin(file),
    }
}

pub fn write_logo(logo: &LogoStream, path: &Path, format: Format) -> Result<(), EventError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_logo_csv(logo, &mut out)?,
        Format::Bin => write_logo_bin(logo, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

/// `# width,height` header, then `t,u,v,p` rows.
pub fn write_logo_csv<W: Write>(logo: &LogoStream, out: &mut W) -> io::Result<()> {
    writeln!(out, "# {},{}", logo.geometry.width, logo.geometry.height)?;
    for e in &logo.events {
        writeln!(out, "{},{},{},{}", e.t, e.u, e.v, e.polarity.bit())?;
    }
    Ok(())
}

pub fn read_logo_csv<R: BufRead>(input: R) -> Result<LogoStream, EventError> {
    let mut geometry = None;
    let mut events: Vec<LogoEvent> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| EventError::Parse { line: i + 1, message };
        if geometry.is_none() {
            geometry = Some(parse_csv_header(line, i + 1)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", f.len())));
        }
        let t = f[0].parse::<u64>().map_err(|e| err(format!("t: {e}")))?;
        let u = f[1].parse::<f64>().map_err(|e| err(format!("u: {e}")))?;
        let v = f[2].parse::<f64>().map_err(|e| err(format!("v: {e}")))?;
        let p = f[3].parse::<u8>().map_err(|e| err(format!("p: {e}")))?;
        let polarity = Polarity::from_bit(p).ok_or_else(|| err(format!("polarity must be 0 or 1, got {p}")))?;
        if let Some(prev) = events.last() {
            if t < prev.t {
                return Err(EventError::Order {
                    index: events.len(),
                    prev: prev.t,
                    t,
                });
            }
        }
        events.push(LogoEvent { t, u, v, polarity });
    }
    let geometry = geometry.ok_or(EventError::Parse {
        line: 1,
        message: "missing '# width,height' header".into(),
    })?;
    Ok(LogoStream { geometry, events })
}

fn to_fixed(x: f64) -> io::Result<u16> {
    let q = (x * LOGO_FIXED_SCALE).round();
    if q < i16::MIN as f64 || q > i16::MAX as f64 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("offset {x} px out of fixed-point range")));
    }
    Ok(q as i16 as u16)
}

fn from_fixed(bits: u16) -> f64 {
    bits as i16 as f64 / LOGO_FIXED_SCALE
}

/// Same 16-byte header and record stride as the event BIN codec, with `u`
/// and `v` stored as signed 1/64-px fixed point in the x/y slots.
pub fn write_logo_bin<W: Write>(logo: &LogoStream, out: &mut W) -> io::Result<()> {
    out.write_all(&bin_header(LOGO_BIN_MAGIC, logo.geometry))?;
    for e in &logo.events {
        out.write_all(&encode_record(e.t, to_fixed(e.u)?, to_fixed(e.v)?, e.polarity))?;
    }
    Ok(())
}

pub fn read_logo_bin<R: Read>(mut input: R) -> Result<LogoStream, EventError> {
    let geometry = read_bin_header(&mut input, LOGO_BIN_MAGIC)?;
    let mut events: Vec<LogoEvent> = Vec::new();
    read_records(&mut input, |index, t, u, v, p| {
        let polarity = Polarity::from_bit(p).ok_or_else(|| EventError::Parse {
            line: index + 1,
            message: format!("record {index}: polarity byte {p}"),
        })?;
        if let Some(prev) = events.last() {
            if t < prev.t {
                return Err(EventError::Order { index, prev: prev.t, t });
            }
        }
        events.push(LogoEvent {
            t,
            u: from_fixed(u),
            v: from_fixed(v),
            polarity,
        });
        Ok(())
    })?;
    Ok(LogoStream { geometry, events })
}
