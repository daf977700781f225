//! Event datatypes, the ordered stream container and the two file codecs.
//!
//! CSV: first line `# width,height`, then one `t_us,x,y,p` record per line
//! with `p` = 1 for ON and 0 for OFF.
//!
//! BIN: a 16-byte header (`EVS1`, u16 width, u16 height, 8 reserved bytes)
//! followed by little-endian 16-byte records (u64 t_us, u16 x, u16 y, u8 p,
//! 3 pad bytes).

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub(crate) const BIN_MAGIC: &[u8; 4] = b"EVS1";
pub(crate) const RECORD_LEN: usize = 16;
pub(crate) const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Polarity::Off => -1.0,
            Polarity::On => 1.0,
        }
    }
}

/// One sensor spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Microseconds since the stream epoch.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::Geometry { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event {index}: timestamp {t} precedes previous timestamp {prev}")]
    Order { index: usize, prev: u64, t: u64 },
    #[error("event {index}: pixel ({x}, {y}) outside {width}x{height} sensor")]
    Bounds {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error("invalid sensor geometry {width}x{height}")]
    Geometry { width: u16, height: u16 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Time-ordered events over a declared sensor geometry.
///
/// Construction validates bounds and ordering, so every `EventStream` in
/// circulation satisfies both invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self, EventError> {
        validate(&geometry, &events)?;
        Ok(Self { geometry, events })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
        }
    }

    /// Builds a stream from a subsequence of an already valid stream.
    pub(crate) fn from_subsequence(geometry: SensorGeometry, events: Vec<Event>) -> Self {
        debug_assert!(validate(&geometry, &events).is_ok());
        Self { geometry, events }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `[first, last]` timestamps, if any.
    pub fn time_span(&self) -> Option<(u64, u64)> {
        Some((self.events.first()?.t, self.events.last()?.t))
    }

    /// Events with `t0 <= t < t1`, located by binary search.
    pub fn window(&self, t0: u64, t1: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        &self.events[lo..hi.max(lo)]
    }

    /// Same events shifted by `dt` microseconds.
    pub fn shifted(&self, dt: u64) -> Self {
        let events = self.events.iter().map(|e| Event { t: e.t + dt, ..*e }).collect();
        Self {
            geometry: self.geometry,
            events,
        }
    }
}

fn validate(geometry: &SensorGeometry, events: &[Event]) -> Result<(), EventError> {
    if geometry.width == 0 || geometry.height == 0 {
        return Err(EventError::Geometry {
            width: geometry.width,
            height: geometry.height,
        });
    }
    let mut prev = 0u64;
    for (index, e) in events.iter().enumerate() {
        if !geometry.contains(e.x, e.y) {
            return Err(EventError::Bounds {
                index,
                x: e.x,
                y: e.y,
                width: geometry.width,
                height: geometry.height,
            });
        }
        if index > 0 && e.t < prev {
            return Err(EventError::Order { index, prev, t: e.t });
        }
        prev = e.t;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Bin,
}

impl Format {
    /// `.csv` selects CSV; anything else is treated as BIN.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Bin,
        }
    }
}

pub fn read_events(path: &Path, format: Format) -> Result<EventStream, EventError> {
    let file = BufReader::new(File::open(path)?);
    match format {
        Format::Csv => read_csv(file),
        Format::Bin => read_bin(file),
    }
}

pub fn write_events(stream: &EventStream, path: &Path, format: Format) -> Result<(), EventError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(stream, &mut out)?,
        Format::Bin => write_bin(stream, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(stream: &EventStream, out: &mut W) -> io::Result<()> {
    let g = stream.geometry;
    writeln!(out, "# {},{}", g.width, g.height)?;
    for e in &stream.events {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.bit())?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<EventStream, EventError> {
    let mut lines = input.lines().enumerate();
    let geometry = loop {
        let Some((i, line)) = lines.next() else {
            return Err(EventError::Parse {
                line: 1,
                message: "missing '# width,height' header".into(),
            });
        };
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        break parse_csv_header(line, i + 1)?;
    };

    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        events.push(parse_csv_record(line, i + 1)?);
    }
    EventStream::new(geometry, events)
}

pub(crate) fn parse_csv_header(line: &str, lineno: usize) -> Result<SensorGeometry, EventError> {
    let err = |message: String| EventError::Parse {
        line: lineno,
        message,
    };
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| err(format!("expected '# width,height' header, got {line:?}")))?;
    let (w, h) = body
        .trim()
        .split_once(',')
        .ok_or_else(|| err(format!("malformed header {line:?}")))?;
    let width = w
        .trim()
        .parse::<u16>()
        .map_err(|e| err(format!("width: {e}")))?;
    let height = h
        .trim()
        .parse::<u16>()
        .map_err(|e| err(format!("height: {e}")))?;
    SensorGeometry::new(width, height)
}

fn parse_csv_record(line: &str, lineno: usize) -> Result<Event, EventError> {
    let err = |message: String| EventError::Parse {
        line: lineno,
        message,
    };
    let mut fields = line.split(',').map(str::trim);
    let mut next = |name: &str| {
        fields
            .next()
            .ok_or_else(|| err(format!("missing field '{name}'")))
    };
    let t = next("t")?.parse::<u64>().map_err(|e| err(format!("t: {e}")))?;
    let x = next("x")?.parse::<u16>().map_err(|e| err(format!("x: {e}")))?;
    let y = next("y")?.parse::<u16>().map_err(|e| err(format!("y: {e}")))?;
    let p = next("p")?.parse::<u8>().map_err(|e| err(format!("p: {e}")))?;
    if fields.next().is_some() {
        return Err(err("trailing fields".into()));
    }
    let polarity = Polarity::from_bit(p).ok_or_else(|| err(format!("polarity must be 0 or 1, got {p}")))?;
    Ok(Event { t, x, y, polarity })
}

pub fn write_bin<W: Write>(stream: &EventStream, out: &mut W) -> io::Result<()> {
    out.write_all(&bin_header(BIN_MAGIC, stream.geometry))?;
    for e in &stream.events {
        out.write_all(&encode_record(e.t, e.x, e.y, e.polarity))?;
    }
    Ok(())
}

pub fn read_bin<R: Read>(mut input: R) -> Result<EventStream, EventError> {
    let geometry = read_bin_header(&mut input, BIN_MAGIC)?;
    let mut events = Vec::new();
    read_records(&mut input, |index, t, x, y, p| {
        let polarity = Polarity::from_bit(p).ok_or_else(|| EventError::Parse {
            line: index + 1,
            message: format!("record {index}: polarity byte {p}"),
        })?;
        events.push(Event { t, x, y, polarity });
        Ok(())
    })?;
    EventStream::new(geometry, events)
}

pub(crate) fn bin_header(magic: &[u8; 4], g: SensorGeometry) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(magic);
    h[4..6].copy_from_slice(&g.width.to_le_bytes());
    h[6..8].copy_from_slice(&g.height.to_le_bytes());
    h
}

pub(crate) fn read_bin_header<R: Read>(input: &mut R, magic: &[u8; 4]) -> Result<SensorGeometry, EventError> {
    let mut h = [0u8; HEADER_LEN];
    input.read_exact(&mut h).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => EventError::Parse {
            line: 0,
            message: "truncated header".into(),
        },
        _ => EventError::Io(e),
    })?;
    if &h[0..4] != magic {
        return Err(EventError::Parse {
            line: 0,
            message: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&h[0..4]),
                String::from_utf8_lossy(magic)
            ),
        });
    }
    let width = u16::from_le_bytes([h[4], h[5]]);
    let height = u16::from_le_bytes([h[6], h[7]]);
    SensorGeometry::new(width, height)
}

pub(crate) fn encode_record(t: u64, x: u16, y: u16, polarity: Polarity) -> [u8; RECORD_LEN] {
    let mut r = [0u8; RECORD_LEN];
    r[0..8].copy_from_slice(&t.to_le_bytes());
    r[8..10].copy_from_slice(&x.to_le_bytes());
    r[10..12].copy_from_slice(&y.to_le_bytes());
    r[12] = polarity.bit();
    r
}

/// Streams fixed-stride records into `sink` as `(index, t, x, y, p)`.
pub(crate) fn read_records<R: Read>(
    input: &mut R,
    mut sink: impl FnMut(usize, u64, u16, u16, u8) -> Result<(), EventError>,
) -> Result<(), EventError> {
    let mut buf = vec![0u8; RECORD_LEN * 4096];
    let mut filled = 0usize;
    let mut index = 0usize;
    loop {
        let n = input.read(&mut buf[filled..])?;
        filled += n;
        let whole = filled / RECORD_LEN * RECORD_LEN;
        for r in buf[..whole].chunks_exact(RECORD_LEN) {
            let t = u64::from_le_bytes(r[0..8].try_into().unwrap());
            let x = u16::from_le_bytes([r[8], r[9]]);
            let y = u16::from_le_bytes([r[10], r[11]]);
            sink(index, t, x, y, r[12])?;
            index += 1;
        }
        buf.copy_within(whole..filled, 0);
        filled -= whole;
        if n == 0 {
            break;
        }
    }
    if filled != 0 {
        return Err(EventError::Parse {
            line: index + 1,
            message: format!("trailing {filled} bytes do not form a full record"),
        });
    }
    Ok(())
}
