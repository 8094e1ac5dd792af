//! Event and label file formats.
//!
//! Binary events: 16-byte header (`"HSVTEVT1"`, u32 width, u32 height)
//! followed by 16-byte records `t:u64, x:u16, y:u16, p:i8, 3 zero bytes`.
//!
//! CSV events: header `t_us,x,y,p`, one event per line, `p ∈ {1, -1}`.
//!
//! Labels: `"HSVTLBL1"`, u32 count, then 24-byte records
//! `t:u64, x:u16, y:u16, w:u16, h:u16, class_id:u16, track_id:u16,
//! class_confidence:f32`. Everything little-endian.

use std::fmt::Write as _;
use std::path::Path;

use super::types::{BoxRecord, Event, EventStream, Polarity};
use crate::error::{Error, Result};

pub const EVENT_MAGIC: &[u8; 8] = b"HSVTEVT1";
pub const LABEL_MAGIC: &[u8; 8] = b"HSVTLBL1";
pub const EVENT_HEADER_BYTES: usize = 16;
pub const EVENT_RECORD_BYTES: usize = 16;
pub const LABEL_HEADER_BYTES: usize = 12;
pub const LABEL_RECORD_BYTES: usize = 24;
pub const CSV_HEADER: &str = "t_us,x,y,p";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Bin,
}

impl EventFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(EventFormat::Csv),
            "bin" => Ok(EventFormat::Bin),
            other => Err(Error::invalid("event format", other.to_string())),
        }
    }

    /// Guess from the file extension (`.csv` or anything else as binary).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Bin,
        }
    }
}

/// Non-fatal findings while reading.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReadReport {
    pub warnings: Vec<String>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read an event file. CSV files carry no sensor size, so `sensor`
/// (width, height) is required to validate them; when absent it is inferred
/// from the largest coordinates. Binary files use their header.
pub fn read_events(path: &Path, format: EventFormat, sensor: Option<(u16, u16)>) -> Result<(EventStream, ReadReport)> {
    let bytes = read_file(path)?;
    let name = path.display().to_string();
    match format {
        EventFormat::Bin => decode_events_bin(&bytes, &name),
        EventFormat::Csv => {
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::parse(name.clone(), e.to_string()))?;
            decode_events_csv(text, &name, sensor)
        }
    }
}

pub fn decode_events_csv(text: &str, name: &str, sensor: Option<(u16, u16)>) -> Result<(EventStream, ReadReport)> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let loc = || format!("{name}:{lineno}");
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(loc(), format!("expected 4 fields, found {}", fields.len())));
        }
        let t: u64 = fields[0].parse().map_err(|_| Error::parse(loc(), format!("bad timestamp {:?}", fields[0])))?;
        let x: u16 = fields[1].parse().map_err(|_| Error::parse(loc(), format!("bad x {:?}", fields[1])))?;
        let y: u16 = fields[2].parse().map_err(|_| Error::parse(loc(), format!("bad y {:?}", fields[2])))?;
        let p = fields[3]
            .parse::<i64>()
            .ok()
            .and_then(Polarity::from_sign)
            .ok_or_else(|| Error::parse(loc(), format!("polarity must be 1 or -1, got {:?}", fields[3])))?;
        events.push(Event { t, x, y, p });
    }
    let (w, h) = match sensor {
        Some(s) => s,
        None => (
            events.iter().map(|e| e.x).max().map_or(1, |m| m + 1),
            events.iter().map(|e| e.y).max().map_or(1, |m| m + 1),
        ),
    };
    finish(w, h, events, name)
}

fn finish(w: u16, h: u16, events: Vec<Event>, name: &str) -> Result<(EventStream, ReadReport)> {
    let (stream, resorted) = EventStream::from_events(w, h, events)?;
    let mut report = ReadReport::default();
    if resorted {
        let msg = format!("{name}: events were not in timestamp order and have been sorted");
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    Ok((stream, report))
}

pub fn decode_events_bin(bytes: &[u8], name: &str) -> Result<(EventStream, ReadReport)> {
    if bytes.len() < EVENT_HEADER_BYTES || &bytes[..8] != EVENT_MAGIC {
        return Err(Error::parse(format!("{name}: byte 0"), "missing event header"));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let h = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    let (w, h) = match (u16::try_from(w), u16::try_from(h)) {
        (Ok(w), Ok(h)) => (w, h),
        _ => return Err(Error::parse(format!("{name}: byte 8"), format!("sensor {w}x{h} too large"))),
    };
    let body = &bytes[EVENT_HEADER_BYTES..];
    if body.len() % EVENT_RECORD_BYTES != 0 {
        let off = EVENT_HEADER_BYTES + body.len() / EVENT_RECORD_BYTES * EVENT_RECORD_BYTES;
        return Err(Error::parse(format!("{name}: byte {off}"), "truncated event record"));
    }
    let mut events = Vec::with_capacity(body.len() / EVENT_RECORD_BYTES);
    for (i, r) in body.chunks_exact(EVENT_RECORD_BYTES).enumerate() {
        let off = EVENT_HEADER_BYTES + i * EVENT_RECORD_BYTES;
        let p = Polarity::from_sign(r[12] as i8 as i64)
            .ok_or_else(|| Error::parse(format!("{name}: byte {}", off + 12), format!("bad polarity {}", r[12] as i8)))?;
        events.push(Event {
            t: u64::from_le_bytes(r[0..8].try_into().expect("8 bytes")),
            x: u16::from_le_bytes([r[8], r[9]]),
            y: u16::from_le_bytes([r[10], r[11]]),
            p,
        });
    }
    finish(w, h, events, name)
}

pub fn encode_events_bin(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVENT_HEADER_BYTES + stream.len() * EVENT_RECORD_BYTES);
    out.extend_from_slice(EVENT_MAGIC);
    out.extend_from_slice(&(stream.width() as u32).to_le_bytes());
    out.extend_from_slice(&(stream.height() as u32).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p.sign() as u8);
        out.extend_from_slice(&[0, 0, 0]);
    }
    out
}

pub fn encode_events_csv(stream: &EventStream) -> String {
    let mut s = String::with_capacity(16 * stream.len() + 16);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for e in stream.events() {
        let _ = writeln!(s, "{},{},{},{}", e.t, e.x, e.y, e.p.sign());
    }
    s
}

pub fn write_events(path: &Path, stream: &EventStream, format: EventFormat) -> Result<()> {
    match format {
        EventFormat::Bin => write_file(path, &encode_events_bin(stream)),
        EventFormat::Csv => write_file(path, encode_events_csv(stream).as_bytes()),
    }
}

pub fn encode_labels(labels: &[BoxRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(LABEL_HEADER_BYTES + labels.len() * LABEL_RECORD_BYTES);
    out.extend_from_slice(LABEL_MAGIC);
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for r in labels {
        r.validate()?;
        out.extend_from_slice(&r.t.to_le_bytes());
        for v in [r.x, r.y, r.w, r.h, r.class_id, r.track_id] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&r.class_confidence.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_labels(bytes: &[u8], name: &str) -> Result<Vec<BoxRecord>> {
    if bytes.len() < LABEL_HEADER_BYTES || &bytes[..8] != LABEL_MAGIC {
        return Err(Error::parse(format!("{name}: byte 0"), "missing label header"));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[LABEL_HEADER_BYTES..];
    if body.len() != count * LABEL_RECORD_BYTES {
        let off = LABEL_HEADER_BYTES + (body.len() / LABEL_RECORD_BYTES).min(count) * LABEL_RECORD_BYTES;
        return Err(Error::parse(
            format!("{name}: byte {off}"),
            format!("truncated label file: header declares {count} records, body holds {} bytes", body.len()),
        ));
    }
    let u16_at = |r: &[u8], o: usize| u16::from_le_bytes([r[o], r[o + 1]]);
    body.chunks_exact(LABEL_RECORD_BYTES)
        .enumerate()
        .map(|(i, r)| {
            let rec = BoxRecord {
                t: u64::from_le_bytes(r[0..8].try_into().expect("8 bytes")),
                x: u16_at(r, 8),
                y: u16_at(r, 10),
                w: u16_at(r, 12),
                h: u16_at(r, 14),
                class_id: u16_at(r, 16),
                track_id: u16_at(r, 18),
                class_confidence: f32::from_le_bytes(r[20..24].try_into().expect("4 bytes")),
            };
            rec.validate().map_err(|e| {
                Error::parse(format!("{name}: byte {}", LABEL_HEADER_BYTES + i * LABEL_RECORD_BYTES), e.to_string())
            })?;
            Ok(rec)
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<BoxRecord>> {
    decode_labels(&read_file(path)?, &path.display().to_string())
}

pub fn write_labels(path: &Path, labels: &[BoxRecord]) -> Result<()> {
    write_file(path, &encode_labels(labels)?)
}
