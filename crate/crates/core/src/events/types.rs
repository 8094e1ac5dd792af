use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign of a brightness change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    /// Darkening, encoded as −1.
    Off,
    /// Brightening, encoded as +1.
    On,
}

impl Polarity {
    pub fn from_sign(p: i64) -> Option<Polarity> {
        match p {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }

    /// Canonical ordering key used when ties in `t` must be broken.
    pub fn sort_key(&self) -> (u64, u16, u16, Polarity) {
        (self.t, self.y, self.x, self.p)
    }
}

/// Events from one sensor, nondecreasing in time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventStream {
    width: u16,
    height: u16,
    events: Vec<Event>,
}

impl EventStream {
    pub fn empty(width: u16, height: u16) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
        }
    }

    /// Validates coordinates and sorts by timestamp (stable) if needed.
    /// Returns the stream and whether a re-sort happened.
    pub fn from_events(width: u16, height: u16, mut events: Vec<Event>) -> Result<(Self, bool)> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("sensor", format!("{width}x{height}")));
        }
        if let Some((i, e)) = events.iter().enumerate().find(|(_, e)| e.x >= width || e.y >= height) {
            return Err(Error::invalid(
                "event",
                format!("event {i} at ({}, {}) outside {width}x{height} sensor", e.x, e.y),
            ));
        }
        let sorted = events.windows(2).all(|w| w[0].t <= w[1].t);
        if !sorted {
            events.sort_by_key(|e| e.t);
        }
        Ok((EventStream { width, height, events }, !sorted))
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

/// Accumulation window: `delta_t` long, split into `t_bins` sub-bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Window length in microseconds.
    pub delta_t_us: u64,
    pub t_bins: usize,
    pub height: usize,
    pub width: usize,
    /// Clip counts to {0, 1}.
    #[serde(default)]
    pub binarize: bool,
}

impl WindowSpec {
    pub fn new(delta_t_ms: f64, t_bins: usize, height: usize, width: usize) -> Result<Self> {
        if !(delta_t_ms > 0.0) || !delta_t_ms.is_finite() {
            return Err(Error::invalid("window", format!("delta_t must be positive, got {delta_t_ms} ms")));
        }
        let delta_t_us = (delta_t_ms * 1000.0).round() as u64;
        if delta_t_us == 0 {
            return Err(Error::invalid("window", "delta_t rounds to zero microseconds"));
        }
        if t_bins == 0 {
            return Err(Error::invalid("window", "t_bins must be at least 1"));
        }
        if height == 0 || width == 0 {
            return Err(Error::invalid("window", format!("extent {height}x{width}")));
        }
        Ok(WindowSpec {
            delta_t_us,
            t_bins,
            height,
            width,
            binarize: false,
        })
    }

    pub fn delta_t_ms(&self) -> f64 {
        self.delta_t_us as f64 / 1000.0
    }

    pub fn channels(&self) -> usize {
        2 * self.t_bins
    }
}

/// Named dataset presets and their accumulation windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetPreset {
    Gen1,
    Fall,
    Air,
    Synthetic,
}

impl DatasetPreset {
    pub fn delta_t_ms(self) -> f64 {
        match self {
            DatasetPreset::Gen1 => 50.0,
            DatasetPreset::Fall => 200.0,
            DatasetPreset::Air => 10.0,
            DatasetPreset::Synthetic => 20.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gen1" => Ok(DatasetPreset::Gen1),
            "fall" => Ok(DatasetPreset::Fall),
            "air" => Ok(DatasetPreset::Air),
            "synthetic" => Ok(DatasetPreset::Synthetic),
            other => Err(Error::invalid("dataset preset", other.to_string())),
        }
    }
}

/// GEN1-style label: top-left corner, size, class, confidence, track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub w: u16,
    pub h: u16,
    pub class_id: u16,
    pub class_confidence: f32,
    pub track_id: u16,
}

impl BoxRecord {
    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(Error::invalid("box", format!("non-positive size {}x{}", self.w, self.h)));
        }
        if !(0.0..=1.0).contains(&self.class_confidence) {
            return Err(Error::invalid(
                "box",
                format!("class_confidence {} outside [0, 1]", self.class_confidence),
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> XywhBox {
        XywhBox {
            x: self.x as i32,
            y: self.y as i32,
            w: self.w as i32,
            h: self.h as i32,
        }
    }
}

/// Integer pixel box given by opposite corners.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CornerBox {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
}

/// Integer pixel box given by top-left corner and size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct XywhBox {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

pub fn corner_to_xywh(b: CornerBox) -> Result<XywhBox> {
    let (w, h) = (b.x2 - b.x1, b.y2 - b.y1);
    if w <= 0 || h <= 0 {
        return Err(Error::invalid("box", format!("degenerate corners {b:?}")));
    }
    Ok(XywhBox { x: b.x1, y: b.y1, w, h })
}

pub fn xywh_to_corner(b: XywhBox) -> CornerBox {
    CornerBox {
        x1: b.x,
        y1: b.y,
        x2: b.x + b.w,
        y2: b.y + b.h,
    }
}

impl XywhBox {
    /// Label record at time `t`; coordinates must fit the 16-bit schema.
    pub fn to_record(self, t: u64, class_id: u16, class_confidence: f32, track_id: u16) -> Result<BoxRecord> {
        let fit = |v: i32, what: &str| {
            u16::try_from(v).map_err(|_| Error::invalid("box", format!("{what} = {v} does not fit 16 bits")))
        };
        let r = BoxRecord {
            t,
            x: fit(self.x, "x")?,
            y: fit(self.y, "y")?,
            w: fit(self.w, "w")?,
            h: fit(self.h, "h")?,
            class_id,
            class_confidence,
            track_id,
        };
        r.validate()?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_conversion() {
        let b = corner_to_xywh(CornerBox { x1: 10, y1: 20, x2: 30, y2: 60 }).unwrap();
        assert_eq!(b, XywhBox { x: 10, y: 20, w: 20, h: 40 });
        assert!(corner_to_xywh(CornerBox { x1: 0, y1: 0, x2: 0, y2: 5 }).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(DatasetPreset::Gen1.delta_t_ms(), 50.0);
        assert_eq!(DatasetPreset::Fall.delta_t_ms(), 200.0);
        assert_eq!(DatasetPreset::Air.delta_t_ms(), 10.0);
    }

    #[test]
    fn unsorted_input_is_sorted_stably() {
        let ev = vec![
            Event::new(5, 0, 0, Polarity::On),
            Event::new(1, 1, 0, Polarity::Off),
            Event::new(5, 2, 0, Polarity::Off),
        ];
        let (s, resorted) = EventStream::from_events(4, 4, ev).unwrap();
        assert!(resorted);
        let xs: Vec<u16> = s.events().iter().map(|e| e.x).collect();
        assert_eq!(xs, vec![1, 0, 2]);
    }

    #[test]
    fn out_of_range_rejected() {
        let ev = vec![Event::new(0, 4, 0, Polarity::On)];
        assert!(EventStream::from_events(4, 4, ev).is_err());
    }

    #[test]
    fn confidence_bounds() {
        let b = XywhBox { x: 0, y: 0, w: 2, h: 2 };
        assert!(b.to_record(0, 0, 1.5, 0).is_err());
        assert!(b.to_record(0, 0, 1.0, 0).is_ok());
    }
}
