//! Frame video to event stream conversion by log-intensity threshold
//! crossings, with linear interpolation between consecutive frames.

use std::path::Path;

use crate::error::{Error, Result};
use crate::events::{Event, EventStream, Polarity};

#[derive(Clone, Debug)]
pub struct FrameSequence {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities, one `Vec` per frame.
    pub frames: Vec<Vec<f64>>,
    pub fps: f64,
}

impl FrameSequence {
    pub fn new(width: usize, height: usize, frames: Vec<Vec<f64>>, fps: f64) -> Result<Self> {
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(Error::invalid("frames", format!("fps must be positive, got {fps}")));
        }
        if width == 0 || height == 0 || width > u16::MAX as usize || height > u16::MAX as usize {
            return Err(Error::invalid("frames", format!("extent {width}x{height}")));
        }
        if let Some(i) = frames.iter().position(|f| f.len() != width * height) {
            return Err(Error::invalid("frames", format!("frame {i} does not match {width}x{height}")));
        }
        Ok(FrameSequence {
            width,
            height,
            frames,
            fps,
        })
    }

    /// Timestamp of frame `k` in microseconds.
    pub fn timestamp_us(&self, k: usize) -> f64 {
        k as f64 * 1e6 / self.fps
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConverterConfig {
    pub c_pos: f64,
    pub c_neg: f64,
    pub log_eps: f64,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        ConverterConfig {
            c_pos: 0.2,
            c_neg: 0.2,
            log_eps: 1e-3,
        }
    }
}

impl ConverterConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_pos", self.c_pos), ("c_neg", self.c_neg), ("log_eps", self.log_eps)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid("converter", format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn frames_to_events(seq: &FrameSequence, cfg: &ConverterConfig) -> Result<EventStream> {
    cfg.validate()?;
    if seq.frames.len() < 2 {
        return Err(Error::invalid("frames", "need at least two frames"));
    }
    for (k, f) in seq.frames.iter().enumerate() {
        if let Some(i) = f.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "frames",
                format!("frame {k} pixel {i} has invalid intensity {}", f[i]),
            ));
        }
    }
    let log = |v: f64| (v + cfg.log_eps).ln();
    let mut reference: Vec<f64> = seq.frames[0].iter().map(|&v| log(v)).collect();
    let mut events = Vec::new();
    for k in 0..seq.frames.len() - 1 {
        let (t_a, t_b) = (seq.timestamp_us(k), seq.timestamp_us(k + 1));
        for (i, (&ia, &ib)) in seq.frames[k].iter().zip(&seq.frames[k + 1]).enumerate() {
            let (la, lb) = (log(ia), log(ib));
            let span = lb - la;
            let lref = &mut reference[i];
            let (x, y) = ((i % seq.width) as u16, (i / seq.width) as u16);
            let mut emit = |frac: f64, p: Polarity| {
                let t = (t_a + frac * (t_b - t_a)).round() as u64;
                events.push(Event::new(t, x, y, p));
            };
            // crossing levels are tested as differences so that a step of
            // exactly one threshold fires exactly once at the frame time
            while lb - *lref >= cfg.c_pos {
                emit((*lref - la + cfg.c_pos) / span, Polarity::On);
                *lref += cfg.c_pos;
            }
            while *lref - lb >= cfg.c_neg {
                emit((*lref - la - cfg.c_neg) / span, Polarity::Off);
                *lref -= cfg.c_neg;
            }
        }
    }
    events.sort_by_key(Event::sort_key);
    let (stream, _) = EventStream::from_events(seq.width as u16, seq.height as u16, events)?;
    Ok(stream)
}

/// Parse a binary (`P5`) or ASCII (`P2`) PGM image.
pub fn parse_pgm(bytes: &[u8], name: &str) -> Result<(usize, usize, Vec<f64>)> {
    let err = |m: &str| Error::parse(name.to_string(), m.to_string());
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| s.parse::<usize>().map_err(|_| err(&format!("bad header number {s:?}")));
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(err("bad header values"));
    }
    let n = w * h;
    let data = match magic.as_str() {
        "P5" => {
            let start = pos + 1;
            let bpp = if maxval > 255 { 2 } else { 1 };
            let body = bytes.get(start..start + n * bpp).ok_or_else(|| err("truncated pixel data"))?;
            if bpp == 1 {
                body.iter().map(|&b| b as f64).collect()
            } else {
                body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
            }
        }
        "P2" => {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(num(token()?)? as f64);
            }
            v
        }
        _ => return Err(err("not a PGM image (expected P2 or P5)")),
    };
    Ok((w, h, data))
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Raw planar video: `"HSVTRAW1"`, u32 width, u32 height, u32 frame count,
/// f64 fps, then `f32` intensities frame by frame, row-major, little-endian.
pub const RAW_MAGIC: &[u8; 8] = b"HSVTRAW1";

pub fn decode_raw(bytes: &[u8], name: &str) -> Result<FrameSequence> {
    let err = |m: String| Error::parse(name.to_string(), m);
    if bytes.len() < 28 || &bytes[..8] != RAW_MAGIC {
        return Err(err("missing raw video header".into()));
    }
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (w, h, n) = (u(8), u(12), u(16));
    let fps = f64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
    let body = &bytes[28..];
    if body.len() != w * h * n * 4 {
        return Err(err(format!("expected {} bytes of pixels, found {}", w * h * n * 4, body.len())));
    }
    let vals: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let frames = if w * h == 0 { Vec::new() } else { vals.chunks(w * h).map(<[f64]>::to_vec).collect() };
    FrameSequence::new(w, h, frames, fps)
}

pub fn encode_raw(seq: &FrameSequence) -> Vec<u8> {
    let mut out = RAW_MAGIC.to_vec();
    for v in [seq.width, seq.height, seq.frames.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&seq.fps.to_le_bytes());
    for f in &seq.frames {
        for &v in f {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Load a directory of `.pgm` frames (sorted by file name) or a raw planar
/// video file.
pub fn load_frames(path: &Path, fps: f64) -> Result<FrameSequence> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        return decode_raw(&bytes, &path.display().to_string());
    }
    let mut files: Vec<_> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    let mut frames = Vec::with_capacity(files.len());
    let mut extent = None;
    for f in &files {
        let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
        let (w, h, px) = parse_pgm(&bytes, &f.display().to_string())?;
        match extent {
            None => extent = Some((w, h)),
            Some(e) if e != (w, h) => {
                return Err(Error::invalid("frames", format!("{} is {w}x{h}, expected {}x{}", f.display(), e.0, e.1)))
            }
            _ => {}
        }
        frames.push(px);
    }
    let (w, h) = extent.ok_or_else(|| Error::invalid("frames", format!("no .pgm frames in {}", path.display())))?;
    FrameSequence::new(w, h, frames, fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_pixel(vals: &[f64], fps: f64) -> FrameSequence {
        FrameSequence::new(1, 1, vals.iter().map(|v| vec![*v]).collect(), fps).unwrap()
    }

    #[test]
    fn constant_video_is_silent() {
        let seq = FrameSequence::new(3, 2, vec![vec![7.0; 6]; 5], 30.0).unwrap();
        assert!(frames_to_events(&seq, &ConverterConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn exact_single_crossing() {
        let cfg0 = ConverterConfig::default();
        let (a, b) = (10.0, 20.0);
        let c = (b + cfg0.log_eps).ln() - (a + cfg0.log_eps).ln();
        let cfg = ConverterConfig { c_pos: c, ..cfg0 };
        let s = frames_to_events(&one_pixel(&[a, b], 100.0), &cfg).unwrap();
        assert_eq!(s.events(), &[Event::new(10_000, 0, 0, Polarity::On)]);
    }

    #[test]
    fn darkening_emits_off() {
        let s = frames_to_events(&one_pixel(&[100.0, 10.0], 10.0), &ConverterConfig::default()).unwrap();
        assert!(!s.is_empty());
        assert!(s.events().iter().all(|e| e.p == Polarity::Off));
    }

    #[test]
    fn negative_intensity_rejected() {
        assert!(frames_to_events(&one_pixel(&[1.0, -1.0], 10.0), &ConverterConfig::default()).is_err());
    }

    #[test]
    fn pgm_parses_both_encodings() {
        let p5 = encode_pgm(2, 1, &[3, 250]);
        assert_eq!(parse_pgm(&p5, "a").unwrap(), (2, 1, vec![3.0, 250.0]));
        let p2 = b"P2\n# c\n2 1\n255\n3 250\n";
        assert_eq!(parse_pgm(p2, "b").unwrap(), (2, 1, vec![3.0, 250.0]));
    }

    #[test]
    fn raw_roundtrip() {
        let seq = FrameSequence::new(2, 1, vec![vec![1.0, 2.0], vec![3.0, 4.5]], 25.0).unwrap();
        let back = decode_raw(&encode_raw(&seq), "r").unwrap();
        assert_eq!(back.frames, seq.frames);
        assert_eq!(back.fps, 25.0);
    }
}
