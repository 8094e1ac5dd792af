//! Synthetic moving-square event dataset.
//!
//! Bright squares slide and bounce over a dark background. Intensity frames
//! are rendered with exact area coverage at a high frame rate and turned into
//! events by the log-intensity converter, plus uniform noise events. One
//! label per square is emitted at the last microsecond of every window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::GroundTruth;
use crate::error::{Error, Result};
use crate::esim::{frames_to_events, ConverterConfig, FrameSequence};
use crate::events::{
    accumulate, align_labels, BoxRecord, DatasetPreset, Event, EventStream, FrameTensorSequence, Polarity, WindowRange,
    WindowSpec,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub width: usize,
    pub height: usize,
    pub windows_per_sequence: usize,
    pub delta_t_ms: f64,
    pub t_bins: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Pixels per second.
    pub min_speed: f64,
    pub max_speed: f64,
    pub max_objects: usize,
    /// Noise events per pixel per second.
    pub noise_rate: f64,
    /// Rendering rate of the underlying intensity video.
    pub render_fps: f64,
    pub background: f64,
    pub foreground: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            width: 64,
            height: 64,
            windows_per_sequence: 10,
            delta_t_ms: DatasetPreset::Synthetic.delta_t_ms(),
            t_bins: 4,
            min_size: 10,
            max_size: 20,
            min_speed: 100.0,
            max_speed: 300.0,
            max_objects: 2,
            noise_rate: 2.0,
            render_fps: 1000.0,
            background: 0.2,
            foreground: 0.8,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid("synthetic config", m.to_string()));
        if self.width == 0 || self.height == 0 || self.windows_per_sequence == 0 || self.t_bins == 0 {
            return bad("extents, windows and t_bins must be positive");
        }
        if self.min_size == 0 || self.min_size > self.max_size || self.max_size >= self.width.min(self.height) {
            return bad("square sizes must satisfy 0 < min <= max < sensor extent");
        }
        if !(self.min_speed >= 0.0 && self.min_speed <= self.max_speed) || self.max_objects == 0 {
            return bad("speeds must satisfy 0 <= min <= max, and max_objects >= 1");
        }
        if !(self.delta_t_ms > 0.0 && self.render_fps > 0.0 && self.noise_rate >= 0.0) {
            return bad("delta_t, render rate and noise rate must be positive");
        }
        Ok(())
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.delta_t_ms, self.t_bins, self.height, self.width)
    }
}

/// One recorded sequence with its windowed tensors and per-window targets.
#[derive(Clone, Debug)]
pub struct Sample {
    pub stream: EventStream,
    pub labels: Vec<BoxRecord>,
    pub frames: FrameTensorSequence,
    pub targets: Vec<Vec<GroundTruth>>,
}

#[derive(Clone, Copy)]
struct Square {
    size: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

impl Square {
    fn advance(&mut self, dt: f64, w: f64, h: f64) {
        self.x += self.vx * dt;
        self.y += self.vy * dt;
        let (max_x, max_y) = (w - self.size, h - self.size);
        if self.x < 0.0 {
            self.x = -self.x;
            self.vx = -self.vx;
        } else if self.x > max_x {
            self.x = 2.0 * max_x - self.x;
            self.vx = -self.vx;
        }
        if self.y < 0.0 {
            self.y = -self.y;
            self.vy = -self.vy;
        } else if self.y > max_y {
            self.y = 2.0 * max_y - self.y;
            self.vy = -self.vy;
        }
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

fn render(cfg: &SyntheticConfig, squares: &[Square]) -> Vec<f64> {
    let (w, h) = (cfg.width, cfg.height);
    let mut img = vec![cfg.background; w * h];
    for s in squares {
        let (x0, y0) = (s.x.floor().max(0.0) as usize, s.y.floor().max(0.0) as usize);
        let x1 = ((s.x + s.size).ceil() as usize).min(w);
        let y1 = ((s.y + s.size).ceil() as usize).min(h);
        for py in y0..y1 {
            let oy = overlap(py as f64, py as f64 + 1.0, s.y, s.y + s.size);
            for px in x0..x1 {
                let cover = oy * overlap(px as f64, px as f64 + 1.0, s.x, s.x + s.size);
                let v = &mut img[py * w + px];
                *v += (cfg.foreground - *v).max(0.0) * cover;
            }
        }
    }
    img
}

/// Generate one sequence from `seed`.
pub fn generate_sample(cfg: &SyntheticConfig, seed: u64) -> Result<Sample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wf, hf) = (cfg.width as f64, cfg.height as f64);
    let n_obj = rng.random_range(1..=cfg.max_objects);
    let mut squares: Vec<Square> = (0..n_obj)
        .map(|_| {
            let size = rng.random_range(cfg.min_size..=cfg.max_size) as f64;
            let speed = rng.random_range(cfg.min_speed..=cfg.max_speed);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            Square {
                size,
                x: rng.random_range(0.0..=wf - size),
                y: rng.random_range(0.0..=hf - size),
                vx: speed * angle.cos(),
                vy: speed * angle.sin(),
            }
        })
        .collect();

    let spec = cfg.window_spec()?;
    let duration_us = spec.delta_t_us * cfg.windows_per_sequence as u64;
    let dt = 1.0 / cfg.render_fps;
    let n_frames = (duration_us as f64 * 1e-6 * cfg.render_fps).ceil() as usize + 1;
    let mut frames = Vec::with_capacity(n_frames);
    let mut labels = Vec::new();
    let label_times: Vec<u64> = (1..=cfg.windows_per_sequence as u64).map(|k| k * spec.delta_t_us - 1).collect();
    let mut next_label = 0;
    for k in 0..n_frames {
        let t_us = k as f64 * 1e6 * dt;
        frames.push(render(cfg, &squares));
        // labels: square geometry at the label time, advancing from this frame
        while next_label < label_times.len() && (label_times[next_label] as f64) < t_us + 1e6 * dt {
            let lt = label_times[next_label];
            let frac = (lt as f64 - t_us) * 1e-6;
            for (track, s) in squares.iter().enumerate() {
                let mut probe = *s;
                probe.advance(frac, wf, hf);
                let rec = BoxRecord {
                    t: lt,
                    x: probe.x.round() as u16,
                    y: probe.y.round() as u16,
                    w: s.size as u16,
                    h: s.size as u16,
                    class_id: 0,
                    class_confidence: 1.0,
                    track_id: track as u16,
                };
                labels.push(rec);
            }
            next_label += 1;
        }
        for s in squares.iter_mut() {
            s.advance(dt, wf, hf);
        }
    }
    let video = FrameSequence::new(cfg.width, cfg.height, frames, cfg.render_fps)?;
    let mut events = frames_to_events(&video, &ConverterConfig::default())?.into_events();
    events.retain(|e| e.t < duration_us);

    let n_noise = (cfg.noise_rate * (cfg.width * cfg.height) as f64 * duration_us as f64 * 1e-6).round() as usize;
    for _ in 0..n_noise {
        let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
        events.push(Event::new(
            rng.random_range(0..duration_us),
            rng.random_range(0..cfg.width as u16),
            rng.random_range(0..cfg.height as u16),
            p,
        ));
    }
    events.sort_by_key(Event::sort_key);
    let (stream, _) = EventStream::from_events(cfg.width as u16, cfg.height as u16, events)?;
    let frames = accumulate(
        &stream,
        &spec,
        WindowRange {
            t0: 0,
            count: cfg.windows_per_sequence,
        },
    )?;
    let aligned = align_labels(&labels, &frames.window_starts, spec.delta_t_us);
    let targets = aligned
        .groups
        .iter()
        .map(|g| g.iter().map(GroundTruth::from).collect())
        .collect();
    Ok(Sample {
        stream,
        labels,
        frames,
        targets,
    })
}

/// `count` sequences with seeds derived from `seed`.
pub fn generate(cfg: &SyntheticConfig, count: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_sample(cfg, rng.random())).collect()
}
