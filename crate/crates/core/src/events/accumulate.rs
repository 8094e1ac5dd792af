use serde::{Deserialize, Serialize};

use super::types::{BoxRecord, EventStream, Polarity, WindowSpec};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Which windows to build: `count` windows starting at `t0` (µs).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowRange {
    pub t0: u64,
    pub count: usize,
}

impl WindowRange {
    /// Windows aligned to `t = 0` that cover every event of the stream.
    pub fn covering(stream: &EventStream, spec: &WindowSpec) -> Self {
        let count = stream
            .events()
            .last()
            .map_or(0, |e| (e.t / spec.delta_t_us) as usize + 1);
        WindowRange { t0: 0, count }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulationStats {
    pub kept: usize,
    /// Events before `t0` or after the last window.
    pub dropped: usize,
}

/// Per-window stacked histograms `[2·t_bins × H × W]` (channel
/// `2·sub_bin + (0 for +1, 1 for −1)`).
#[derive(Clone, Debug)]
pub struct FrameTensorSequence {
    pub frames: Vec<Vec<f64>>,
    pub window_starts: Vec<u64>,
    pub spec: WindowSpec,
    pub stats: AccumulationStats,
}

impl FrameTensorSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        [self.spec.channels(), self.spec.height, self.spec.width]
    }

    /// One window as an `[1 × C × H × W]` tensor.
    pub fn tensor(&self, i: usize) -> Tensor {
        let [c, h, w] = self.frame_shape();
        Tensor::new(&[1, c, h, w], self.frames[i].clone()).expect("counts are finite")
    }
}

pub fn accumulate(stream: &EventStream, spec: &WindowSpec, range: WindowRange) -> Result<FrameTensorSequence> {
    if spec.height != stream.height() as usize || spec.width != stream.width() as usize {
        return Err(Error::invalid(
            "window",
            format!(
                "extent {}x{} does not match {}x{} sensor",
                spec.height,
                spec.width,
                stream.height(),
                stream.width()
            ),
        ));
    }
    let plane = spec.height * spec.width;
    let mut frames = vec![vec![0.0; spec.channels() * plane]; range.count];
    let window_starts: Vec<u64> = (0..range.count).map(|i| range.t0 + i as u64 * spec.delta_t_us).collect();
    let end = range.t0 + range.count as u64 * spec.delta_t_us;
    let mut stats = AccumulationStats::default();
    for e in stream.events() {
        if e.t < range.t0 || e.t >= end {
            stats.dropped += 1;
            continue;
        }
        let rel = e.t - range.t0;
        let win = (rel / spec.delta_t_us) as usize;
        let offset = rel - win as u64 * spec.delta_t_us;
        let sub_bin = ((spec.t_bins as u64 * offset) / spec.delta_t_us) as usize;
        let channel = 2 * sub_bin + if e.p == Polarity::On { 0 } else { 1 };
        let cell = &mut frames[win][channel * plane + e.y as usize * spec.width + e.x as usize];
        *cell += 1.0;
        stats.kept += 1;
    }
    if spec.binarize {
        for f in &mut frames {
            f.iter_mut().for_each(|v: &mut f64| *v = v.min(1.0));
        }
    }
    Ok(FrameTensorSequence {
        frames,
        window_starts,
        spec: *spec,
        stats,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlignedLabels {
    pub groups: Vec<Vec<BoxRecord>>,
    pub dropped: usize,
}

impl AlignedLabels {
    pub fn kept(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

/// Assign each label to the window whose half-open span contains its time.
pub fn align_labels(labels: &[BoxRecord], window_starts: &[u64], delta_t_us: u64) -> AlignedLabels {
    let mut out = AlignedLabels {
        groups: vec![Vec::new(); window_starts.len()],
        dropped: 0,
    };
    for l in labels {
        // window_starts is sorted; find the last start <= t
        let idx = window_starts.partition_point(|&s| s <= l.t);
        match idx.checked_sub(1) {
            Some(i) if l.t < window_starts[i] + delta_t_us => out.groups[i].push(*l),
            _ => out.dropped += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;

    fn spec(t_bins: usize) -> WindowSpec {
        WindowSpec::new(10.0, t_bins, 4, 4).unwrap()
    }

    #[test]
    fn empty_stream_gives_zero_frames() {
        let s = EventStream::empty(4, 4);
        let seq = accumulate(&s, &spec(2), WindowRange { t0: 0, count: 3 }).unwrap();
        assert_eq!(seq.len(), 3);
        assert!(seq.frames.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn same_cell_counts_twice() {
        let ev = vec![Event::new(100, 1, 2, Polarity::On), Event::new(200, 1, 2, Polarity::On)];
        let (s, _) = EventStream::from_events(4, 4, ev).unwrap();
        let seq = accumulate(&s, &spec(2), WindowRange { t0: 0, count: 1 }).unwrap();
        assert_eq!(seq.frames[0][2 * 4 + 1], 2.0);
    }

    #[test]
    fn boundary_event_opens_next_window() {
        let ev = vec![Event::new(10_000, 0, 0, Polarity::Off)];
        let (s, _) = EventStream::from_events(4, 4, ev).unwrap();
        let seq = accumulate(&s, &spec(5), WindowRange { t0: 0, count: 2 }).unwrap();
        assert!(seq.frames[0].iter().all(|v| *v == 0.0));
        // sub-bin 0, negative polarity -> channel 1
        assert_eq!(seq.frames[1][16], 1.0);
    }

    #[test]
    fn extent_mismatch_rejected() {
        let s = EventStream::empty(5, 4);
        assert!(accumulate(&s, &spec(1), WindowRange { t0: 0, count: 1 }).is_err());
    }

    #[test]
    fn label_alignment() {
        let rec = |t| BoxRecord {
            t,
            x: 0,
            y: 0,
            w: 1,
            h: 1,
            class_id: 0,
            class_confidence: 1.0,
            track_id: 0,
        };
        let starts = [1000, 2000, 3000];
        let a = align_labels(&[rec(1500), rec(500), rec(4000), rec(3999)], &starts, 1000);
        assert_eq!(a.groups[0].len(), 1);
        assert_eq!(a.groups[2].len(), 1);
        assert_eq!(a.dropped, 2);
    }
}
