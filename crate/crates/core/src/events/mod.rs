//! Event and label data model, file formats, and windowed accumulation.

mod accumulate;
pub mod io;
mod types;

pub use accumulate::{accumulate, align_labels, AccumulationStats, AlignedLabels, FrameTensorSequence, WindowRange};
pub use io::{read_events, read_labels, write_events, write_labels, EventFormat, ReadReport};
pub use types::{
    corner_to_xywh, xywh_to_corner, BoxRecord, CornerBox, DatasetPreset, Event, EventStream, Polarity, WindowSpec,
    XywhBox,
};
