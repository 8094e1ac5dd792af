pub mod autodiff;
pub mod backbone;
pub mod cli;
pub mod data;
pub mod detect;
pub mod error;
pub mod esim;
pub mod events;
pub mod layers;
pub mod neurons;
pub mod profiler;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
