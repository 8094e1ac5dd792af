//! Four-stage hybrid spiking vision transformer backbone.

pub mod attention;
pub mod block;
pub mod config;
pub mod model;
pub mod partition;
pub mod temporal;

pub use attention::MultiHeadSelfAttention;
pub use block::{SpatialBlock, Tiling};
pub use config::{
    parse_placement, placement_ablation_rows, Fusion, ModelConfig, Placement, StageConfig, TemporalKind, Variant,
    DEFAULT_PLACEMENT,
};
pub use model::{BlockState, HsvtBackbone, Stage, StageOutputs, StageState};
pub use partition::{grid_partition, grid_reverse, index_map, window_partition, window_reverse, PartitionKind};
pub use temporal::{TemporalModule, TemporalState};
