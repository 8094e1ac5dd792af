use serde::{Deserialize, Serialize};

/// Static cost of one weighted operation for a single forward pass.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCostRecord {
    pub path: String,
    pub kind: String,
    /// `2 × multiply-accumulates`.
    pub flops: u64,
    /// The spiking layer whose output feeds this operation, if any.
    pub spike_source: Option<String>,
    /// Spiking timesteps executed per forward.
    pub timesteps: usize,
}

impl OpCostRecord {
    pub fn ann(path: impl Into<String>, kind: &str, macs: u64) -> Self {
        OpCostRecord {
            path: path.into(),
            kind: kind.to_string(),
            flops: 2 * macs,
            spike_source: None,
            timesteps: 1,
        }
    }

    pub fn spiking(path: impl Into<String>, kind: &str, macs: u64, source: impl Into<String>, timesteps: usize) -> Self {
        OpCostRecord {
            path: path.into(),
            kind: kind.to_string(),
            flops: 2 * macs,
            spike_source: Some(source.into()),
            timesteps,
        }
    }

    pub fn is_spiking(&self) -> bool {
        self.spike_source.is_some()
    }
}

/// Component a record belongs to, derived from its module path.
pub fn component_of(path: &str) -> &'static str {
    if path.starts_with("backbone") {
        "backbone"
    } else {
        "fpn_head"
    }
}

pub fn total_flops(records: &[OpCostRecord]) -> u64 {
    records.iter().map(|r| r.flops).sum()
}
