use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neurons::NeuronConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Tiny,
    Small,
    Base,
}

impl Variant {
    pub fn channels(self) -> [usize; 4] {
        match self {
            Variant::Tiny => [32, 64, 128, 256],
            Variant::Small => [48, 96, 192, 384],
            Variant::Base => [64, 128, 256, 512],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Tiny => "tiny",
            Variant::Small => "small",
            Variant::Base => "base",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(Variant::Tiny),
            "small" => Ok(Variant::Small),
            "base" => Ok(Variant::Base),
            _ => Err(Error::invalid("variant", format!("unknown variant {s:?} (tiny|small|base)"))),
        }
    }
}

pub const STAGE_KERNELS: [usize; 4] = [7, 3, 3, 3];
pub const STAGE_STRIDES: [usize; 4] = [4, 2, 2, 2];
/// Total downsampling of the deepest stage; inputs are padded to a multiple.
pub const MAX_STRIDE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageConfig {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub window_size: usize,
    pub grid_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalKind {
    Lstm,
    Stfe,
    #[serde(alias = "plain")]
    PlainNet,
    #[serde(alias = "feedback")]
    FeedBackNet,
    #[serde(alias = "statefulsynapsenet")]
    StatefulSynapse,
    None,
}

impl TemporalKind {
    pub const ALL: [TemporalKind; 6] = [
        TemporalKind::Lstm,
        TemporalKind::Stfe,
        TemporalKind::PlainNet,
        TemporalKind::FeedBackNet,
        TemporalKind::StatefulSynapse,
        TemporalKind::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemporalKind::Lstm => "LSTM",
            TemporalKind::Stfe => "STFE",
            TemporalKind::PlainNet => "PlainNet",
            TemporalKind::FeedBackNet => "FeedBackNet",
            TemporalKind::StatefulSynapse => "StatefulSynapse",
            TemporalKind::None => "None",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let k = s.trim().to_ascii_lowercase();
        TemporalKind::ALL
            .into_iter()
            .find(|t| t.name().to_ascii_lowercase() == k || (k == "statefulsynapsenet" && *t == TemporalKind::StatefulSynapse))
            .ok_or_else(|| Error::invalid("placement", format!("unknown temporal module {s:?}")))
    }
}

/// Temporal module per stage.
pub type Placement = [TemporalKind; 4];

pub const DEFAULT_PLACEMENT: Placement = [TemporalKind::Lstm, TemporalKind::Lstm, TemporalKind::Lstm, TemporalKind::Stfe];

/// The eight stage arrangements of the placement ablation.
pub fn placement_ablation_rows() -> [Placement; 8] {
    use TemporalKind::{Lstm as L, Stfe as S};
    [
        [L, L, L, L],
        [S, L, L, L],
        [L, S, L, L],
        [L, L, S, L],
        [L, L, L, S],
        [L, L, S, S],
        [L, S, S, S],
        [S, S, S, S],
    ]
}

pub fn parse_placement(s: &str) -> Result<Placement> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::invalid("placement", format!("expected 4 comma-separated kinds, got {s:?}")));
    }
    let mut out = [TemporalKind::None; 4];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = TemporalKind::parse(p)?;
    }
    Ok(out)
}

/// How a stage's temporal output is combined with its spatial features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// The temporal output becomes the stage output.
    #[default]
    Replace,
    /// Stage output is spatial features plus temporal output.
    Add,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Overrides the variant's stage widths.
    pub channels: Option<[usize; 4]>,
    pub placement: Placement,
    pub neuron: NeuronConfig,
    pub window_size: usize,
    pub grid_size: usize,
    pub dim_head: usize,
    /// Temporal bins per window; the input has `2·t_bins` channels.
    pub t_bins: usize,
    pub mlp_ratio: usize,
    /// Linear layers per spiking MLP.
    pub mlp_depth: usize,
    pub fusion: Fusion,
    pub num_classes: usize,
    /// Keep spiking-MLP membranes across windows instead of resetting.
    pub persistent_mlp_state: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Tiny,
            channels: None,
            placement: DEFAULT_PLACEMENT,
            neuron: NeuronConfig::default(),
            window_size: 8,
            grid_size: 8,
            dim_head: 32,
            t_bins: 10,
            mlp_ratio: 4,
            mlp_depth: 2,
            fusion: Fusion::Replace,
            num_classes: 2,
            persistent_mlp_state: false,
        }
    }
}

impl ModelConfig {
    pub fn preset(variant: Variant) -> Self {
        ModelConfig {
            variant,
            ..Self::default()
        }
    }

    /// The reduced model used for CPU-scale training.
    pub fn desk_scale() -> Self {
        ModelConfig {
            channels: Some([8, 16, 32, 64]),
            t_bins: 4,
            num_classes: 1,
            ..Self::default()
        }
    }

    pub fn channels(&self) -> [usize; 4] {
        self.channels.unwrap_or_else(|| self.variant.channels())
    }

    pub fn input_channels(&self) -> usize {
        2 * self.t_bins
    }

    pub fn stages(&self) -> [StageConfig; 4] {
        let ch = self.channels();
        std::array::from_fn(|i| StageConfig {
            out_channels: ch[i],
            kernel: STAGE_KERNELS[i],
            stride: STAGE_STRIDES[i],
            window_size: self.window_size,
            grid_size: self.grid_size,
        })
    }

    pub fn heads(&self, channels: usize) -> usize {
        (channels / self.dim_head.max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.neuron.validate()?;
        let bad = |m: String| Err(Error::invalid("model config", m));
        if self.t_bins == 0 {
            return bad("t_bins must be positive".into());
        }
        if self.window_size == 0 || self.grid_size == 0 {
            return bad("window_size and grid_size must be positive".into());
        }
        if self.mlp_ratio == 0 || self.mlp_depth < 2 {
            return bad("mlp_ratio must be positive and mlp_depth at least 2".into());
        }
        if self.num_classes == 0 {
            return bad("num_classes must be positive".into());
        }
        for c in self.channels() {
            if c == 0 {
                return bad("stage channels must be positive".into());
            }
            if c % self.heads(c) != 0 {
                return bad(format!("{c} channels not divisible into {} heads", self.heads(c)));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::parse("model config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::parse(path.display().to_string(), msg),
            other => other,
        })
    }
}
