use crate::autodiff::nn::{pad_hw, to_channels_first, to_channels_last};
use crate::autodiff::{Module, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::layers::{Conv2d, ForwardCtx, Init, LayerNorm};
use crate::profiler::OpCostRecord;

use super::block::{BlockMlpState, SpatialBlock, SpatialBlockSpec};
use super::config::{Fusion, ModelConfig, MAX_STRIDE};
use super::temporal::{TemporalModule, TemporalState};

#[derive(Clone, Debug)]
pub struct Stage {
    pub name: String,
    pub downsample: Conv2d,
    pub norm: LayerNorm,
    pub block: SpatialBlock,
    pub temporal: TemporalModule,
    pub fusion: Fusion,
    pub stride: usize,
}

impl Stage {
    pub fn channels(&self) -> usize {
        self.downsample.c_out()
    }
}

impl Module for Stage {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.downsample.parameters(out);
        self.norm.parameters(out);
        self.block.parameters(out);
        self.temporal.parameters(out);
    }
}

/// Carry of one stage between windows.
#[derive(Clone, Debug, Default)]
pub struct StageState {
    pub temporal: Option<TemporalState>,
    pub mlp: Option<BlockMlpState>,
}

/// Recurrent carry of all four stages.
#[derive(Clone, Debug, Default)]
pub struct BlockState {
    pub stages: Vec<StageState>,
}

impl BlockState {
    pub fn new() -> Self {
        BlockState {
            stages: vec![StageState::default(); 4],
        }
    }

    /// Cut the autodiff history (truncated BPTT boundary).
    pub fn detach(&self) -> Self {
        BlockState {
            stages: self
                .stages
                .iter()
                .map(|s| StageState {
                    temporal: s.temporal.as_ref().map(TemporalState::detach),
                    mlp: s.mlp.as_ref().map(BlockMlpState::detach),
                })
                .collect(),
        }
    }
}

/// Four-stage hybrid backbone.
#[derive(Clone, Debug)]
pub struct HsvtBackbone {
    pub config: ModelConfig,
    pub stages: Vec<Stage>,
}

/// Per-stage outputs of one window, channels-first `[N, C_s, H_s, W_s]`.
#[derive(Clone, Debug)]
pub struct StageOutputs {
    pub features: Vec<Tensor>,
}

impl StageOutputs {
    /// The maps handed to the detection neck (stages 2–4, strides 8/16/32).
    pub fn neck_inputs(&self) -> &[Tensor] {
        &self.features[1..]
    }
}

impl HsvtBackbone {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(seed);
        let mut c_in = config.input_channels();
        let mut stages = Vec::with_capacity(4);
        for (i, sc) in config.stages().iter().enumerate() {
            let name = format!("backbone.stage{}", i + 1);
            let c = sc.out_channels;
            let spec = SpatialBlockSpec {
                channels: c,
                heads: config.heads(c),
                window_size: sc.window_size,
                grid_size: sc.grid_size,
                mlp_ratio: config.mlp_ratio,
                mlp_depth: config.mlp_depth,
                neuron: config.neuron,
                // the first stage replays its input once per temporal bin
                mlp_timesteps: if i == 0 { config.t_bins } else { 1 },
            };
            stages.push(Stage {
                downsample: Conv2d::new(&mut init, &format!("{name}.downsample"), c_in, c, sc.kernel, sc.stride, sc.kernel / 2, true),
                norm: LayerNorm::new(&mut init, &format!("{name}.norm"), c),
                block: SpatialBlock::new(&mut init, &format!("{name}.block"), &spec)?,
                temporal: TemporalModule::new(&mut init, &format!("{name}.temporal"), config.placement[i], c, config.neuron),
                fusion: config.fusion,
                stride: sc.stride,
                name,
            });
            c_in = c;
        }
        Ok(HsvtBackbone {
            config: config.clone(),
            stages,
        })
    }

    /// Input extent after padding to a multiple of the deepest stride.
    pub fn padded_extent(h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(MAX_STRIDE) * MAX_STRIDE, w.div_ceil(MAX_STRIDE) * MAX_STRIDE)
    }

    /// Spatial extent of every stage for an `h × w` input.
    pub fn stage_extents(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        let (mut h, mut w) = Self::padded_extent(h, w);
        self.stages
            .iter()
            .map(|s| {
                (h, w) = s.downsample.out_extent(h, w);
                (h, w)
            })
            .collect()
    }

    /// One window `[N, 2·t_bins, H, W]`; `state` is updated in place.
    pub fn forward(&self, ctx: &mut ForwardCtx, x: &Tensor, state: &mut BlockState) -> Result<StageOutputs> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.config.input_channels() {
            return Err(Error::shape(
                "hsvt_forward",
                format!("expected [N, {}, H, W], got {s:?}", self.config.input_channels()),
            ));
        }
        if state.stages.len() != self.stages.len() {
            *state = BlockState::new();
        }
        let (hp, wp) = Self::padded_extent(s[2], s[3]);
        let mut cur = if (hp, wp) != (s[2], s[3]) {
            to_channels_first(&pad_hw(&to_channels_last(x)?, hp, wp)?)?
        } else {
            x.clone()
        };
        let mut features = Vec::with_capacity(4);
        for (stage, st) in self.stages.iter().zip(state.stages.iter_mut()) {
            let y = to_channels_last(&stage.downsample.forward(ctx, &cur)?)?;
            let y = stage.norm.forward(ctx, &y)?;
            let mlp_state = if self.config.persistent_mlp_state {
                Some(st.mlp.get_or_insert_with(BlockMlpState::default))
            } else {
                None
            };
            let y = stage.block.forward(ctx, &y, mlp_state)?;
            let prev = st.temporal.as_ref().filter(|t| t.h.shape() == y.shape());
            let (t_out, t_state) = stage.temporal.step(ctx, &y, prev)?;
            st.temporal = t_state;
            let out = match stage.fusion {
                Fusion::Replace => t_out,
                Fusion::Add if matches!(stage.temporal, TemporalModule::None) => t_out,
                Fusion::Add => y.add(&t_out)?,
            };
            cur = to_channels_first(&out)?;
            features.push(cur.clone());
        }
        Ok(StageOutputs { features })
    }

    pub fn costs(&self, n: usize, h: usize, w: usize, out: &mut Vec<OpCostRecord>) {
        let (mut ch, mut cw) = Self::padded_extent(h, w);
        for stage in &self.stages {
            let (oh, ow) = stage.downsample.out_extent(ch, cw);
            out.push(OpCostRecord::ann(
                format!("{}.downsample", stage.name),
                "conv",
                (n * oh * ow) as u64 * stage.downsample.macs_per_position(),
            ));
            stage.block.costs(n, oh, ow, out);
            stage.temporal.costs(&format!("{}.temporal", stage.name), n * oh * ow, out);
            (ch, cw) = (oh, ow);
        }
    }
}

impl Module for HsvtBackbone {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        for s in &self.stages {
            s.parameters(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::config::{placement_ablation_rows, TemporalKind};

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            channels: Some([4, 8, 8, 8]),
            t_bins: 1,
            mlp_ratio: 2,
            ..ModelConfig::default()
        }
    }

    fn frame(h: usize, w: usize, seed: f64) -> Tensor {
        Tensor::new(&[1, 2, h, w], (0..2 * h * w).map(|i| ((i as f64 + seed) * 0.7).sin().abs()).collect()).unwrap()
    }

    #[test]
    fn stage_shapes_and_padding() {
        let m = HsvtBackbone::new(&small_cfg(), 0).unwrap();
        let out = m.forward(&mut ForwardCtx::inference(), &frame(40, 64, 0.0), &mut BlockState::new()).unwrap();
        let shapes: Vec<Vec<usize>> = out.features.iter().map(|f| f.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![1, 4, 16, 16], vec![1, 8, 8, 8], vec![1, 8, 4, 4], vec![1, 8, 2, 2]]);
        assert_eq!(m.stage_extents(40, 64), vec![(16, 16), (8, 8), (4, 4), (2, 2)]);
    }

    #[test]
    fn all_placements_run() {
        for row in placement_ablation_rows() {
            let cfg = ModelConfig {
                placement: row,
                ..small_cfg()
            };
            let m = HsvtBackbone::new(&cfg, 1).unwrap();
            let mut st = BlockState::new();
            for k in 0..2 {
                m.forward(&mut ForwardCtx::training(), &frame(32, 32, k as f64), &mut st).unwrap();
            }
        }
    }

    #[test]
    fn stateless_model_ignores_history() {
        let cfg = ModelConfig {
            placement: [TemporalKind::None; 4],
            ..small_cfg()
        };
        let m = HsvtBackbone::new(&cfg, 2).unwrap();
        let (a, b) = (frame(32, 32, 0.0), frame(32, 32, 5.0));
        let mut st = BlockState::new();
        m.forward(&mut ForwardCtx::inference(), &a, &mut st).unwrap();
        let after = m.forward(&mut ForwardCtx::inference(), &b, &mut st).unwrap();
        let fresh = m.forward(&mut ForwardCtx::inference(), &b, &mut BlockState::new()).unwrap();
        for (x, y) in after.features.iter().zip(&fresh.features) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn recurrence_changes_second_window() {
        let m = HsvtBackbone::new(&small_cfg(), 3).unwrap();
        let a = frame(32, 32, 0.0);
        let mut st = BlockState::new();
        let first = m.forward(&mut ForwardCtx::inference(), &a, &mut st).unwrap();
        let second = m.forward(&mut ForwardCtx::inference(), &a, &mut st).unwrap();
        assert_ne!(first.features[0].data(), second.features[0].data());
    }
}
