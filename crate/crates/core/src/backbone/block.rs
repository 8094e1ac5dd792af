use crate::autodiff::nn::{crop_hw, pad_hw};
use crate::autodiff::{Module, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::layers::{ForwardCtx, Init, LayerNorm};
use crate::neurons::{NeuronConfig, NeuronState, SpikingMlp};
use crate::profiler::OpCostRecord;

use super::attention::MultiHeadSelfAttention;
use super::partition::{partition, reverse, PartitionKind};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

/// How one feature map is tiled: effective sizes and padded extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tiling {
    pub window: usize,
    pub grid: usize,
    pub padded: (usize, usize),
}

impl Tiling {
    pub fn new(h: usize, w: usize, window: usize, grid: usize) -> Self {
        let p = window.min(h).min(w).max(1);
        let g = grid.min(h).min(w).max(1);
        let m = p / gcd(p, g) * g;
        Tiling {
            window: p,
            grid: g,
            padded: (round_up(h, m), round_up(w, m)),
        }
    }

    pub fn size(&self, kind: PartitionKind) -> usize {
        match kind {
            PartitionKind::Window => self.window,
            PartitionKind::Grid => self.grid,
        }
    }

    /// Groups per image and tokens per group.
    pub fn groups_tokens(&self, kind: PartitionKind) -> (usize, usize) {
        let s = self.size(kind);
        let (hp, wp) = self.padded;
        ((hp / s) * (wp / s), s * s)
    }
}

/// Mixed spiking MLP membranes that persist across windows.
#[derive(Clone, Debug, Default)]
pub struct BlockMlpState {
    pub first: Vec<NeuronState>,
    pub second: Vec<NeuronState>,
}

impl BlockMlpState {
    pub fn detach(&self) -> Self {
        BlockMlpState {
            first: self.first.iter().map(NeuronState::detach).collect(),
            second: self.second.iter().map(NeuronState::detach).collect(),
        }
    }
}

/// Pre-norm residual block: Block-SA, spiking MLP, Grid-SA, spiking MLP.
#[derive(Clone, Debug)]
pub struct SpatialBlock {
    pub name: String,
    pub norm1: LayerNorm,
    pub block_attn: MultiHeadSelfAttention,
    pub norm2: LayerNorm,
    pub mlp1: SpikingMlp,
    pub norm3: LayerNorm,
    pub grid_attn: MultiHeadSelfAttention,
    pub norm4: LayerNorm,
    pub mlp2: SpikingMlp,
    pub window_size: usize,
    pub grid_size: usize,
}

pub struct SpatialBlockSpec {
    pub channels: usize,
    pub heads: usize,
    pub window_size: usize,
    pub grid_size: usize,
    pub mlp_ratio: usize,
    pub mlp_depth: usize,
    pub neuron: NeuronConfig,
    pub mlp_timesteps: usize,
}

impl SpatialBlock {
    pub fn new(init: &mut Init, name: &str, spec: &SpatialBlockSpec) -> Result<Self> {
        let c = spec.channels;
        let mlp = |init: &mut Init, n: &str| {
            SpikingMlp::new(init, &format!("{name}.{n}"), c, spec.mlp_ratio, spec.mlp_depth, spec.neuron, spec.mlp_timesteps)
        };
        Ok(SpatialBlock {
            name: name.to_string(),
            norm1: LayerNorm::new(init, &format!("{name}.norm1"), c),
            block_attn: MultiHeadSelfAttention::new(init, &format!("{name}.block_attn"), c, spec.heads)?,
            norm2: LayerNorm::new(init, &format!("{name}.norm2"), c),
            mlp1: mlp(init, "mlp1"),
            norm3: LayerNorm::new(init, &format!("{name}.norm3"), c),
            grid_attn: MultiHeadSelfAttention::new(init, &format!("{name}.grid_attn"), c, spec.heads)?,
            norm4: LayerNorm::new(init, &format!("{name}.norm4"), c),
            mlp2: mlp(init, "mlp2"),
            window_size: spec.window_size,
            grid_size: spec.grid_size,
        })
    }

    pub fn tiling(&self, h: usize, w: usize) -> Tiling {
        Tiling::new(h, w, self.window_size, self.grid_size)
    }

    fn attention(
        &self,
        ctx: &mut ForwardCtx,
        attn: &MultiHeadSelfAttention,
        kind: PartitionKind,
        x: &Tensor,
        tiling: &Tiling,
        hw: (usize, usize),
        valid: &Tensor,
    ) -> Result<Tensor> {
        let size = tiling.size(kind);
        let (n, hp, wp) = (x.shape()[0], tiling.padded.0, tiling.padded.1);
        let tokens = partition(kind, x, size)?;
        let mask = if tiling.padded != hw {
            let v = partition(kind, valid, size)?;
            // one image's mask repeated over the batch
            Some(v.data().iter().cycle().take(tokens.shape()[0] * tokens.shape()[1]).copied().collect::<Vec<_>>())
        } else {
            None
        };
        let (groups, _) = tiling.groups_tokens(kind);
        let y = attn.forward(ctx, &tokens, mask.as_deref(), (groups, (hp, wp), hw, size))?;
        reverse(kind, &y, size, n, hp, wp)
    }

    /// `x` is channels-last `[N, H, W, C]`.
    pub fn forward(&self, ctx: &mut ForwardCtx, x: &Tensor, state: Option<&mut BlockMlpState>) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 4 || s[3] != self.block_attn.channels() {
            return Err(Error::shape("spatial_block", format!("expected [N,H,W,{}], got {s:?}", self.block_attn.channels())));
        }
        let (h, w) = (s[1], s[2]);
        let tiling = self.tiling(h, w);
        let (hp, wp) = tiling.padded;
        let mut valid = vec![0.0; hp * wp];
        for y in 0..h {
            valid[y * wp..y * wp + w].iter_mut().for_each(|v| *v = 1.0);
        }
        let valid = Tensor::new(&[1, hp, wp, 1], valid)?;

        let mut x = pad_hw(x, hp, wp)?;
        let (mut s1, mut s2) = match state {
            Some(st) => (Some(&mut st.first), Some(&mut st.second)),
            None => (None, None),
        };
        let a = self.attention(ctx, &self.block_attn, PartitionKind::Window, &self.norm1.forward(ctx, &x)?, &tiling, (h, w), &valid)?;
        x = x.add(&a)?;
        let m = self.mlp1.forward(ctx, &self.norm2.forward(ctx, &x)?, s1.as_deref_mut())?;
        x = x.add(&m)?;
        let a = self.attention(ctx, &self.grid_attn, PartitionKind::Grid, &self.norm3.forward(ctx, &x)?, &tiling, (h, w), &valid)?;
        x = x.add(&a)?;
        let m = self.mlp2.forward(ctx, &self.norm4.forward(ctx, &x)?, s2.as_deref_mut())?;
        x = x.add(&m)?;
        crop_hw(&x, h, w)
    }

    pub fn costs(&self, n: usize, h: usize, w: usize, out: &mut Vec<OpCostRecord>) {
        let tiling = self.tiling(h, w);
        let positions = n * tiling.padded.0 * tiling.padded.1;
        let (g, t) = tiling.groups_tokens(PartitionKind::Window);
        self.block_attn.costs(n * g, t, out);
        mlp_costs(&self.mlp1, positions, out);
        let (g, t) = tiling.groups_tokens(PartitionKind::Grid);
        self.grid_attn.costs(n * g, t, out);
        mlp_costs(&self.mlp2, positions, out);
    }
}

pub(crate) fn mlp_costs(mlp: &SpikingMlp, rows: usize, out: &mut Vec<OpCostRecord>) {
    for (i, layer) in mlp.layers.iter().enumerate() {
        let name = layer.w.name().trim_end_matches(".w").to_string();
        let macs = rows as u64 * layer.macs_per_row();
        if i == 0 {
            out.push(OpCostRecord::ann(name, "linear", macs));
        } else {
            out.push(OpCostRecord::spiking(name, "linear", macs, mlp.neurons[i - 1].name.clone(), mlp.timesteps));
        }
    }
}

impl Module for SpatialBlock {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.norm1.parameters(out);
        self.block_attn.parameters(out);
        self.norm2.parameters(out);
        self.mlp1.parameters(out);
        self.norm3.parameters(out);
        self.grid_attn.parameters(out);
        self.norm4.parameters(out);
        self.mlp2.parameters(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(c: usize) -> SpatialBlockSpec {
        SpatialBlockSpec {
            channels: c,
            heads: 1,
            window_size: 2,
            grid_size: 2,
            mlp_ratio: 2,
            mlp_depth: 2,
            neuron: NeuronConfig::lif(),
            mlp_timesteps: 1,
        }
    }

    fn input(h: usize, w: usize, c: usize) -> Tensor {
        Tensor::new(&[1, h, w, c], (0..h * w * c).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap()
    }

    #[test]
    fn tiling_pads_to_common_multiple() {
        assert_eq!(Tiling::new(8, 10, 8, 8).padded, (8, 16));
        assert_eq!(Tiling::new(2, 2, 8, 8), Tiling { window: 2, grid: 2, padded: (2, 2) });
        assert_eq!(Tiling::new(6, 6, 4, 3).padded, (12, 12));
    }

    #[test]
    fn zero_weights_identity() {
        let b = SpatialBlock::new(&mut Init::new(0), "b", &spec(4)).unwrap();
        for p in b.param_list() {
            p.set_data(vec![0.0; p.numel()]).unwrap();
        }
        let x = input(3, 5, 4);
        let y = b.forward(&mut ForwardCtx::inference(), &x, None).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn padded_shape_preserved_and_maps_recorded() {
        let b = SpatialBlock::new(&mut Init::new(1), "b", &spec(4)).unwrap();
        let mut ctx = ForwardCtx::inference();
        ctx.record_attention = true;
        let x = input(3, 5, 4);
        let y = b.forward(&mut ctx, &x, None).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(ctx.attention.len(), 2);
        let rec = &ctx.attention[0];
        assert_eq!(rec.padded_hw, (4, 6));
        assert_eq!(rec.groups, 6);
        for row in rec.weights.chunks(rec.tokens) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
