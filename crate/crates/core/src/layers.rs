//! Parametric building blocks and the per-forward context they share.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::nn::{batch_norm_eval, batch_norm_train, conv2d, layer_norm};
use crate::autodiff::{Module, Parameter, Tensor};
use crate::error::Result;

/// Spike counts gathered during instrumented forward passes.
#[derive(Clone, Debug, Default)]
pub struct SpikeCounts {
    pub spikes: f64,
    /// Neurons × timesteps observed.
    pub neuron_steps: f64,
    pub timesteps_per_call: usize,
    pub calls: usize,
}

/// Retained attention weights of one self-attention call.
#[derive(Clone, Debug)]
pub struct AttentionRecord {
    pub name: String,
    /// Number of attention groups (windows or grid cells) per image.
    pub groups: usize,
    pub heads: usize,
    pub tokens: usize,
    /// `[batch·groups × heads × tokens × tokens]` row-major.
    pub weights: Vec<f64>,
    /// Padded feature extent the partition ran on, and its unpadded size.
    pub padded_hw: (usize, usize),
    pub hw: (usize, usize),
    pub partition: usize,
}

/// State threaded through one forward pass.
#[derive(Debug, Default)]
pub struct ForwardCtx {
    /// Batch statistics and running-stat updates in normalisation layers.
    pub train: bool,
    /// Link parameters into the autodiff graph.
    pub grad: bool,
    pub record_attention: bool,
    pub attention: Vec<AttentionRecord>,
    /// Per-layer spike statistics when `Some`.
    pub spikes: Option<BTreeMap<String, SpikeCounts>>,
    /// Raw spike tensors per layer (for independent recounts).
    pub dump_spikes: Option<Vec<(String, Vec<f64>)>>,
    /// Tensors used in place of the named parameters (gradient checks).
    pub overrides: BTreeMap<String, Tensor>,
}

impl ForwardCtx {
    pub fn training() -> Self {
        ForwardCtx {
            train: true,
            grad: true,
            ..Default::default()
        }
    }

    pub fn inference() -> Self {
        ForwardCtx::default()
    }

    pub fn param(&self, p: &Parameter) -> Tensor {
        if let Some(t) = self.overrides.get(p.name()) {
            return t.clone();
        }
        if self.grad {
            p.value()
        } else {
            p.value().detach()
        }
    }

    /// Substitute `values[i]` for `params[i]` in this pass.
    pub fn override_params(&mut self, params: &[&Parameter], values: &[Tensor]) {
        for (p, v) in params.iter().zip(values) {
            self.overrides.insert(p.name().to_string(), v.clone());
        }
    }

    pub(crate) fn record_spikes(&mut self, name: &str, spikes: &Tensor, timesteps: usize) {
        if let Some(map) = self.spikes.as_mut() {
            let e = map.entry(name.to_string()).or_default();
            e.spikes += spikes.data().iter().sum::<f64>();
            e.neuron_steps += spikes.numel() as f64;
            e.timesteps_per_call = timesteps;
            e.calls += 1;
        }
        if let Some(d) = self.dump_spikes.as_mut() {
            d.push((name.to_string(), spikes.to_vec()));
        }
    }
}

/// Deterministic parameter initialisation.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64) -> Parameter {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        Parameter::new(name, shape, data).expect("finite init")
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], v: f64) -> Parameter {
        let n: usize = shape.iter().product();
        Parameter::new(name, shape, vec![v; n]).expect("finite init")
    }
}

/// `y = x·W + b` over the last axis; `W` is stored `[in × out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Parameter,
    pub b: Option<Parameter>,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, d_in: usize, d_out: usize, bias: bool) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Linear {
            w: init.uniform(format!("{name}.w"), &[d_in, d_out], bound),
            b: bias.then(|| init.constant(format!("{name}.b"), &[d_out], 0.0)),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn forward(&self, ctx: &ForwardCtx, x: &Tensor) -> Result<Tensor> {
        let b = self.b.as_ref().map(|b| ctx.param(b));
        x.linear(&ctx.param(&self.w), b.as_ref())
    }

    /// Multiply-accumulates per output row.
    pub fn macs_per_row(&self) -> u64 {
        (self.d_in() * self.d_out()) as u64
    }
}

impl Module for Linear {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.w);
        if let Some(b) = &self.b {
            out.push(b);
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: Parameter,
    pub b: Option<Parameter>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        init: &mut Init,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        let bound = 1.0 / ((c_in * kernel * kernel) as f64).sqrt();
        Conv2d {
            w: init.uniform(format!("{name}.w"), &[c_out, c_in, kernel, kernel], bound),
            b: bias.then(|| init.constant(format!("{name}.b"), &[c_out], 0.0)),
            stride,
            padding,
        }
    }

    pub fn c_in(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.w.shape()[2]
    }

    pub fn out_extent(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h + 2 * self.padding - k) / self.stride + 1,
            (w + 2 * self.padding - k) / self.stride + 1,
        )
    }

    pub fn forward(&self, ctx: &ForwardCtx, x: &Tensor) -> Result<Tensor> {
        let b = self.b.as_ref().map(|b| ctx.param(b));
        conv2d(x, &ctx.param(&self.w), b.as_ref(), self.stride, self.padding)
    }

    pub fn macs_per_position(&self) -> u64 {
        (self.c_out() * self.c_in() * self.kernel() * self.kernel()) as u64
    }
}

impl Module for Conv2d {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.w);
        if let Some(b) = &self.b {
            out.push(b);
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(init: &mut Init, name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: init.constant(format!("{name}.gamma"), &[d], 1.0),
            beta: init.constant(format!("{name}.beta"), &[d], 0.0),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, ctx: &ForwardCtx, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, &ctx.param(&self.gamma), &ctx.param(&self.beta), self.eps)
    }
}

impl Module for LayerNorm {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.gamma);
        out.push(&self.beta);
    }
}

/// Batch normalisation over the last (channel) axis.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Parameter,
    pub running_var: Parameter,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(init: &mut Init, name: &str, c: usize) -> Self {
        BatchNorm {
            gamma: init.constant(format!("{name}.gamma"), &[c], 1.0),
            beta: init.constant(format!("{name}.beta"), &[c], 0.0),
            running_mean: Parameter::buffer(format!("{name}.running_mean"), &[c], vec![0.0; c]).expect("finite"),
            running_var: Parameter::buffer(format!("{name}.running_var"), &[c], vec![1.0; c]).expect("finite"),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, ctx: &ForwardCtx, x: &Tensor) -> Result<Tensor> {
        let axis = x.ndim() - 1;
        let (g, b) = (ctx.param(&self.gamma), ctx.param(&self.beta));
        if ctx.train {
            let (y, stats) = batch_norm_train(x, &g, &b, axis, self.eps)?;
            let m = self.momentum;
            let unbias = if stats.count > 1 {
                stats.count as f64 / (stats.count - 1) as f64
            } else {
                1.0
            };
            let rm: Vec<f64> = self
                .running_mean
                .value()
                .data()
                .iter()
                .zip(&stats.mean)
                .map(|(r, s)| (1.0 - m) * r + m * s)
                .collect();
            let rv: Vec<f64> = self
                .running_var
                .value()
                .data()
                .iter()
                .zip(&stats.var)
                .map(|(r, s)| (1.0 - m) * r + m * s * unbias)
                .collect();
            self.running_mean.set_data(rm)?;
            self.running_var.set_data(rv)?;
            Ok(y)
        } else {
            batch_norm_eval(
                x,
                &g,
                &b,
                axis,
                self.running_mean.value().data(),
                self.running_var.value().data(),
                self.eps,
            )
        }
    }
}

impl Module for BatchNorm {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.gamma);
        out.push(&self.beta);
        out.push(&self.running_mean);
        out.push(&self.running_var);
    }
}
