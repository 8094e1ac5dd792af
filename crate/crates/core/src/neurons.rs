//! Spiking neurons (LIF, IF) with hard reset, surrogate gradients, and the
//! spiking MLP sublayer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::kernels::sigmoid;
use crate::autodiff::{Module, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::layers::{ForwardCtx, Init, Linear};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuronKind {
    Lif,
    If,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surrogate {
    Atan,
    Sigmoid,
}

impl Surrogate {
    /// Sharpness giving `g'(0) = 1`.
    pub fn default_alpha(self) -> f64 {
        match self {
            Surrogate::Atan => 2.0,
            Surrogate::Sigmoid => 4.0,
        }
    }

    /// Smooth primitive `g(u)` whose derivative is the surrogate gradient.
    pub fn primitive(self, alpha: f64, u: f64) -> f64 {
        match self {
            Surrogate::Atan => (PI / 2.0 * alpha * u).atan() / PI + 0.5,
            Surrogate::Sigmoid => sigmoid(alpha * u),
        }
    }

    pub fn grad(self, alpha: f64, u: f64) -> f64 {
        match self {
            Surrogate::Atan => {
                let z = PI / 2.0 * alpha * u;
                alpha / (2.0 * (1.0 + z * z))
            }
            Surrogate::Sigmoid => {
                let s = sigmoid(alpha * u);
                alpha * s * (1.0 - s)
            }
        }
    }
}

/// Forward behaviour of the spike nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpikeMode {
    /// Heaviside forward, surrogate backward.
    #[default]
    Hard,
    /// Surrogate primitive forward (used for finite-difference checks).
    Relaxed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronConfig {
    pub kind: NeuronKind,
    pub v_threshold: f64,
    pub v_reset: f64,
    pub tau: f64,
    pub surrogate: Surrogate,
    pub alpha: f64,
    pub mode: SpikeMode,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        NeuronConfig {
            kind: NeuronKind::Lif,
            v_threshold: 1.0,
            v_reset: 0.0,
            tau: 2.0,
            surrogate: Surrogate::Atan,
            alpha: Surrogate::Atan.default_alpha(),
            mode: SpikeMode::Hard,
        }
    }
}

impl NeuronConfig {
    pub fn lif() -> Self {
        Self::default()
    }

    pub fn if_neuron() -> Self {
        NeuronConfig {
            kind: NeuronKind::If,
            ..Self::default()
        }
    }

    pub fn with_surrogate(mut self, s: Surrogate) -> Self {
        self.surrogate = s;
        self.alpha = s.default_alpha();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == NeuronKind::Lif && !(self.tau > 1.0) {
            return Err(Error::invalid("neuron", format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.v_threshold > self.v_reset) {
            return Err(Error::invalid(
                "neuron",
                format!("v_threshold {} must exceed v_reset {}", self.v_threshold, self.v_reset),
            ));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("neuron", format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn surrogate_grad(&self, u: f64) -> f64 {
        self.surrogate.grad(self.alpha, u)
    }
}

/// `Θ(u)` forward (or `g(u)` in relaxed mode), `g'(u)` backward.
pub fn spike_fn(u: &Tensor, cfg: &NeuronConfig) -> Result<Tensor> {
    let (sur, alpha, mode) = (cfg.surrogate, cfg.alpha, cfg.mode);
    let data: Vec<f64> = u
        .data()
        .iter()
        .map(|&v| match mode {
            SpikeMode::Hard => {
                if v >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeMode::Relaxed => sur.primitive(alpha, v),
        })
        .collect();
    Tensor::from_op(
        "spike",
        u.shape().to_vec(),
        data,
        &[u],
        Box::new(move |g, _, inp| {
            vec![Some(
                g.iter()
                    .zip(inp[0].data())
                    .map(|(gv, &uv)| gv * sur.grad(alpha, uv))
                    .collect(),
            )]
        }),
    )
}

/// Membrane potential, shaped like the neuron's input.
#[derive(Clone, Debug)]
pub struct NeuronState {
    pub v: Tensor,
}

impl NeuronState {
    pub fn rest(shape: &[usize], cfg: &NeuronConfig) -> Self {
        NeuronState {
            v: Tensor::full(shape, cfg.v_reset),
        }
    }

    pub fn detach(&self) -> Self {
        NeuronState { v: self.v.detach() }
    }
}

/// Charge, fire, hard reset.
pub fn neuron_step(cfg: &NeuronConfig, state: &NeuronState, input: &Tensor) -> Result<(Tensor, NeuronState)> {
    if state.v.shape() != input.shape() {
        return Err(Error::shape(
            "neuron_step",
            format!("state {:?} vs input {:?}", state.v.shape(), input.shape()),
        ));
    }
    let v = &state.v;
    let charged = match cfg.kind {
        NeuronKind::If => v.add(input)?,
        // v + (x - (v - v_reset)) / tau
        NeuronKind::Lif => v.add(&input.sub(&v.add_scalar(-cfg.v_reset)?)?.mul_scalar(1.0 / cfg.tau)?)?,
    };
    let s = spike_fn(&charged.add_scalar(-cfg.v_threshold)?, cfg)?;
    let keep = s.neg()?.add_scalar(1.0)?;
    let after = charged.mul(&keep)?.add(&s.mul_scalar(cfg.v_reset)?)?;
    Ok((s, NeuronState { v: after }))
}

/// A named spiking layer: runs the neuron and reports spike statistics.
#[derive(Clone, Debug)]
pub struct SpikingNeuron {
    pub name: String,
    pub cfg: NeuronConfig,
}

impl SpikingNeuron {
    pub fn new(name: impl Into<String>, cfg: NeuronConfig) -> Self {
        SpikingNeuron { name: name.into(), cfg }
    }

    pub fn step(&self, ctx: &mut ForwardCtx, state: &NeuronState, x: &Tensor) -> Result<(Tensor, NeuronState)> {
        let (s, st) = neuron_step(&self.cfg, state, x)?;
        ctx.record_spikes(&self.name, &s, 1);
        Ok((s, st))
    }

    /// Drive the neuron with the same input for `timesteps` steps from
    /// `state`; returns the mean spike train and the final state.
    pub fn run(
        &self,
        ctx: &mut ForwardCtx,
        state: NeuronState,
        x: &Tensor,
        timesteps: usize,
    ) -> Result<(Tensor, NeuronState)> {
        let mut st = state;
        let mut acc: Option<Tensor> = None;
        for _ in 0..timesteps.max(1) {
            let (s, next) = neuron_step(&self.cfg, &st, x)?;
            ctx.record_spikes(&self.name, &s, timesteps.max(1));
            acc = Some(match acc {
                None => s,
                Some(a) => a.add(&s)?,
            });
            st = next;
        }
        let total = acc.expect("at least one step");
        let mean = if timesteps > 1 {
            total.mul_scalar(1.0 / timesteps as f64)?
        } else {
            total
        };
        Ok((mean, st))
    }
}

/// Feed-forward sublayer with spiking hidden activations:
/// `C → r·C`, spike, (`r·C → r·C`, spike)*, `r·C → C` output projection.
#[derive(Clone, Debug)]
pub struct SpikingMlp {
    pub layers: Vec<Linear>,
    pub neurons: Vec<SpikingNeuron>,
    pub timesteps: usize,
}

impl SpikingMlp {
    /// `depth` counts linear layers (≥ 2); a neuron sits between each pair.
    pub fn new(
        init: &mut Init,
        name: &str,
        channels: usize,
        ratio: usize,
        depth: usize,
        cfg: NeuronConfig,
        timesteps: usize,
    ) -> Self {
        let hidden = channels * ratio.max(1);
        let depth = depth.max(2);
        let mut layers = Vec::with_capacity(depth);
        let mut neurons = Vec::with_capacity(depth - 1);
        for i in 0..depth {
            let d_in = if i == 0 { channels } else { hidden };
            let d_out = if i + 1 == depth { channels } else { hidden };
            layers.push(Linear::new(init, &format!("{name}.fc{}", i + 1), d_in, d_out, true));
            if i + 1 < depth {
                neurons.push(SpikingNeuron::new(format!("{name}.sn{}", i + 1), cfg));
            }
        }
        SpikingMlp {
            layers,
            neurons,
            timesteps: timesteps.max(1),
        }
    }

    /// `states` holds one membrane per neuron when persistent across calls;
    /// pass `None` for per-call (transient) neurons.
    pub fn forward(
        &self,
        ctx: &mut ForwardCtx,
        x: &Tensor,
        mut states: Option<&mut Vec<NeuronState>>,
    ) -> Result<Tensor> {
        let mut h = self.layers[0].forward(ctx, x)?;
        for (i, neuron) in self.neurons.iter().enumerate() {
            let init = match states.as_deref() {
                Some(s) if s.len() > i && s[i].v.shape() == h.shape() => s[i].clone(),
                _ => NeuronState::rest(h.shape(), &neuron.cfg),
            };
            let (spikes, st) = neuron.run(ctx, init, &h, self.timesteps)?;
            if let Some(s) = states.as_deref_mut() {
                if s.len() > i {
                    s[i] = st;
                } else {
                    s.push(st);
                }
            }
            h = self.layers[i + 1].forward(ctx, &spikes)?;
        }
        Ok(h)
    }
}

impl Module for SpikingMlp {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        for l in &self.layers {
            l.parameters(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_run(cfg: &NeuronConfig, inputs: &[f64]) -> Vec<(f64, f64)> {
        let mut st = NeuronState::rest(&[1], cfg);
        inputs
            .iter()
            .map(|&x| {
                let (s, next) = neuron_step(cfg, &st, &Tensor::new(&[1], vec![x]).unwrap()).unwrap();
                st = next;
                (s.item(), st.v.item())
            })
            .collect()
    }

    #[test]
    fn silent_without_input() {
        let out = scalar_run(&NeuronConfig::lif(), &[0.0; 20]);
        assert!(out.iter().all(|(s, v)| *s == 0.0 && *v == 0.0));
    }

    #[test]
    fn if_fires_on_third_step() {
        let out = scalar_run(&NeuronConfig::if_neuron(), &[0.4; 3]);
        assert_eq!(out.iter().map(|o| o.0).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        assert!((out[1].1 - 0.8).abs() < 1e-12);
        assert_eq!(out[2].1, 0.0);
    }

    #[test]
    fn lif_single_step_spike() {
        let out = scalar_run(&NeuronConfig::lif(), &[2.0]);
        assert_eq!(out, vec![(1.0, 0.0)]);
    }

    #[test]
    fn surrogate_peaks() {
        assert_eq!(NeuronConfig::lif().surrogate_grad(0.0), 1.0);
        let sig = NeuronConfig::lif().with_surrogate(Surrogate::Sigmoid);
        assert_eq!(sig.surrogate_grad(0.0), 1.0);
        for s in [Surrogate::Atan, Surrogate::Sigmoid] {
            for u in [0.1, 0.7, 3.0] {
                assert!((s.grad(s.default_alpha(), u) - s.grad(s.default_alpha(), -u)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn validation() {
        let mut c = NeuronConfig::lif();
        c.tau = 1.0;
        assert!(c.validate().is_err());
        let mut c = NeuronConfig::lif();
        c.v_reset = 2.0;
        assert!(c.validate().is_err());
        assert!(NeuronConfig::if_neuron().validate().is_ok());
    }

    #[test]
    fn zero_weight_mlp_is_silent() {
        let mut init = Init::new(0);
        let mlp = SpikingMlp::new(&mut init, "m", 4, 2, 2, NeuronConfig::lif(), 1);
        for p in mlp.param_list() {
            p.set_data(vec![0.0; p.numel()]).unwrap();
        }
        let x = Tensor::new(&[3, 4], (0..12).map(|v| v as f64).collect()).unwrap();
        let mut ctx = ForwardCtx::inference();
        ctx.dump_spikes = Some(Vec::new());
        let y = mlp.forward(&mut ctx, &x, None).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
        let dumped = ctx.dump_spikes.unwrap();
        assert!(dumped.iter().all(|(_, s)| s.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn mlp_inner_activation_is_binary() {
        let mut init = Init::new(3);
        let mlp = SpikingMlp::new(&mut init, "m", 4, 4, 2, NeuronConfig::if_neuron(), 1);
        let x = Tensor::new(&[5, 4], (0..20).map(|v| (v as f64 - 10.0) * 0.7).collect()).unwrap();
        let mut ctx = ForwardCtx::inference();
        ctx.dump_spikes = Some(Vec::new());
        mlp.forward(&mut ctx, &x, None).unwrap();
        let dumped = ctx.dump_spikes.unwrap();
        assert!(dumped[0].1.iter().all(|v| *v == 0.0 || *v == 1.0));
        assert!(dumped[0].1.iter().any(|v| *v == 1.0));
    }
}
