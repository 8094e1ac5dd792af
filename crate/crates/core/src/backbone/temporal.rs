//! Per-position recurrent modules mixing the current features with state
//! carried from the previous window.

use crate::autodiff::{Module, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::layers::{BatchNorm, ForwardCtx, Init, Linear};
use crate::neurons::{NeuronConfig, NeuronState, SpikingNeuron};
use crate::profiler::OpCostRecord;

use super::config::TemporalKind;

/// Synaptic trace decay of the stateful-synapse module.
pub const SYNAPSE_LAMBDA: f64 = 0.5;

/// Carry of one temporal module; tensors are channels-last like the input.
#[derive(Clone, Debug)]
pub struct TemporalState {
    pub h: Tensor,
    /// LSTM cell.
    pub c: Option<Tensor>,
    /// Persistent membranes (STFE: input neuron, hidden neuron).
    pub membranes: Vec<NeuronState>,
    /// Synaptic trace.
    pub trace: Option<Tensor>,
}

impl TemporalState {
    pub fn detach(&self) -> Self {
        TemporalState {
            h: self.h.detach(),
            c: self.c.as_ref().map(Tensor::detach),
            membranes: self.membranes.iter().map(NeuronState::detach).collect(),
            trace: self.trace.as_ref().map(Tensor::detach),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Lstm {
    /// `[x; h] → [i, f, o, g]`.
    pub gates: Linear,
    pub channels: usize,
}

#[derive(Clone, Debug)]
pub struct Stfe {
    pub conv: Linear,
    pub bn: BatchNorm,
    pub sn_x: SpikingNeuron,
    pub recurrent: Linear,
    pub sn_h: SpikingNeuron,
    pub channels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlainMode {
    Plain,
    FeedBack,
    Stateful,
}

#[derive(Clone, Debug)]
pub struct PlainNet {
    pub w: Linear,
    pub sn: SpikingNeuron,
    pub mode: PlainMode,
    pub channels: usize,
}

#[derive(Clone, Debug)]
pub enum TemporalModule {
    Lstm(Lstm),
    Stfe(Stfe),
    Plain(PlainNet),
    None,
}

fn zeros_like(x: &Tensor) -> Tensor {
    Tensor::zeros(x.shape())
}

impl TemporalModule {
    pub fn new(init: &mut Init, name: &str, kind: TemporalKind, channels: usize, neuron: NeuronConfig) -> Self {
        let c = channels;
        let plain = |init: &mut Init, mode| {
            TemporalModule::Plain(PlainNet {
                w: Linear::new(init, &format!("{name}.w"), 2 * c, c, false),
                sn: SpikingNeuron::new(format!("{name}.sn"), neuron),
                mode,
                channels: c,
            })
        };
        match kind {
            TemporalKind::Lstm => TemporalModule::Lstm(Lstm {
                gates: Linear::new(init, &format!("{name}.gates"), 2 * c, 4 * c, true),
                channels: c,
            }),
            TemporalKind::Stfe => TemporalModule::Stfe(Stfe {
                conv: Linear::new(init, &format!("{name}.conv"), c, c, true),
                bn: BatchNorm::new(init, &format!("{name}.bn"), c),
                sn_x: SpikingNeuron::new(format!("{name}.sn_x"), neuron),
                recurrent: Linear::new(init, &format!("{name}.recurrent"), 2 * c, c, true),
                sn_h: SpikingNeuron::new(format!("{name}.sn_h"), neuron),
                channels: c,
            }),
            TemporalKind::PlainNet => plain(init, PlainMode::Plain),
            TemporalKind::FeedBackNet => plain(init, PlainMode::FeedBack),
            TemporalKind::StatefulSynapse => plain(init, PlainMode::Stateful),
            TemporalKind::None => TemporalModule::None,
        }
    }

    pub fn kind(&self) -> TemporalKind {
        match self {
            TemporalModule::Lstm(_) => TemporalKind::Lstm,
            TemporalModule::Stfe(_) => TemporalKind::Stfe,
            TemporalModule::Plain(p) => match p.mode {
                PlainMode::Plain => TemporalKind::PlainNet,
                PlainMode::FeedBack => TemporalKind::FeedBackNet,
                PlainMode::Stateful => TemporalKind::StatefulSynapse,
            },
            TemporalModule::None => TemporalKind::None,
        }
    }

    /// One window: `x` is `[N, H, W, C]`; a missing state starts at rest.
    pub fn step(
        &self,
        ctx: &mut ForwardCtx,
        x: &Tensor,
        state: Option<&TemporalState>,
    ) -> Result<(Tensor, Option<TemporalState>)> {
        if let Some(st) = state {
            if st.h.shape() != x.shape() {
                return Err(Error::shape(
                    "temporal_step",
                    format!("state {:?} does not match input {:?}", st.h.shape(), x.shape()),
                ));
            }
        }
        let axis = x.ndim() - 1;
        let h = state.map_or_else(|| zeros_like(x), |s| s.h.clone());
        match self {
            TemporalModule::None => Ok((x.clone(), None)),
            TemporalModule::Lstm(m) => {
                let c = state.and_then(|s| s.c.clone()).unwrap_or_else(|| zeros_like(x));
                let z = m.gates.forward(ctx, &Tensor::concat(&[x, &h], axis)?)?;
                let ch = m.channels;
                let i = z.narrow(axis, 0, ch)?.sigmoid()?;
                let f = z.narrow(axis, ch, ch)?.sigmoid()?;
                let o = z.narrow(axis, 2 * ch, ch)?.sigmoid()?;
                let g = z.narrow(axis, 3 * ch, ch)?.tanh()?;
                let c2 = f.mul(&c)?.add(&i.mul(&g)?)?;
                let h2 = o.mul(&c2.tanh()?)?;
                Ok((
                    h2.clone(),
                    Some(TemporalState {
                        h: h2,
                        c: Some(c2),
                        membranes: Vec::new(),
                        trace: None,
                    }),
                ))
            }
            TemporalModule::Stfe(m) => {
                let rest = |n: &SpikingNeuron| NeuronState::rest(x.shape(), &n.cfg);
                let (v_x, v_h) = match state {
                    Some(s) if s.membranes.len() == 2 => (s.membranes[0].clone(), s.membranes[1].clone()),
                    _ => (rest(&m.sn_x), rest(&m.sn_h)),
                };
                let u = m.bn.forward(ctx, &m.conv.forward(ctx, x)?)?;
                let (s, v_x) = m.sn_x.step(ctx, &v_x, &u)?;
                let z = m.recurrent.forward(ctx, &Tensor::concat(&[&s, &h], axis)?)?;
                let (h2, v_h) = m.sn_h.step(ctx, &v_h, &z)?;
                Ok((
                    h2.clone(),
                    Some(TemporalState {
                        h: h2,
                        c: None,
                        membranes: vec![v_x, v_h],
                        trace: None,
                    }),
                ))
            }
            TemporalModule::Plain(m) => {
                let fire = |ctx: &mut ForwardCtx, drive: &Tensor| {
                    let rest = NeuronState::rest(drive.shape(), &m.sn.cfg);
                    m.sn.step(ctx, &rest, drive).map(|(s, _)| s)
                };
                let drive = |ctx: &ForwardCtx, h: &Tensor| m.w.forward(ctx, &Tensor::concat(&[x, h], axis)?);
                let (out, trace) = match m.mode {
                    PlainMode::Plain => (fire(ctx, &drive(ctx, &h)?)?, None),
                    PlainMode::FeedBack => {
                        let h1 = fire(ctx, &drive(ctx, &h)?)?;
                        (fire(ctx, &drive(ctx, &h1)?)?, None)
                    }
                    PlainMode::Stateful => {
                        let a = state.and_then(|s| s.trace.clone()).unwrap_or_else(|| zeros_like(x));
                        let a2 = a
                            .mul_scalar(SYNAPSE_LAMBDA)?
                            .add(&drive(ctx, &h)?.mul_scalar(1.0 - SYNAPSE_LAMBDA)?)?;
                        (fire(ctx, &a2)?, Some(a2))
                    }
                };
                Ok((
                    out.clone(),
                    Some(TemporalState {
                        h: out,
                        c: None,
                        membranes: Vec::new(),
                        trace,
                    }),
                ))
            }
        }
    }

    /// Weighted-op costs for one window over `positions` spatial positions.
    pub fn costs(&self, name: &str, positions: usize, out: &mut Vec<OpCostRecord>) {
        let p = positions as u64;
        match self {
            TemporalModule::None => {}
            TemporalModule::Lstm(m) => {
                let half = p * (m.channels * 4 * m.channels) as u64;
                out.push(OpCostRecord::ann(format!("{name}.gates.x"), "linear", half));
                out.push(OpCostRecord::ann(format!("{name}.gates.h"), "linear", half));
            }
            TemporalModule::Stfe(m) => {
                let c = m.channels as u64;
                out.push(OpCostRecord::ann(format!("{name}.conv"), "conv1x1", p * c * c));
                out.push(OpCostRecord::spiking(format!("{name}.recurrent.s"), "linear", p * c * c, m.sn_x.name.clone(), 1));
                out.push(OpCostRecord::spiking(format!("{name}.recurrent.h"), "linear", p * c * c, m.sn_h.name.clone(), 1));
            }
            TemporalModule::Plain(m) => {
                let c = m.channels as u64;
                let passes = if m.mode == PlainMode::FeedBack { 2 } else { 1 };
                for k in 0..passes {
                    let tag = if passes == 1 { String::new() } else { format!(".pass{}", k + 1) };
                    out.push(OpCostRecord::ann(format!("{name}.w.x{tag}"), "linear", p * c * c));
                    out.push(OpCostRecord::spiking(format!("{name}.w.h{tag}"), "linear", p * c * c, m.sn.name.clone(), 1));
                }
            }
        }
    }
}

impl Module for TemporalModule {
    fn parameters<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        match self {
            TemporalModule::None => {}
            TemporalModule::Lstm(m) => m.gates.parameters(out),
            TemporalModule::Stfe(m) => {
                m.conv.parameters(out);
                m.bn.parameters(out);
                m.recurrent.parameters(out);
            }
            TemporalModule::Plain(m) => m.w.parameters(out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    fn module(kind: TemporalKind, c: usize) -> TemporalModule {
        TemporalModule::new(&mut Init::new(7), "t", kind, c, NeuronConfig::lif())
    }

    fn zero_params(m: &TemporalModule) {
        for p in m.param_list() {
            if p.is_trainable() {
                p.set_data(vec![0.0; p.numel()]).unwrap();
            }
        }
    }

    #[test]
    fn table_parameter_counts() {
        let c = 256;
        assert_eq!(module(TemporalKind::Lstm, c).num_params(), 525_312);
        assert_eq!(module(TemporalKind::Stfe, c).num_params(), 197_632);
        for k in [TemporalKind::PlainNet, TemporalKind::FeedBackNet, TemporalKind::StatefulSynapse] {
            assert_eq!(module(k, c).num_params(), 131_072);
        }
        assert_eq!(module(TemporalKind::None, c).num_params(), 0);
    }

    #[test]
    fn lstm_zero_weights() {
        let m = module(TemporalKind::Lstm, 3);
        zero_params(&m);
        let x = Tensor::new(&[1, 2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let (h, st) = m.step(&mut ForwardCtx::inference(), &x, None).unwrap();
        assert!(h.data().iter().all(|v| *v == 0.0));
        assert!(st.unwrap().c.unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn spiking_modules_zero_weights_silent_and_binary() {
        let x = Tensor::new(&[1, 2, 2, 4], (0..16).map(|v| v as f64 - 5.0).collect()).unwrap();
        for k in [TemporalKind::Stfe, TemporalKind::PlainNet, TemporalKind::FeedBackNet, TemporalKind::StatefulSynapse] {
            let m = module(k, 4);
            let mut ctx = ForwardCtx::training();
            let (h, _) = m.step(&mut ctx, &x, None).unwrap();
            assert!(h.data().iter().all(|v| *v == 0.0 || *v == 1.0), "{k:?}");
            zero_params(&m);
            let (h, _) = m.step(&mut ctx, &x, None).unwrap();
            assert!(h.data().iter().all(|v| *v == 0.0), "{k:?}");
        }
    }

    #[test]
    fn zero_input_zero_state_no_spikes() {
        let x = Tensor::zeros(&[1, 3, 3, 4]);
        for k in [TemporalKind::PlainNet, TemporalKind::FeedBackNet, TemporalKind::StatefulSynapse] {
            let (h, _) = module(k, 4).step(&mut ForwardCtx::inference(), &x, None).unwrap();
            assert!(h.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn flops_ratios() {
        let c = 256;
        let flops = |k| {
            let mut v = Vec::new();
            module(k, c).costs("t", 16 * 16, &mut v);
            crate::profiler::total_flops(&v)
        };
        let plain = flops(TemporalKind::PlainNet);
        assert_eq!(plain, 67_108_864);
        assert_eq!(flops(TemporalKind::FeedBackNet), 2 * plain);
        assert_eq!(flops(TemporalKind::StatefulSynapse), plain);
        assert_eq!(flops(TemporalKind::Lstm), 4 * plain);
        assert_eq!(2 * flops(TemporalKind::Stfe), 3 * plain);
    }

    #[test]
    fn lstm_gradient_check() {
        let m = module(TemporalKind::Lstm, 2);
        let params = m.param_list();
        let x = Tensor::new(&[1, 1, 2, 2], vec![0.3, -0.2, 0.5, 0.1]).unwrap();
        let h0 = Tensor::new(&[1, 1, 2, 2], vec![0.1, 0.2, -0.3, 0.05]).unwrap();
        let c0 = Tensor::new(&[1, 1, 2, 2], vec![-0.4, 0.3, 0.2, 0.1]).unwrap();
        let mut inputs = vec![x, h0, c0];
        inputs.extend(params.iter().map(|p| p.value().detach()));
        let err = grad_check(
            |v| {
                let mut ctx = ForwardCtx::training();
                ctx.override_params(&params, &v[3..]);
                let st = TemporalState {
                    h: v[1].clone(),
                    c: Some(v[2].clone()),
                    membranes: Vec::new(),
                    trace: None,
                };
                let (h, st) = m.step(&mut ctx, &v[0], Some(&st))?;
                Tensor::concat(&[&h, &st.unwrap().c.unwrap()], 3)
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "rel err {err}");
    }
}
