use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::backbone::BlockState;
use crate::detect::Detector;
use crate::error::{Error, Result};
use crate::layers::{ForwardCtx, SpikeCounts};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRate {
    pub spikes: f64,
    /// Neurons × timesteps observed.
    pub neuron_steps: f64,
    pub rate: f64,
    pub timesteps_per_call: usize,
}

/// Average firing rate per spiking layer over a calibration pass.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FiringRateStats {
    pub layers: BTreeMap<String, LayerRate>,
    /// Windows (images × steps) that went through the model.
    pub samples: usize,
}

impl FiringRateStats {
    pub fn from_counts(counts: &BTreeMap<String, SpikeCounts>, samples: usize) -> Self {
        let layers = counts
            .iter()
            .map(|(name, c)| {
                let rate = if c.neuron_steps > 0.0 { c.spikes / c.neuron_steps } else { 0.0 };
                (
                    name.clone(),
                    LayerRate {
                        spikes: c.spikes,
                        neuron_steps: c.neuron_steps,
                        rate,
                        timesteps_per_call: c.timesteps_per_call,
                    },
                )
            })
            .collect();
        FiringRateStats { layers, samples }
    }

    pub fn rate(&self, layer: &str) -> Option<f64> {
        self.layers.get(layer).map(|l| l.rate)
    }

    /// Network-wide rate: all spikes over all neuron steps.
    pub fn global_rate(&self) -> f64 {
        let (s, n) = self
            .layers
            .values()
            .fold((0.0, 0.0), |(s, n), l| (s + l.spikes, n + l.neuron_steps));
        if n > 0.0 {
            s / n
        } else {
            0.0
        }
    }
}

/// Run each calibration sequence (a list of `[N × C × H × W]` windows, state
/// carried across windows) and count spikes per layer.
pub fn measure_firing_rates(det: &Detector, sequences: &[Vec<Tensor>]) -> Result<FiringRateStats> {
    let mut ctx = ForwardCtx::inference();
    ctx.spikes = Some(BTreeMap::new());
    let mut samples = 0;
    for seq in sequences {
        let mut state = BlockState::new();
        for x in seq {
            det.forward(&mut ctx, x, &mut state)?;
            samples += x.shape()[0];
        }
    }
    if samples == 0 {
        return Err(Error::invalid("calibration", "no windows"));
    }
    Ok(FiringRateStats::from_counts(ctx.spikes.as_ref().expect("set above"), samples))
}
