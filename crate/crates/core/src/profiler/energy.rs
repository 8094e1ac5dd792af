//! Theoretical 45 nm energy model.
//!
//! Energies are kept as integer multiples of 0.1 pJ so that every sum in a
//! report is exact: an ANN FLOP costs 46 units (4.6 pJ), a synaptic
//! operation 9 units (0.9 pJ). SOPs are rounded to whole operations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::cost::{component_of, OpCostRecord};
use super::firing::FiringRateStats;

pub const ANN_UNITS_PER_FLOP: u128 = 46;
pub const SNN_UNITS_PER_SOP: u128 = 9;
/// Millijoules per energy unit (0.1 pJ).
pub const MJ_PER_UNIT: f64 = 1e-10;

/// Energy in units of 0.1 pJ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Energy(pub u128);

impl Energy {
    pub fn mj(self) -> f64 {
        self.0 as f64 * MJ_PER_UNIT
    }
}

impl std::ops::Add for Energy {
    type Output = Energy;
    fn add(self, o: Energy) -> Energy {
        Energy(self.0 + o.0)
    }
}

impl std::iter::Sum for Energy {
    fn sum<I: Iterator<Item = Energy>>(it: I) -> Energy {
        Energy(it.map(|e| e.0).sum())
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(3);
        write!(f, "{:.*}", p, self.mj())
    }
}

pub fn energy_ann(flops: u64) -> Energy {
    Energy(flops as u128 * ANN_UNITS_PER_FLOP)
}

pub fn energy_snn(sops: u64) -> Energy {
    Energy(sops as u128 * SNN_UNITS_PER_SOP)
}

/// `fr × T × FLOPs`, rounded to whole operations.
pub fn sops(fr: f64, timesteps: usize, flops: u64) -> u64 {
    (fr * timesteps as f64 * flops as f64).round() as u64
}

/// Energy of one weighted operation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEnergy {
    pub path: String,
    pub kind: String,
    pub component: String,
    pub flops: u64,
    pub spike_source: Option<String>,
    pub firing_rate: Option<f64>,
    pub timesteps: usize,
    pub sops: u64,
    pub energy: Energy,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentEnergy {
    /// FLOPs executed densely.
    pub ann_flops: u64,
    /// FLOPs of spike-driven operations before sparsity.
    pub spiking_flops: u64,
    pub sops: u64,
    pub e_ann: Energy,
    pub e_snn: Energy,
    pub e_total: Energy,
}

impl ComponentEnergy {
    pub fn from_counts(ann_flops: u64, sops: u64) -> Self {
        let (e_ann, e_snn) = (energy_ann(ann_flops), energy_snn(sops));
        ComponentEnergy {
            ann_flops,
            spiking_flops: 0,
            sops,
            e_ann,
            e_snn,
            e_total: e_ann + e_snn,
        }
    }

    fn add(&mut self, l: &LayerEnergy) {
        if l.spike_source.is_some() {
            self.spiking_flops += l.flops;
            self.sops += l.sops;
            self.e_snn = self.e_snn + l.energy;
        } else {
            self.ann_flops += l.flops;
            self.e_ann = self.e_ann + l.energy;
        }
        self.e_total = self.e_ann + self.e_snn;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_ann: Energy,
    pub e_snn: Energy,
    pub e_total: Energy,
    pub ann_flops: u64,
    pub spiking_flops: u64,
    pub sops: u64,
    /// Keyed by component name (`backbone`, `fpn_head`).
    pub components: BTreeMap<String, ComponentEnergy>,
    pub layers: Vec<LayerEnergy>,
    /// Total with one network-wide firing rate applied to every spiking layer.
    pub e_total_global_rate: Energy,
    pub global_rate: f64,
    pub assumptions: Vec<String>,
}

impl EnergyReport {
    /// Build a report from component totals; totals are the exact sums.
    pub fn from_components(components: BTreeMap<String, ComponentEnergy>) -> Self {
        let e_ann = components.values().map(|c| c.e_ann).sum();
        let e_snn = components.values().map(|c| c.e_snn).sum();
        EnergyReport {
            e_ann,
            e_snn,
            e_total: e_ann + e_snn,
            ann_flops: components.values().map(|c| c.ann_flops).sum(),
            spiking_flops: components.values().map(|c| c.spiking_flops).sum(),
            sops: components.values().map(|c| c.sops).sum(),
            e_total_global_rate: e_ann + e_snn,
            global_rate: f64::NAN,
            components,
            layers: Vec::new(),
            assumptions: Vec::new(),
        }
    }

    /// Layerwise report: each spiking record uses the rate of the layer that
    /// feeds it.
    pub fn from_records(records: &[OpCostRecord], rates: &FiringRateStats) -> Result<Self> {
        let mut layers = Vec::with_capacity(records.len());
        let global = rates.global_rate();
        let mut global_snn = Energy::default();
        for r in records {
            let (fr, s, energy) = match &r.spike_source {
                Some(src) => {
                    let fr = rates
                        .rate(src)
                        .ok_or_else(|| Error::invalid("energy report", format!("no firing rate for {src}")))?;
                    let s = sops(fr, r.timesteps, r.flops);
                    global_snn = global_snn + energy_snn(sops(global, r.timesteps, r.flops));
                    (Some(fr), s, energy_snn(s))
                }
                None => (None, 0, energy_ann(r.flops)),
            };
            layers.push(LayerEnergy {
                path: r.path.clone(),
                kind: r.kind.clone(),
                component: component_of(&r.path).to_string(),
                flops: r.flops,
                spike_source: r.spike_source.clone(),
                firing_rate: fr,
                timesteps: r.timesteps,
                sops: s,
                energy,
            });
        }
        let mut components: BTreeMap<String, ComponentEnergy> = BTreeMap::new();
        for c in ["backbone", "fpn_head"] {
            components.insert(c.to_string(), ComponentEnergy::default());
        }
        for l in &layers {
            components.entry(l.component.clone()).or_default().add(l);
        }
        let mut report = EnergyReport::from_components(components);
        report.e_total_global_rate = report.e_ann + global_snn;
        report.global_rate = global;
        report.layers = layers;
        Ok(report)
    }

    pub fn with_assumptions(mut self, notes: impl IntoIterator<Item = String>) -> Self {
        self.assumptions.extend(notes);
        self
    }

    /// Backbone + FPN/head equals the total, per energy kind.
    pub fn is_additive(&self) -> bool {
        let sum = |f: fn(&ComponentEnergy) -> Energy| self.components.values().map(f).sum::<Energy>();
        sum(|c| c.e_ann) == self.e_ann && sum(|c| c.e_snn) == self.e_snn && sum(|c| c.e_total) == self.e_total
            && self.e_total == self.e_ann + self.e_snn
    }

    /// Line-delimited JSON: one record per layer, component and total.
    pub fn to_json_lines(&self) -> String {
        use serde_json::json;
        let mut out = String::new();
        let mut push = |v: serde_json::Value| {
            out.push_str(&v.to_string());
            out.push('\n');
        };
        for l in &self.layers {
            push(json!({"record": "layer", "path": l.path, "kind": l.kind, "component": l.component,
                "flops": l.flops, "spiking": l.spike_source.is_some(), "spike_source": l.spike_source,
                "firing_rate": l.firing_rate, "timesteps": l.timesteps, "sops": l.sops, "energy_mj": l.energy.mj()}));
        }
        for (name, c) in &self.components {
            push(json!({"record": "component", "component": name, "ann_flops": c.ann_flops,
                "spiking_flops": c.spiking_flops, "sops": c.sops, "e_ann_mj": c.e_ann.mj(),
                "e_snn_mj": c.e_snn.mj(), "e_total_mj": c.e_total.mj()}));
        }
        push(json!({"record": "total", "ann_flops": self.ann_flops, "spiking_flops": self.spiking_flops,
            "sops": self.sops, "e_ann_mj": self.e_ann.mj(), "e_snn_mj": self.e_snn.mj(),
            "e_total_mj": self.e_total.mj(), "global_rate": if self.global_rate.is_finite() { json!(self.global_rate) } else { json!(null) },
            "e_total_global_rate_mj": self.e_total_global_rate.mj(), "additive": self.is_additive()}));
        for a in &self.assumptions {
            push(json!({"record": "assumption", "note": a}));
        }
        out
    }
}

impl fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>14} {:>14} {:>11} {:>11} {:>11}", "component", "FLOPs(M)", "SOPs(M)", "E_ANN(mJ)", "E_SNN(mJ)", "E(mJ)")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, flops: u64, sops: u64, a: Energy, s: Energy, t: Energy| {
            writeln!(
                f,
                "{:<12} {:>14.2} {:>14.2} {:>11.4} {:>11.4} {:>11.4}",
                name,
                flops as f64 / 1e6,
                sops as f64 / 1e6,
                a.mj(),
                s.mj(),
                t.mj()
            )
        };
        for (name, c) in &self.components {
            row(f, name, c.ann_flops + c.spiking_flops, c.sops, c.e_ann, c.e_snn, c.e_total)?;
        }
        row(
            f,
            "total",
            self.ann_flops + self.spiking_flops,
            self.sops,
            self.e_ann,
            self.e_snn,
            self.e_total,
        )?;
        if self.global_rate.is_finite() {
            writeln!(
                f,
                "single-rate total: {:.4} mJ at fr {:.4}",
                self.e_total_global_rate.mj(),
                self.global_rate
            )?;
        }
        for a in &self.assumptions {
            writeln!(f, "note: {a}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_costs() {
        assert_eq!(energy_ann(0), Energy(0));
        assert_eq!(energy_ann(10), Energy(460));
        assert_eq!(energy_snn(10), Energy(90));
        assert!((energy_ann(1_000_000_000).mj() - 4.6).abs() < 1e-12);
        assert_eq!(sops(0.5, 2, 12345), 12345);
    }

    #[test]
    fn ann_energy_is_linear() {
        for (a, b) in [(0, 7), (123_456_789, 987_654_321), (u32::MAX as u64, 5)] {
            assert_eq!(energy_ann(a + b), energy_ann(a) + energy_ann(b));
        }
    }

    #[test]
    fn layerwise_report() {
        let recs = vec![
            OpCostRecord::ann("backbone.stage1.conv", "conv", 100),
            OpCostRecord::spiking("backbone.stage1.mlp.fc2", "linear", 50, "sn", 4),
            OpCostRecord::ann("head.pred", "conv1x1", 10),
        ];
        let mut rates = FiringRateStats::default();
        rates.layers.insert(
            "sn".into(),
            super::super::firing::LayerRate {
                spikes: 1.0,
                neuron_steps: 4.0,
                rate: 0.25,
                timesteps_per_call: 4,
            },
        );
        let r = EnergyReport::from_records(&recs, &rates).unwrap();
        // 0.25 × 4 × 100 FLOPs = 100 SOPs
        assert_eq!(r.sops, 100);
        assert_eq!(r.e_snn, energy_snn(100));
        assert_eq!(r.e_ann, energy_ann(220));
        assert_eq!(r.components["backbone"].e_total, energy_ann(200) + energy_snn(100));
        assert!(r.is_additive());
        assert_eq!(r.e_total_global_rate, r.e_total);
        assert_eq!(r.to_json_lines().lines().count(), 3 + 2 + 1);

        rates.layers.clear();
        assert!(EnergyReport::from_records(&recs, &rates).is_err());
    }
}
