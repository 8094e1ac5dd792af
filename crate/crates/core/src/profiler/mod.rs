//! FLOPs counting, firing-rate measurement and the theoretical energy model.

mod cost;
mod energy;
mod firing;
mod published;

pub use cost::{component_of, total_flops, OpCostRecord};
pub use energy::{
    energy_ann, energy_snn, sops, ComponentEnergy, Energy, EnergyReport, LayerEnergy, ANN_UNITS_PER_FLOP, MJ_PER_UNIT,
    SNN_UNITS_PER_SOP,
};
pub use firing::{measure_firing_rates, FiringRateStats, LayerRate};
pub use published::{
    audit_published, audit_row, component_report, reference_energy, AuditFlag, BackboneEnergyRow, ComponentEnergyRow,
    Listed, ReferenceEnergy, ReferenceModel, RowAudit, BACKBONE_ENERGY_ROWS, COMPONENT_ENERGY_ROWS, REFERENCE_ENERGY_JSON,
};

use crate::autodiff::Tensor;
use crate::detect::Detector;
use crate::error::Result;

/// Static costs of one `h × w` window, rates from `calibration`, and the
/// layerwise energy report.
pub fn profile_detector(det: &Detector, h: usize, w: usize, calibration: &[Vec<Tensor>]) -> Result<EnergyReport> {
    let records = det.costs(1, h, w);
    let rates = measure_firing_rates(det, calibration)?;
    let (ph, pw) = crate::backbone::HsvtBackbone::padded_extent(h, w);
    let t_stem = det.config().t_bins;
    let notes = vec![
        format!("input {h}x{w} (padded {ph}x{pw}), batch 1, one window"),
        format!("T = executed spiking timesteps: {t_stem} for stage-1 MLP neurons, 1 for every other spiking layer"),
        "FLOPs = 2 x MACs of linear and conv weights; bias, normalisation and elementwise ops excluded".to_string(),
        "fr measured per spiking layer and applied to the FLOPs it feeds; the single-rate total uses the network-wide fr"
            .to_string(),
        format!(
            "fpn_head is a stand-in neck (1x1 laterals, top-down upsample-add) plus a shared conv head; rates from {} calibration windows",
            rates.samples
        ),
    ];
    Ok(EnergyReport::from_records(&records, &rates)?.with_assumptions(notes))
}
