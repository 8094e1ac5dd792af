//! Published energy tables and a consistency audit against the energy model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backbone::Variant;

use super::energy::{energy_ann, energy_snn, ComponentEnergy, Energy, EnergyReport};

/// A printed number and the count of decimals it was printed with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Listed {
    pub value: f64,
    pub decimals: u32,
}

impl Listed {
    pub const fn new(value: f64, decimals: u32) -> Self {
        Listed { value, decimals }
    }

    /// One unit in the last printed digit.
    pub fn tolerance(&self) -> f64 {
        10f64.powi(-(self.decimals as i32))
    }

    pub fn matches(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.tolerance() + 1e-12
    }

    /// `x` printed at the same precision.
    pub fn render(&self, x: f64) -> String {
        format!("{:.*}", self.decimals as usize, x)
    }

    pub fn text(&self) -> String {
        self.render(self.value)
    }
}

/// Backbone energy row: FLOPs and SOPs in millions, energies in mJ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneEnergyRow {
    pub variant: Variant,
    pub flops_m: Listed,
    pub e_ann: Listed,
    pub sops_m: Listed,
    pub e_snn: Listed,
    pub e_total: Listed,
}

pub const BACKBONE_ENERGY_ROWS: [BackboneEnergyRow; 3] = [
    BackboneEnergyRow {
        variant: Variant::Tiny,
        flops_m: Listed::new(4199.59, 2),
        e_ann: Listed::new(19.32, 2),
        sops_m: Listed::new(1156.00, 2),
        e_snn: Listed::new(0.017, 3),
        e_total: Listed::new(19.34, 2),
    },
    BackboneEnergyRow {
        variant: Variant::Small,
        flops_m: Listed::new(8485.64, 2),
        e_ann: Listed::new(39.03, 2),
        sops_m: Listed::new(2413.10, 2),
        e_snn: Listed::new(2.172, 3),
        e_total: Listed::new(41.20, 2),
    },
    BackboneEnergyRow {
        variant: Variant::Base,
        flops_m: Listed::new(14229.15, 2),
        e_ann: Listed::new(65.45, 2),
        sops_m: Listed::new(3771.60, 2),
        e_snn: Listed::new(3.394, 3),
        e_total: Listed::new(68.84, 2),
    },
];

/// Per-component energies in mJ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentEnergyRow {
    pub variant: Variant,
    pub backbone: Listed,
    pub fpn_head: Listed,
    pub total: Listed,
}

pub const COMPONENT_ENERGY_ROWS: [ComponentEnergyRow; 3] = [
    ComponentEnergyRow {
        variant: Variant::Tiny,
        backbone: Listed::new(19.34, 2),
        fpn_head: Listed::new(14.57, 2),
        total: Listed::new(33.91, 2),
    },
    ComponentEnergyRow {
        variant: Variant::Small,
        backbone: Listed::new(41.20, 2),
        fpn_head: Listed::new(32.64, 2),
        total: Listed::new(73.84, 2),
    },
    ComponentEnergyRow {
        variant: Variant::Base,
        backbone: Listed::new(68.84, 2),
        fpn_head: Listed::new(65.66, 2),
        total: Listed::new(134.50, 2),
    },
];

/// Published figures of other detectors, shipped as data.
pub const REFERENCE_ENERGY_JSON: &str = include_str!("../../data/reference_energy.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub model: String,
    pub architecture: String,
    pub backbone_mj: Option<f64>,
    #[serde(default)]
    pub backbone_note: Option<String>,
    pub fpn_head_mj: Option<f64>,
    pub total_mj: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEnergy {
    pub source: String,
    pub dataset: String,
    pub unit: String,
    pub models: Vec<ReferenceModel>,
}

pub fn reference_energy() -> ReferenceEnergy {
    serde_json::from_str(REFERENCE_ENERGY_JSON).expect("bundled reference file parses")
}

fn millions(x: f64) -> u64 {
    (x * 1e6).round() as u64
}

/// Whole operations whose energy at `units_per_op` is closest to `mj`.
fn ops_for_mj(mj: f64, units_per_op: u128) -> u64 {
    (mj / (units_per_op as f64 * super::energy::MJ_PER_UNIT)).round() as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditFlag {
    pub column: String,
    pub listed: f64,
    pub computed: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowAudit {
    pub variant: Variant,
    pub e_ann: Energy,
    pub e_snn: Energy,
    pub e_total: Energy,
    pub flags: Vec<AuditFlag>,
}

impl RowAudit {
    pub fn consistent(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Recompute a row's energies from its FLOPs and SOPs columns and flag
/// every listed energy off by more than one unit in its last digit.
pub fn audit_row(row: &BackboneEnergyRow) -> RowAudit {
    let e_ann = energy_ann(millions(row.flops_m.value));
    let e_snn = energy_snn(millions(row.sops_m.value));
    let e_total = e_ann + e_snn;
    let mut flags = Vec::new();
    for (column, listed, computed) in [
        ("e_ann", row.e_ann, e_ann),
        ("e_snn", row.e_snn, e_snn),
        ("e_total", row.e_total, e_total),
    ] {
        if !listed.matches(computed.mj()) {
            flags.push(AuditFlag {
                column: column.to_string(),
                listed: listed.value,
                computed: computed.mj(),
                tolerance: listed.tolerance(),
            });
        }
    }
    RowAudit {
        variant: row.variant,
        e_ann,
        e_snn,
        e_total,
        flags,
    }
}

pub fn audit_published() -> Vec<RowAudit> {
    BACKBONE_ENERGY_ROWS.iter().map(audit_row).collect()
}

/// Component report from published component energies. Only energies are
/// published per component, so each is converted to the nearest whole count
/// of operations: the backbone from its listed ANN and SNN energies, the
/// FPN/head as dense FLOPs.
pub fn component_report(variant: Variant) -> EnergyReport {
    let bb = BACKBONE_ENERGY_ROWS.iter().find(|r| r.variant == variant).expect("all variants listed");
    let comp = COMPONENT_ENERGY_ROWS.iter().find(|r| r.variant == variant).expect("all variants listed");
    let mut components = BTreeMap::new();
    components.insert(
        "backbone".to_string(),
        ComponentEnergy::from_counts(
            ops_for_mj(bb.e_ann.value, super::energy::ANN_UNITS_PER_FLOP),
            ops_for_mj(bb.e_snn.value, super::energy::SNN_UNITS_PER_SOP),
        ),
    );
    components.insert(
        "fpn_head".to_string(),
        ComponentEnergy::from_counts(ops_for_mj(comp.fpn_head.value, super::energy::ANN_UNITS_PER_FLOP), 0),
    );
    EnergyReport::from_components(components).with_assumptions([format!(
        "{} counts reconstructed from published component energies",
        variant.name()
    )])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_flags_only_the_inconsistent_row() {
        let audits = audit_published();
        assert!(!audits[0].consistent());
        assert!(audits[0].flags.iter().any(|f| f.column == "e_snn" && (f.computed - 1.0404).abs() < 1e-9));
        assert!(audits[1].consistent() && audits[2].consistent());
    }

    #[test]
    fn component_rows_add_up_at_print_precision() {
        for row in COMPONENT_ENERGY_ROWS {
            let r = component_report(row.variant);
            assert!(r.is_additive());
            assert_eq!(row.backbone.render(r.components["backbone"].e_total.mj()), row.backbone.text());
            assert_eq!(row.fpn_head.render(r.components["fpn_head"].e_total.mj()), row.fpn_head.text());
            assert_eq!(row.total.render(r.e_total.mj()), row.total.text());
        }
    }

    #[test]
    fn reference_file_parses() {
        let r = reference_energy();
        assert_eq!(r.models.len(), 2);
        assert_eq!(r.models[1].total_mj, 28.10);
    }
}
