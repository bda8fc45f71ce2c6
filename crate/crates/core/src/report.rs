//! Derived-parameter report: every quantity in presentation units, with the
//! reference value it is compared against.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::constants::PhysicalConstants;
use crate::error::Result;
use crate::params::{DerivedQuantities, Precision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: String,
    pub unit: String,
    /// Value from the unrounded derivation chain; this is what is checked.
    pub value: f64,
    /// The same chain with every intermediate rounded to two significant figures.
    pub rounded: f64,
    pub reference: Option<f64>,
    /// Relative tolerance; `None` means the reference is shown, not checked.
    pub tolerance: Option<f64>,
}

impl ReportRow {
    pub fn relative_error(&self) -> Option<f64> {
        self.reference.map(|r| (self.value / r - 1.0).abs())
    }

    pub fn passes(&self) -> Option<bool> {
        match (self.relative_error(), self.tolerance) {
            (Some(e), Some(t)) => Some(e <= t + 1e-12),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedReport {
    pub rows: Vec<ReportRow>,
}

struct Spec {
    key: &'static str,
    unit: &'static str,
    scale: f64,
    get: fn(&DerivedQuantities) -> f64,
    reference: Option<f64>,
    tolerance: Option<f64>,
}

const UM: f64 = 1e-6;
const MHZ: f64 = 2.0 * PI * 1e6;
const K_B: f64 = 1.380649e-23;

const fn checked(
    key: &'static str,
    unit: &'static str,
    scale: f64,
    get: fn(&DerivedQuantities) -> f64,
    reference: f64,
    tolerance: f64,
) -> Spec {
    Spec { key, unit, scale, get, reference: Some(reference), tolerance: Some(tolerance) }
}

const fn shown(
    key: &'static str,
    unit: &'static str,
    scale: f64,
    get: fn(&DerivedQuantities) -> f64,
    reference: Option<f64>,
) -> Spec {
    Spec { key, unit, scale, get, reference, tolerance: None }
}

static ROWS: &[Spec] = &[
    checked("sigma_x", "um", UM, |d| d.rms_radii[0], 7.5, 0.05),
    checked("sigma_y", "um", UM, |d| d.rms_radii[1], 28.0, 0.05),
    checked("sigma_z", "um", UM, |d| d.rms_radii[2], 28.0, 0.05),
    checked("peak_density", "cm^-3", 1e6, |d| d.peak_density, 2.4e12, 0.05),
    checked("field_gate", "MV/m", 1e6, |d| d.field_gate, 0.23, 0.05),
    checked("field_target", "MV/m", 1e6, |d| d.field_target, 0.32, 0.05),
    shown("dipole_gate", "e a0", 8.478353625e-30, |d| d.dipole_gate, None),
    shown("dipole_target", "e a0", 8.478353625e-30, |d| d.dipole_target, None),
    checked("rabi_gate", "2pi MHz", MHZ, |d| d.rabi_gate, 4.7, 0.05),
    checked("rabi_target", "2pi MHz", MHZ, |d| d.rabi_target, 9.4, 0.05),
    checked("blockade_radius_gate", "um", UM, |d| d.blockade_radius_gate, 18.0, 0.05),
    checked("blockade_radius_target", "um", UM, |d| d.blockade_radius_target, 14.0, 0.05),
    shown("cross_section_target", "um^2", 1e-12, |d| d.cross_section_target, None),
    checked("absorption_length", "um", UM, |d| d.absorption_length_target, 5.0, 0.10),
    checked("transparency_width_gate", "2pi MHz", MHZ, |d| d.transparency_width_gate, 1.7, 0.10),
    checked("transparency_width_target", "2pi MHz", MHZ, |d| d.transparency_width_target, 4.0, 0.10),
    checked("group_velocity", "km/s", 1e3, |d| d.group_velocity, 0.5, 0.10),
    checked("group_velocity_delay", "km/s", 1e3, |d| d.group_velocity_from_delay, 0.3, 0.10),
    checked("correlation_time", "us", UM, |d| d.correlation_time, 0.12, 0.10),
    shown("blockade_transit_time", "us", UM, |d| d.blockade_transit_time, Some(0.05)),
    shown("od_eit_gate", "", 1.0, |d| d.od_eit_gate, Some(0.8)),
    shown("od_eit_target", "", 1.0, |d| d.od_eit_target, Some(0.7)),
    shown("od_b0_estimate", "", 1.0, |d| d.od_b0_estimate, Some(5.6)),
    shown("duty_factor", "", 1.0, |d| d.duty_factor, None),
    checked("dipole_potential", "kB uK", K_B * UM, |d| d.dipole_potential, 5.1, 0.05),
    checked("dipole_potential_avg", "kB uK", K_B * UM, |d| d.dipole_potential_avg, 0.09, 0.05),
];

impl DerivedReport {
    pub fn compute(cfg: &ExperimentConfig, consts: &PhysicalConstants) -> Result<Self> {
        let exact = DerivedQuantities::compute(cfg, consts)?;
        let rounded = DerivedQuantities::compute_with(cfg, consts, Precision::SignificantFigures(2))?;
        let rows = ROWS
            .iter()
            .map(|s| ReportRow {
                key: s.key.to_string(),
                unit: s.unit.to_string(),
                value: (s.get)(&exact) / s.scale,
                rounded: (s.get)(&rounded) / s.scale,
                reference: s.reference,
                tolerance: s.tolerance,
            })
            .collect();
        Ok(DerivedReport { rows })
    }

    pub fn get(&self, key: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    /// Delimited table with a header row.
    pub fn to_table(&self) -> String {
        let mut out = String::from("quantity,unit,value,value_2sf_chain,reference,rel_error,tolerance,status\n");
        for r in &self.rows {
            let opt = |v: Option<f64>, p: usize| v.map_or(String::new(), |v| format!("{v:.p$}"));
            let status = match r.passes() {
                Some(true) => "ok",
                Some(false) => "FAIL",
                None if r.reference.is_some() => "shown",
                None => "",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.key,
                r.unit,
                format_sig(r.value),
                format_sig(r.rounded),
                r.reference.map_or(String::new(), format_sig),
                opt(r.relative_error(), 4),
                opt(r.tolerance, 2),
                status
            );
        }
        out
    }
}

/// Six significant figures without trailing noise.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-3..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.5e}")
    }
}
