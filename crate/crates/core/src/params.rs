//! Derived optical and atomic parameters of the cold-atom medium.
//!
//! All functions take and return SI values: lengths in m, angular
//! frequencies in rad/s, energies in J. Presentation units (um, MHz, uK)
//! are applied only by the report layer.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::units::round_sig;

/// Cloud rms radii and peak density of a thermal gas in a harmonic trap.
pub fn cloud_geometry(
    atom_number: f64,
    temperature: f64,
    trap_freqs: [f64; 3],
    consts: &PhysicalConstants,
) -> Result<([f64; 3], f64)> {
    if !(temperature > 0.0) {
        return Err(Error::domain("cloud_geometry", "temperature must be > 0"));
    }
    if trap_freqs.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::domain("cloud_geometry", "trap frequencies must be > 0"));
    }
    let thermal = consts.k_b * temperature / consts.m_rb87;
    let sigma = trap_freqs.map(|w| thermal.sqrt() / w);
    let volume = (2.0 * PI).powf(1.5) * sigma[0] * sigma[1] * sigma[2];
    Ok((sigma, atom_number / volume))
}

/// Peak field amplitude of a Gaussian beam with 1/e^2 intensity radius `waist`.
pub fn beam_field_amplitude(power: f64, waist: f64, consts: &PhysicalConstants) -> Result<f64> {
    if !(waist > 0.0) {
        return Err(Error::domain("beam_field_amplitude", "waist must be > 0"));
    }
    if power < 0.0 {
        return Err(Error::domain("beam_field_amplitude", "power must be >= 0"));
    }
    let peak_intensity = 2.0 * power / (PI * waist * waist);
    Ok((2.0 * peak_intensity / (consts.c * consts.eps0)).sqrt())
}

/// Radial integral <r> between 5p and ns, in units of a0.
pub fn radial_integral_au(n: f64) -> f64 {
    0.014 * (50.0 / n).powf(1.5)
}

/// Control-transition dipole matrix elements (gate, target) in C m.
pub fn rydberg_dipole_elements(n: f64, consts: &PhysicalConstants) -> Result<(f64, f64)> {
    if !(n > 0.0) {
        return Err(Error::domain("rydberg_dipole_elements", "n must be > 0"));
    }
    if !(50.0..=150.0).contains(&n) {
        warn!("radial-integral scaling used outside n in [50, 150] (n = {n})");
    }
    let r = radial_integral_au(n) * consts.dipole_au();
    Ok((r / 3.0, r * 2f64.sqrt() / 3.0))
}

pub fn rabi_frequency(dipole: f64, field: f64, consts: &PhysicalConstants) -> f64 {
    dipole * field / consts.hbar
}

/// Distance at which the van der Waals shift equals the EIT linewidth.
pub fn blockade_radius(c6: f64, gamma: f64, rabi: f64, consts: &PhysicalConstants) -> Result<f64> {
    if rabi == 0.0 {
        return Err(Error::domain("blockade_radius", "Rabi frequency is zero; radius diverges"));
    }
    Ok((2.0 * c6 * gamma / (consts.hbar * rabi * rabi)).abs().powf(1.0 / 6.0))
}

/// Resonant absorption cross section 3 xi lambda^2 / 2pi.
pub fn cross_section(branching: f64, wavelength: f64) -> f64 {
    3.0 * branching * wavelength * wavelength / (2.0 * PI)
}

pub fn absorption_length(density: f64, branching: f64, wavelength: f64) -> Result<f64> {
    if !(density > 0.0) {
        return Err(Error::domain("absorption_length", "density must be > 0"));
    }
    if !(branching > 0.0 && branching <= 1.0) {
        return Err(Error::domain("absorption_length", "branching ratio must lie in (0, 1]"));
    }
    if !(wavelength > 0.0) {
        return Err(Error::domain("absorption_length", "wavelength must be > 0"));
    }
    Ok(1.0 / (density * cross_section(branching, wavelength)))
}

/// Optical dipole potential at the beam centre and its cycle average.
///
/// Both values are returned as energies in J; a repulsive potential is positive.
pub fn dipole_potential(polarizability: f64, field: f64, duty_factor: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&duty_factor) {
        return Err(Error::domain("dipole_potential", "duty factor must lie in [0, 1]"));
    }
    let v0 = -polarizability * field * field / 4.0;
    Ok((v0, duty_factor * v0))
}

/// How intermediate values are carried through the derivation chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Precision {
    #[default]
    Exact,
    /// Round every quoted intermediate to this many significant figures in
    /// its presentation unit before it feeds the next step.
    SignificantFigures(u32),
}

impl Precision {
    fn quote(self, value: f64, unit: f64) -> f64 {
        match self {
            Precision::Exact => value,
            Precision::SignificantFigures(d) => round_sig(value / unit, d) * unit,
        }
    }
}

/// Every derived quantity, SI units. Gate and target pairs are (gate, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub precision: Precision,
    pub rms_radii: [f64; 3],
    pub peak_density: f64,
    pub field_gate: f64,
    pub field_target: f64,
    pub dipole_gate: f64,
    pub dipole_target: f64,
    pub rabi_gate: f64,
    pub rabi_target: f64,
    pub blockade_radius_gate: f64,
    pub blockade_radius_target: f64,
    pub cross_section_target: f64,
    pub absorption_length_target: f64,
    pub group_velocity: f64,
    pub group_velocity_from_delay: f64,
    pub transparency_width_gate: f64,
    pub transparency_width_target: f64,
    pub od_eit_gate: f64,
    pub od_eit_target: f64,
    pub correlation_time: f64,
    /// Simple blockade-transit estimate r_b,t / v_g (delay-based v_g).
    pub blockade_transit_time: f64,
    pub od_b0_estimate: f64,
    pub duty_factor: f64,
    pub dipole_potential: f64,
    pub dipole_potential_avg: f64,
}

impl DerivedQuantities {
    pub fn compute(cfg: &ExperimentConfig, consts: &PhysicalConstants) -> Result<Self> {
        Self::compute_with(cfg, consts, Precision::Exact)
    }

    pub fn compute_with(
        cfg: &ExperimentConfig,
        consts: &PhysicalConstants,
        precision: Precision,
    ) -> Result<Self> {
        use crate::eit;

        const UM: f64 = 1e-6;
        const MHZ: f64 = 2.0 * PI * 1e6;
        let q = |v: f64, unit: f64| precision.quote(v, unit);

        let (sigma, rho_p) =
            cloud_geometry(cfg.atom_number, cfg.temperature, cfg.trap_freqs, consts)?;
        let sigma = sigma.map(|s| q(s, UM));
        let rho_p = q(rho_p, 1e6);

        let e_gate = q(beam_field_amplitude(cfg.control_power_gate, cfg.control_waist, consts)?, 1e6);
        let e_target =
            q(beam_field_amplitude(cfg.control_power_target, cfg.control_waist, consts)?, 1e6);

        let (d_g, d_t) = rydberg_dipole_elements(cfg.principal_n, consts)?;
        let d_g = q(d_g, consts.dipole_au());
        let d_t = q(d_t, consts.dipole_au());

        let rabi_g = q(rabi_frequency(d_g, e_gate, consts), MHZ);
        let rabi_t = q(rabi_frequency(d_t, e_target, consts), MHZ);

        let rb_g = q(blockade_radius(cfg.c6, cfg.gamma, rabi_g, consts)?, UM);
        let rb_t = q(blockade_radius(cfg.c6, cfg.gamma, rabi_t, consts)?, UM);

        let sigma_t = cross_section(cfg.branching_target, cfg.signal_wavelength);
        let l_a = q(
            absorption_length(rho_p * cfg.density_fraction, cfg.branching_target, cfg.signal_wavelength)?,
            UM,
        );

        let v_g = q(eit::group_velocity(rabi_t, l_a, cfg.gamma), 1e3);
        let v_g_delay = q(eit::vg_from_delay(sigma[2], cfg.target_delay), 1e3);

        let width_g = q(eit::transparency_width(rabi_g, cfg.gamma, cfg.od_gate)?, MHZ);
        let width_t = q(eit::transparency_width(rabi_t, cfg.gamma, cfg.od_target)?, MHZ);

        let od_eit_g = eit::resonant_od_with_dephasing(cfg.od_gate, rabi_g, cfg.gamma, cfg.dephasing_rate);
        let od_eit_t =
            eit::resonant_od_with_dephasing(cfg.od_target, rabi_t, cfg.gamma, cfg.dephasing_rate);

        let tau_c = q(eit::correlation_time_prediction(cfg.od_target, cfg.gamma, rabi_t)?, 1e-6);

        let duty = cfg.duty_factor();
        let (v0, _) = dipole_potential(cfg.polarizability, e_target, duty)?;
        let v0 = q(v0, consts.k_b * 1e-6);
        let v0_avg = q(duty * v0, consts.k_b * 1e-6);

        Ok(DerivedQuantities {
            precision,
            rms_radii: sigma,
            peak_density: rho_p,
            field_gate: e_gate,
            field_target: e_target,
            dipole_gate: d_g,
            dipole_target: d_t,
            rabi_gate: rabi_g,
            rabi_target: rabi_t,
            blockade_radius_gate: rb_g,
            blockade_radius_target: rb_t,
            cross_section_target: sigma_t,
            absorption_length_target: l_a,
            group_velocity: v_g,
            group_velocity_from_delay: v_g_delay,
            transparency_width_gate: width_g,
            transparency_width_target: width_t,
            od_eit_gate: od_eit_g,
            od_eit_target: od_eit_t,
            correlation_time: tau_c,
            blockade_transit_time: rb_t / v_g_delay,
            od_b0_estimate: crate::storage_switch::od_b0_estimate(rb_t, l_a),
            duty_factor: duty,
            dipole_potential: v0,
            dipole_potential_avg: v0_avg,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::CODATA_2018;

    const C: PhysicalConstants = CODATA_2018;
    const TWO_PI: f64 = 2.0 * PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    fn baseline_geometry() -> ([f64; 3], f64) {
        let w = [136.0, 37.0, 37.0].map(|f| TWO_PI * f);
        cloud_geometry(2.2e5, 0.43e-6, w, &C).unwrap()
    }

    #[test]
    fn cloud_radii_and_density() {
        let (s, rho) = baseline_geometry();
        assert_eq!(round_sig(s[0] * 1e6, 2), 7.5);
        assert_eq!(round_sig(s[1] * 1e6, 2), 28.0);
        assert_eq!(round_sig(s[2] * 1e6, 2), 28.0);
        assert_eq!(round_sig(rho * 1e-6, 2), 2.4e12);
    }

    #[test]
    fn cloud_scalings() {
        let w = [136.0, 37.0, 37.0].map(|f| TWO_PI * f);
        let (s1, r1) = cloud_geometry(2.2e5, 0.43e-6, w, &C).unwrap();
        let (s2, r2) = cloud_geometry(4.4e5, 0.43e-6, w, &C).unwrap();
        assert_eq!(s1, s2);
        assert!(rel(r2, 2.0 * r1) < 1e-14);
        let (s4, r4) = cloud_geometry(2.2e5, 1.72e-6, w, &C).unwrap();
        for i in 0..3 {
            assert!(rel(s4[i], 2.0 * s1[i]) < 1e-14);
        }
        assert!(rel(r4, r1 / 8.0) < 1e-14);
    }

    #[test]
    fn cloud_rejects_bad_inputs() {
        assert!(cloud_geometry(1.0, 0.0, [1.0; 3], &C).is_err());
        assert!(cloud_geometry(1.0, 1e-6, [1.0, 0.0, 1.0], &C).is_err());
    }

    #[test]
    fn control_fields() {
        let eg = beam_field_amplitude(16e-3, 12e-6, &C).unwrap();
        let et = beam_field_amplitude(32e-3, 12e-6, &C).unwrap();
        assert!(rel(eg, 0.23e6) < 0.02, "{eg}");
        // 0.3265 MV/m, 2.03% above the quoted 0.32
        assert!(rel(et, 0.32e6) < 0.05, "{et}");
        assert!(rel(et, 2f64.sqrt() * eg) < 1e-14);
        assert_eq!(beam_field_amplitude(0.0, 12e-6, &C).unwrap(), 0.0);
        assert!(beam_field_amplitude(1.0, 0.0, &C).is_err());
    }

    #[test]
    fn dipole_elements() {
        let (dg, dt) = rydberg_dipole_elements(100.0, &C).unwrap();
        let au = C.dipole_au();
        assert_eq!(round_sig(dg / au, 2), 1.6e-3);
        assert_eq!(round_sig(dt / au, 2), 2.3e-3);
        assert_eq!(radial_integral_au(50.0), 0.014);
        for n in [60.0, 100.0, 140.0] {
            let (g, t) = rydberg_dipole_elements(n, &C).unwrap();
            assert!(rel(t / g, 2f64.sqrt()) < 1e-15);
        }
        assert!(rydberg_dipole_elements(0.0, &C).is_err());
    }

    #[test]
    fn rabi_frequencies() {
        let (dg, dt) = rydberg_dipole_elements(100.0, &C).unwrap();
        let wg = rabi_frequency(dg, beam_field_amplitude(16e-3, 12e-6, &C).unwrap(), &C);
        let wt = rabi_frequency(dt, beam_field_amplitude(32e-3, 12e-6, &C).unwrap(), &C);
        assert!(rel(wg, TWO_PI * 4.7e6) < 0.05);
        assert!(rel(wt, TWO_PI * 9.4e6) < 0.05);
        assert_eq!(rabi_frequency(dg, 0.0, &C), 0.0);
    }

    #[test]
    fn blockade_radii() {
        let c6 = -3.9e23 * C.c6_au();
        let gamma = TWO_PI * 5.75e6;
        let (dg, dt) = rydberg_dipole_elements(100.0, &C).unwrap();
        let wg = rabi_frequency(dg, beam_field_amplitude(16e-3, 12e-6, &C).unwrap(), &C);
        let wt = rabi_frequency(dt, beam_field_amplitude(32e-3, 12e-6, &C).unwrap(), &C);
        let rg = blockade_radius(c6, gamma, wg, &C).unwrap();
        let rt = blockade_radius(c6, gamma, wt, &C).unwrap();
        assert!((rg - 18e-6).abs() <= 1e-6, "{rg}");
        assert!((rt - 14e-6).abs() <= 1e-6, "{rt}");
        let r8 = blockade_radius(c6, gamma, 8.0 * wg, &C).unwrap();
        assert!(rel(r8, rg / 2.0) < 1e-12);
        assert!(blockade_radius(c6, gamma, 0.0, &C).is_err());
    }

    #[test]
    fn absorption_lengths() {
        let la = absorption_length(1.2e18, 0.5, 795e-9).unwrap();
        assert_eq!(round_sig(la * 1e6, 2), 5.5);
        assert!(rel(round_sig(la * 1e6, 2), 5.0) <= 0.1 + 1e-12, "{la}");
        let la_half = absorption_length(1.2e18, 0.25, 795e-9).unwrap();
        assert!(rel(la_half, 2.0 * la) < 1e-14);
        // 3 lambda^2 / 2pi evaluated by hand
        let oracle = 3.0 * 795e-9f64.powi(2) / (2.0 * std::f64::consts::PI);
        assert!(rel(cross_section(1.0, 795e-9), oracle) < 1e-15);
        assert!(rel(cross_section(1.0, 795e-9), 3.017e-13) < 1e-3);
        assert!(absorption_length(0.0, 0.5, 795e-9).is_err());
    }

    #[test]
    fn dipole_potentials() {
        let alpha = -163.0 * C.polarizability_au();
        let (v0, avg) = dipole_potential(alpha, 0.32e6, 0.018).unwrap();
        assert!(rel(v0, C.k_b * 5.1e-6) < 0.05, "{}", v0 / C.k_b);
        assert!(rel(avg, C.k_b * 0.09e-6) < 0.05, "{}", avg / C.k_b);
        assert_eq!(dipole_potential(alpha, 0.0, 0.018).unwrap(), (0.0, 0.0));
        assert!(dipole_potential(alpha, 1.0, 1.5).is_err());
    }

    #[test]
    fn monotonicity() {
        let c6 = -3.9e23 * C.c6_au();
        let mut last = f64::INFINITY;
        for k in 1..50 {
            let r = blockade_radius(c6, 3.6e7, k as f64 * 1e6, &C).unwrap();
            assert!(r < last);
            last = r;
        }
        let mut last = f64::INFINITY;
        for k in 1..50 {
            let l = absorption_length(k as f64 * 1e17, 0.5, 795e-9).unwrap();
            assert!(l < last);
            last = l;
        }
        let w = [1000.0; 3];
        let mut last = 0.0;
        for k in 1..50 {
            let (_, rho) = cloud_geometry(k as f64 * 1e4, 1e-6, w, &C).unwrap();
            assert!(rho > last);
            last = rho;
        }
    }
}
