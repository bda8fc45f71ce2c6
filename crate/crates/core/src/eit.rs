//! EIT spectra, transparency width, slow light and the correlation-time estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the empiric two-term transmission model. Angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EitSpectrumParams {
    pub od: f64,
    pub gamma: f64,
    /// Centre of the bare absorption line.
    pub delta0: f64,
    /// Centre of the transparency peak.
    pub delta1: f64,
    pub t0: f64,
    /// FWHM of the transparency peak.
    pub width: f64,
}

impl EitSpectrumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.od >= 0.0) {
            return Err(Error::domain("eit_transmission", "OD must be >= 0"));
        }
        if !(self.width > 0.0) {
            return Err(Error::domain("eit_transmission", "transparency width must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.t0) {
            return Err(Error::domain("eit_transmission", "T0 must lie in [0, 1]"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::domain("eit_transmission", "gamma must be > 0"));
        }
        Ok(())
    }
}

/// Lorentzian absorption line plus a Gaussian transparency feature.
///
/// The sum is not clipped; it can slightly exceed 1 where the two terms overlap.
pub fn eit_transmission(detuning: f64, p: &EitSpectrumParams) -> f64 {
    let x = 2.0 * (detuning - p.delta0) / p.gamma;
    let y = (detuning - p.delta1) / p.width;
    (-p.od / (1.0 + x * x)).exp() + p.t0 * (-4.0 * y * y * std::f64::consts::LN_2).exp()
}

/// FWHM of the transparency window, Omega_c^2 sqrt(ln 2) / (Gamma sqrt(OD)).
pub fn transparency_width(rabi: f64, gamma: f64, od: f64) -> Result<f64> {
    if !(od > 0.0) {
        return Err(Error::domain("transparency_width", "OD must be > 0"));
    }
    Ok(rabi * rabi * std::f64::consts::LN_2.sqrt() / (gamma * od.sqrt()))
}

/// Residual optical depth at the EIT resonance for a finite ground-Rydberg
/// dephasing rate.
///
/// Uses OD_EIT = OD * gamma21 Gamma / (gamma21 Gamma + Omega_c^2 / 2). Other
/// conventions differ by the factor on Omega_c^2; swap them here.
pub fn resonant_od_with_dephasing(od: f64, rabi: f64, gamma: f64, dephasing: f64) -> f64 {
    let loss = dephasing * gamma;
    od * loss / (loss + rabi * rabi / 2.0)
}

/// Slow-light group velocity Omega_c^2 l_a / Gamma.
pub fn group_velocity(rabi: f64, absorption_length: f64, gamma: f64) -> f64 {
    rabi * rabi * absorption_length / gamma
}

/// Group velocity from an observed pulse delay across a Gaussian cloud of
/// rms length `sigma_z` (effective length sqrt(2 pi) sigma_z).
pub fn vg_from_delay(sigma_z: f64, delay: f64) -> f64 {
    (2.0 * std::f64::consts::PI).sqrt() * sigma_z / delay
}

/// Predicted rms photon correlation time 1.05 sqrt(8 OD) Gamma / Omega_c^2.
pub fn correlation_time_prediction(od: f64, gamma: f64, rabi: f64) -> Result<f64> {
    if !(od > 0.0) || rabi == 0.0 {
        return Err(Error::domain(
            "correlation_time_prediction",
            "requires OD > 0 and a nonzero Rabi frequency",
        ));
    }
    Ok(1.05 * (8.0 * od).sqrt() * gamma / (rabi * rabi))
}

/// Samples the transmission model on an evenly spaced detuning grid.
pub fn spectrum(p: &EitSpectrumParams, from: f64, to: f64, points: usize) -> Vec<(f64, f64)> {
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let d = from + (to - from) * i as f64 / (n - 1) as f64;
            (d, eit_transmission(d, p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const MHZ: f64 = 2.0 * PI * 1e6;
    const GAMMA: f64 = 5.75 * MHZ;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    fn gate_fit() -> EitSpectrumParams {
        EitSpectrumParams {
            od: 3.2,
            gamma: GAMMA,
            delta0: 0.0,
            delta1: 0.0,
            t0: (-0.91f64).exp(),
            width: 1.7 * MHZ,
        }
    }

    #[test]
    fn far_detuned_is_transparent() {
        let p = gate_fit();
        for d in [1e4 * MHZ, -1e4 * MHZ] {
            assert!((eit_transmission(d, &p) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn on_resonance_closed_form() {
        let p = gate_fit();
        let t = eit_transmission(0.0, &p);
        assert!((t - ((-3.2f64).exp() + p.t0)).abs() < 1e-15);
        // 0.40 + e^-3.2 = 0.44
        assert!((t - 0.44).abs() < 0.005, "{t}");
    }

    #[test]
    fn symmetric_when_centres_coincide() {
        let p = EitSpectrumParams { delta0: 0.3 * MHZ, delta1: 0.3 * MHZ, ..gate_fit() };
        for k in 1..20 {
            let d = k as f64 * 0.7 * MHZ;
            let a = eit_transmission(p.delta0 + d, &p);
            let b = eit_transmission(p.delta0 - d, &p);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn no_clipping_above_one() {
        // wings of the Lorentzian are near 1 where the Gaussian is still large
        let p = EitSpectrumParams { od: 0.01, t0: 0.5, width: 20.0 * MHZ, ..gate_fit() };
        assert!(eit_transmission(3.0 * MHZ, &p) > 1.0);
    }

    #[test]
    fn width_at_operating_points() {
        let g = transparency_width(4.7 * MHZ, GAMMA, 3.5).unwrap();
        let t = transparency_width(9.4 * MHZ, GAMMA, 10.0).unwrap();
        assert!(rel(g, 1.7 * MHZ) < 0.10, "{}", g / MHZ);
        assert!(rel(t, 4.0 * MHZ) < 0.10, "{}", t / MHZ);
        assert!(transparency_width(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn width_scaling_exact() {
        let a = transparency_width(3.3 * MHZ, GAMMA, 7.0).unwrap();
        let b = transparency_width(6.6 * MHZ, GAMMA, 7.0).unwrap();
        assert!(rel(b, 4.0 * a) < 1e-12);
    }

    #[test]
    fn dephased_od_limits() {
        assert_eq!(resonant_od_with_dephasing(3.5, 4.7 * MHZ, GAMMA, 0.0), 0.0);
        let mut last = 0.0;
        for k in 1..20 {
            let v = resonant_od_with_dephasing(3.5, 4.7 * MHZ, GAMMA, k as f64 * 1e5);
            assert!(v > last);
            last = v;
        }
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let v = resonant_od_with_dephasing(3.5, k as f64 * MHZ, GAMMA, 1.1e6);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn dephased_od_gate_value() {
        // This convention gives ~0.27 at the gate operating point.
        let v = resonant_od_with_dephasing(3.5, 4.7 * MHZ, GAMMA, 1.1e6);
        assert!(v > 0.25 && v < 0.32, "{v}");
    }

    #[test]
    fn group_velocities() {
        let vg = group_velocity(9.4 * MHZ, 5e-6, GAMMA);
        assert!(rel(vg, 500.0) < 0.10, "{vg}");
        assert!(rel(group_velocity(9.4 * MHZ, 10e-6, GAMMA), 2.0 * vg) < 1e-14);
        let vd = vg_from_delay(28e-6, 0.25e-6);
        assert!(rel(vd, 300.0) < 0.10, "{vd}");
    }

    #[test]
    fn correlation_time() {
        let tc = correlation_time_prediction(10.0, GAMMA, 9.4 * MHZ).unwrap();
        // The formula evaluates to 0.097 us at these inputs.
        assert!((tc - 0.0973e-6).abs() < 0.0005e-6, "{tc}");
        let tc2 = correlation_time_prediction(10.0, GAMMA, 18.8 * MHZ).unwrap();
        assert!(rel(tc2, tc / 4.0) < 1e-12);
        let simple: f64 = 14e-6 / 300.0;
        assert!((simple - 0.05e-6).abs() < 0.005e-6);
        assert!(correlation_time_prediction(0.0, GAMMA, 1.0).is_err());
    }
}
