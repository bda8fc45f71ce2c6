//! Storage of gate photons, extinction of the target pulse, heralding and
//! postselection, and the decay laws of blockade and retrieval.
//!
//! Optical depths here are dimensionless and refer to the pulse length
//! inside the medium (OD = alpha L_p, OD_EIT = alpha1 L_p).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{bin_mean_series, transmitted_mean, MediumParams};
use crate::special::{e1_difference, ein_tail_difference, gauss_legendre};

pub use crate::special::exponential_integral_e1;

/// A value that is returned even when a model leaves its regime of validity.
#[derive(Debug, Clone, PartialEq)]
pub struct Checked<T> {
    pub value: T,
    pub warnings: Vec<ValidityWarning>,
}

impl<T> Checked<T> {
    fn clean(value: T) -> Self {
        Checked {
            value,
            warnings: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidityWarning {
    /// eta_sb N_b > 1: the first-order storage model no longer applies; the
    /// extinction was clamped to 0.
    LinearizedStorage { eta_nb: f64 },
    /// N_t >= N_1: the linear depletion law predicts a non-positive density.
    DepletionExhausted { n_t: f64, n1: f64 },
}

impl fmt::Display for ValidityWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidityWarning::LinearizedStorage { eta_nb } => {
                write!(f, "eta_sb N_b = {eta_nb:.4} > 1; extinction clamped to 0")
            }
            ValidityWarning::DepletionExhausted { n_t, n1 } => {
                write!(f, "N_t = {n_t} >= N_1 = {n1}; blockaded OD non-positive")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum StorageMode {
    /// Bin-resolved propagation integrated over the pulse (exponential integral form).
    #[default]
    Full,
    /// Rapid-blockade approximation.
    Rapid,
}

impl std::str::FromStr for StorageMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(StorageMode::Full),
            "rapid" => Ok(StorageMode::Rapid),
            other => Err(Error::domain("StorageMode", format!("unknown mode `{other}` (full|rapid)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageParams {
    /// Storage efficiency without blockade and propagation loss.
    pub eta_sb: f64,
    pub bins: f64,
    pub od: f64,
    pub od_eit: f64,
}

impl StorageParams {
    pub fn beta(&self) -> f64 {
        initial_slope_beta(self)
    }
}

/// (1 - e^{-x}) / x, continuous at x = 0.
fn attenuation_average(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0 - x / 2.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Mean number of excitations in the medium just before the control light
/// is switched off.
pub fn stored_mean_before_switchoff(n_in: f64, p: &StorageParams, mode: StorageMode) -> Result<f64> {
    if n_in < 0.0 {
        return Err(Error::domain("stored_mean_before_switchoff", "N_in must be >= 0"));
    }
    if !(p.bins > 0.0) {
        return Err(Error::domain("stored_mean_before_switchoff", "bin count must be > 0"));
    }
    if n_in == 0.0 {
        return Ok(0.0);
    }
    let mu0 = n_in / p.bins;
    let survived = -(-mu0).exp_m1();
    let linear = attenuation_average(p.od_eit) * survived;
    match mode {
        StorageMode::Rapid => Ok(p.bins * linear),
        StorageMode::Full => {
            if !(p.od > 0.0) {
                return Err(Error::domain("stored_mean_before_switchoff", "full mode needs OD > 0"));
            }
            let mu_l = mu0 * (-p.od).exp();
            // -1 + (E1(mu_L) - E1(mu0)) / OD with ln(mu0 / mu_L) = OD cancelled exactly
            let blockade = if mu0 < 2.0 {
                (mu0 - mu_l - ein_tail_difference(mu_l, mu0)) / p.od
            } else {
                -1.0 + (mu0 - mu_l + e1_difference(mu_l, mu0)?) / p.od
            };
            Ok(p.bins * (linear + blockade))
        }
    }
}

/// N_b from the exact series bin mean, integrated over the pulse by
/// Gauss-Legendre quadrature. Reference for bin-resolved simulations.
pub fn stored_mean_exact(n_in: f64, p: &StorageParams) -> Result<f64> {
    if n_in == 0.0 {
        return Ok(0.0);
    }
    let m = MediumParams::normalized(p.od, p.od_eit)?;
    let mu0 = n_in / p.bins;
    Ok(p.bins * gauss_legendre(|z| bin_mean_series(mu0, &m, z), 0.0, 1.0, 16))
}

/// epsilon(N_g) = 1 - eta_sb N_b(N_g); clamped at 0 with a warning.
pub fn extinction_vs_ng(n_g: f64, p: &StorageParams, mode: StorageMode) -> Result<Checked<f64>> {
    let eta_nb = p.eta_sb * stored_mean_before_switchoff(n_g, p, mode)?;
    if eta_nb > 1.0 {
        return Ok(Checked {
            value: 0.0,
            warnings: vec![ValidityWarning::LinearizedStorage { eta_nb }],
        });
    }
    Ok(Checked::clean(1.0 - eta_nb))
}

/// Unclamped 1 - eta_sb N_b, for fitting.
pub fn extinction_vs_ng_raw(n_g: f64, p: &StorageParams, mode: StorageMode) -> Result<f64> {
    Ok(1.0 - p.eta_sb * stored_mean_before_switchoff(n_g, p, mode)?)
}

/// Zero-blockade storage efficiency eta_sb (1 - e^{-OD_EIT}) / OD_EIT.
pub fn initial_slope_beta(p: &StorageParams) -> f64 {
    p.eta_sb * attenuation_average(p.od_eit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldParams {
    pub eta_wr: f64,
    pub eta_det: f64,
    /// Background herald probability at N_g = 0.
    pub p_h0: f64,
}

/// p_h = eta_wr eta_det N_b(N_g) + p_h(0).
pub fn herald_probability(n_g: f64, h: &HeraldParams, p: &StorageParams, mode: StorageMode) -> Result<f64> {
    Ok(h.eta_wr * h.eta_det * stored_mean_before_switchoff(n_g, p, mode)? + h.p_h0)
}

/// Herald model: efficiencies plus the storage model used for its N_b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldModel {
    pub params: HeraldParams,
    pub storage: StorageParams,
    pub mode: StorageMode,
}

impl HeraldModel {
    pub fn probability(&self, n_g: f64) -> Result<f64> {
        herald_probability(n_g, &self.params, &self.storage, self.mode)
    }
}

/// Transmitted target photons of the total ensemble, epsilon(N_g) times the
/// reference transmission at N_g = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalTransmission {
    pub storage: StorageParams,
    pub mode: StorageMode,
    pub reference: f64,
}

impl TotalTransmission {
    pub fn at(&self, n_g: f64) -> Result<f64> {
        Ok(extinction_vs_ng_raw(n_g, &self.storage, self.mode)? * self.reference)
    }
}

/// Postselected extinction with background heralds.
///
/// A fraction q = p_h(0) / p_h(N_g) of heralded cycles is triggered by
/// background and transmits like the total ensemble.
pub fn postselected_extinction_vs_ng(
    n_g: f64,
    eps_ideal: f64,
    n_post0: f64,
    herald: &HeraldModel,
    total: &TotalTransmission,
) -> Result<f64> {
    let p_h = herald.probability(n_g)?;
    if !(p_h > 0.0) {
        return Err(Error::domain("postselected_extinction_vs_ng", "p_h(N_g) = 0; q undefined"));
    }
    if n_post0 == 0.0 {
        return Err(Error::domain("postselected_extinction_vs_ng", "N_trans^post(0) must be nonzero"));
    }
    let q = herald.probability(0.0)? / p_h;
    let ideal = eps_ideal * n_post0;
    Ok(((1.0 - q) * ideal + q * total.at(n_g)?) / n_post0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchParams {
    pub od_b0: f64,
    /// Depletion scale of the density, in target photons.
    pub n1: f64,
    /// Probability that at least one gate excitation was stored.
    pub p_s: f64,
    /// Background photons in the target window when storage succeeded.
    pub n0: f64,
    pub t0: f64,
    pub bins: f64,
}

/// OD_b(N_t) = OD_b0 (1 - N_t / N_1).
pub fn blockaded_od(n_t: f64, s: &SwitchParams) -> Checked<f64> {
    let value = s.od_b0 * (1.0 - n_t / s.n1);
    if n_t >= s.n1 {
        Checked {
            value,
            warnings: vec![ValidityWarning::DepletionExhausted { n_t, n1: s.n1 }],
        }
    } else {
        Checked::clean(value)
    }
}

/// Coarse estimate OD_b0 ~ 2 r_b / l_a: full absorption across the blockade sphere.
pub fn od_b0_estimate(blockade_radius: f64, absorption_length: f64) -> f64 {
    2.0 * blockade_radius / absorption_length
}

/// Postselected extinction vs target photon number.
pub fn extinction_post_vs_nt(n_t: f64, s: &SwitchParams) -> Result<f64> {
    if !(n_t > 0.0) {
        return Err(Error::domain("extinction_post_vs_nt", "N_t must be > 0 (0/0 at N_t = 0)"));
    }
    let n_out = transmitted_mean(n_t, s.bins, s.t0);
    Ok(n_t * (-blockaded_od(n_t, s).value).exp() / n_out)
}

/// Total-ensemble extinction vs target photon number.
pub fn extinction_total_vs_nt(n_t: f64, s: &SwitchParams) -> Result<f64> {
    if !(n_t > 0.0) {
        return Err(Error::domain(
            "extinction_total_vs_nt",
            "N_t must be > 0; use background_numerator for N_t = 0",
        ));
    }
    let n_out = transmitted_mean(n_t, s.bins, s.t0);
    let blocked = n_t * (-blockaded_od(n_t, s).value).exp() + s.n0;
    Ok(((1.0 - s.p_s) * n_out + s.p_s * blocked) / n_out)
}

/// The N_t = 0 measurement: only the background p_s N_0 reaches the detector.
pub fn background_numerator(s: &SwitchParams) -> f64 {
    s.p_s * s.n0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    /// 1/e lifetime of the stored Rydberg population.
    pub tau_pop: f64,
    /// Dephasing rate extrapolated to zero density, 1/s.
    pub gamma0: f64,
    /// Dephasing slope per unit density, m^3/s.
    pub k_rho: f64,
}

/// Extinction after a dark time t_d: the blockade depth 1 - epsilon decays
/// with the population lifetime, epsilon -> 1 at long times.
pub fn blockade_decay(t_d: f64, eps0: f64, d: &DecayParams) -> f64 {
    1.0 - (1.0 - eps0) * (-t_d / d.tau_pop).exp()
}

pub fn dephasing_rate(density: f64, d: &DecayParams) -> f64 {
    d.gamma0 + d.k_rho * density
}

pub fn retrieval_decay(t_d: f64, n_r0: f64, rate: f64) -> f64 {
    n_r0 * (-rate * t_d).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_fit() -> StorageParams {
        StorageParams { eta_sb: 0.29, bins: 2.0, od: 3.2, od_eit: 0.91 }
    }

    fn switch_fit() -> SwitchParams {
        SwitchParams { od_b0: 5.4, n1: 23.0, p_s: 0.23, n0: 0.014 / 0.23, t0: 0.30, bins: 1.6 }
    }

    /// Direct evaluation of the E1 closed form, no cancellation handling.
    fn full_mode_direct(n_in: f64, p: &StorageParams) -> f64 {
        let mu0 = n_in / p.bins;
        let mu_l = mu0 * (-p.od).exp();
        let a = (1.0 - (-p.od_eit).exp()) / p.od_eit;
        let e1 = |x: f64| exponential_integral_e1(x).unwrap();
        p.bins * (a * (1.0 - (-mu0).exp()) - 1.0 + (mu0 - mu_l) / p.od + (e1(mu_l) - e1(mu0)) / p.od)
    }

    /// Midpoint sum of the alpha1-neglected bin mean over 10^4 sub-bins.
    fn full_mode_bin_sum(n_in: f64, p: &StorageParams) -> f64 {
        let m = MediumParams::normalized(p.od, p.od_eit).unwrap();
        let mu0 = n_in / p.bins;
        let k = 10_000;
        let sum: f64 = (0..k)
            .map(|i| crate::propagation::bin_mean_analytic(mu0, &m, (i as f64 + 0.5) / k as f64))
            .sum();
        p.bins * sum / k as f64
    }

    #[test]
    fn rapid_operating_point() {
        let p = StorageParams { eta_sb: 0.31, bins: 3.2, od: 3.2, od_eit: 0.91 };
        let nb = stored_mean_before_switchoff(1.0, &p, StorageMode::Rapid).unwrap();
        assert!((nb - 0.56).abs() < 0.01, "{nb}");
    }

    #[test]
    fn zero_input_stores_nothing() {
        for mode in [StorageMode::Full, StorageMode::Rapid] {
            assert_eq!(stored_mean_before_switchoff(0.0, &full_fit(), mode).unwrap(), 0.0);
            assert_eq!(extinction_vs_ng(0.0, &full_fit(), mode).unwrap().value, 1.0);
        }
    }

    #[test]
    fn full_mode_matches_direct_and_bin_sum() {
        let p = full_fit();
        for n in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let v = stored_mean_before_switchoff(n, &p, StorageMode::Full).unwrap();
            let d = full_mode_direct(n, &p);
            let s = full_mode_bin_sum(n, &p);
            assert!((v - d).abs() < 1e-12, "n={n}: {v} vs {d}");
            assert!((v - s).abs() < 1e-7, "n={n}: {v} vs {s}");
        }
    }

    #[test]
    fn rapid_below_full_with_bound() {
        // full - rapid = b int (mu - 1 + e^-mu) dz >= 0
        let p = full_fit();
        for n in [0.5, 1.0, 2.0, 4.0] {
            let full = stored_mean_before_switchoff(n, &p, StorageMode::Full).unwrap();
            let rapid = stored_mean_before_switchoff(n, &p, StorageMode::Rapid).unwrap();
            let mu0 = n / p.bins;
            assert!(rapid <= full);
            assert!(full - rapid < rapid * (1.0 - (-p.od * mu0).exp()));
        }
    }

    #[test]
    fn beta_values() {
        let beta = initial_slope_beta(&full_fit());
        assert!((beta - 0.19).abs() < 0.005, "{beta}");
        let clear = StorageParams { od_eit: 1e-14, ..full_fit() };
        assert!((initial_slope_beta(&clear) - 0.29).abs() < 1e-12);
        let none = StorageParams { eta_sb: 0.0, ..full_fit() };
        assert_eq!(initial_slope_beta(&none), 0.0);
        assert!(beta <= full_fit().eta_sb);
    }

    #[test]
    fn numeric_slope_matches_beta() {
        let p = full_fit();
        for mode in [StorageMode::Full, StorageMode::Rapid] {
            let h = 1e-6;
            let e0 = extinction_vs_ng_raw(0.0, &p, mode).unwrap();
            let e1 = extinction_vs_ng_raw(h, &p, mode).unwrap();
            let slope = (e0 - e1) / h;
            assert!((slope / p.beta() - 1.0).abs() < 1e-4, "{mode:?}: {slope}");
        }
    }

    #[test]
    fn extinction_decreasing_in_ng() {
        for mode in [StorageMode::Full, StorageMode::Rapid] {
            let mut last = 1.0;
            for k in 1..60 {
                let e = extinction_vs_ng(k as f64 * 0.1, &full_fit(), mode).unwrap();
                assert!(e.is_clean());
                assert!(e.value < last && e.value > 0.0);
                last = e.value;
            }
        }
    }

    #[test]
    fn extinction_clamps_outside_linear_regime() {
        let p = StorageParams { eta_sb: 1.0, bins: 20.0, od: 3.2, od_eit: 0.01 };
        let e = extinction_vs_ng(40.0, &p, StorageMode::Rapid).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(matches!(e.warnings[0], ValidityWarning::LinearizedStorage { .. }));
    }

    fn herald_model() -> HeraldModel {
        HeraldModel {
            params: HeraldParams { eta_wr: 0.016, eta_det: 0.27, p_h0: 1.4e-4 },
            storage: StorageParams { eta_sb: 0.29, bins: 2.0, od: 3.2, od_eit: 0.91 },
            mode: StorageMode::Rapid,
        }
    }

    #[test]
    fn herald_background_and_saturation() {
        let h = herald_model();
        assert_eq!(h.probability(0.0).unwrap(), 1.4e-4);
        let mut last = 0.0;
        for k in 0..100 {
            let p = h.probability(k as f64 * 0.2).unwrap();
            assert!(p >= last);
            last = p;
        }
        let ceiling = 0.016 * 0.27 * 2.0 * (1.0 - (-0.91f64).exp()) / 0.91 + 1.4e-4;
        assert!(h.probability(1e3).unwrap() <= ceiling + 1e-15);
        assert!((h.probability(1e3).unwrap() - ceiling).abs() < 1e-12);
    }

    fn total() -> TotalTransmission {
        TotalTransmission {
            storage: full_fit(),
            mode: StorageMode::Full,
            reference: transmitted_mean(1.7, 1.6, 0.30),
        }
    }

    #[test]
    fn postselection_background_vanishes_at_large_ng() {
        let mut h = herald_model();
        h.params.eta_wr = 10.0; // p_h >> p_h0
        let e = postselected_extinction_vs_ng(20.0, 0.022, 0.7, &h, &total()).unwrap();
        assert!((e - 0.022).abs() < 1e-3);
    }

    #[test]
    fn postselection_at_half_background() {
        // choose N_g where p_h = 2 p_h0, so q = 1/2
        let h = herald_model();
        let target = 2.0 * h.params.p_h0;
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h.probability(mid).unwrap() < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let n_g = 0.5 * (lo + hi);
        let e = postselected_extinction_vs_ng(n_g, 0.022, 0.7, &h, &total()).unwrap();
        // rearranged: eps_post = eps_ideal + q (N_tot / N_post0 - eps_ideal)
        let alt = 0.022 + 0.5 * (total().at(n_g).unwrap() / 0.7 - 0.022);
        assert!((e - alt).abs() < 1e-12);
    }

    #[test]
    fn postselection_undefined_without_heralds() {
        let mut h = herald_model();
        h.params.p_h0 = 0.0;
        assert!(postselected_extinction_vs_ng(0.0, 0.022, 0.7, &h, &total()).is_err());
    }

    #[test]
    fn blockaded_od_law() {
        let s = switch_fit();
        assert_eq!(blockaded_od(0.0, &s).value, 5.4);
        assert_eq!(blockaded_od(23.0, &s).value, 0.0);
        assert!(!blockaded_od(23.0, &s).is_clean());
        assert!((od_b0_estimate(14e-6, 5e-6) - 5.6).abs() < 1e-12);
    }

    #[test]
    fn post_extinction_limits() {
        let s = switch_fit();
        let small = extinction_post_vs_nt(1e-7, &s).unwrap();
        assert!((small / ((-5.4f64).exp() / 0.30) - 1.0).abs() < 1e-6);
        assert!(extinction_post_vs_nt(0.0, &s).is_err());
        let open = SwitchParams { od_b0: 0.0, n1: f64::INFINITY, ..s };
        for nt in [0.5, 1.7, 5.0] {
            let e = extinction_post_vs_nt(nt, &open).unwrap();
            assert!(e >= 1.0);
            assert!((e - nt / transmitted_mean(nt, s.bins, s.t0)).abs() < 1e-12);
        }
    }

    #[test]
    fn total_extinction_limits() {
        let s = switch_fit();
        let none = SwitchParams { p_s: 0.0, ..s };
        for nt in [0.3, 1.7, 6.0] {
            assert!((extinction_total_vs_nt(nt, &none).unwrap() - 1.0).abs() < 1e-15);
            let pure = SwitchParams { p_s: 1.0, n0: 0.0, ..s };
            let a = extinction_total_vs_nt(nt, &pure).unwrap();
            let b = extinction_post_vs_nt(nt, &pure).unwrap();
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        assert!((background_numerator(&s) - 0.014).abs() < 1e-15);
        assert!(extinction_total_vs_nt(0.0, &s).is_err());
    }

    #[test]
    fn decay_laws() {
        let d = DecayParams { tau_pop: 60e-6, gamma0: 0.8e6, k_rho: 0.3e6 / 2e18 };
        assert_eq!(blockade_decay(0.0, 0.81, &d), 0.81);
        assert!((blockade_decay(1.0, 0.81, &d) - 1.0).abs() < 1e-12);
        let e = blockade_decay(60e-6, 0.81, &d);
        assert!((1.0 - e - 0.19 / std::f64::consts::E).abs() < 1e-12);
        assert_eq!(dephasing_rate(0.0, &d), 0.8e6);
        let op = dephasing_rate(2e18, &d);
        assert!((op - 1.1e6).abs() < 1e-6);
        // 1/e retrieval time ~0.9 us at the operating point
        assert!((op * 0.9e-6 - 1.0).abs() < 0.02);
        assert!((retrieval_decay(1.0 / op, 2.0, op) - 2.0 / std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn exact_stored_mean_near_full_form() {
        let p = full_fit();
        for n in [0.5, 1.0, 2.0] {
            let exact = stored_mean_exact(n, &p).unwrap();
            let full = stored_mean_before_switchoff(n, &p, StorageMode::Full).unwrap();
            let rapid = stored_mean_before_switchoff(n, &p, StorageMode::Rapid).unwrap();
            assert!(rapid <= exact, "{exact} {rapid}");
            assert!((exact / full - 1.0).abs() < 0.1, "{full} {exact}");
        }
    }
}
