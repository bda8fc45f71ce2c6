//! Photon-number evolution of one temporal bin under self-blockade.
//!
//! A bin holding n >= 2 photons loses each of them at rate `alpha` per unit
//! length; a lone photon sees only the residual EIT absorption `alpha1`.
//! The master equation in z is integrated numerically by [`evolve_bin`] and
//! solved in closed form by [`bin_mean_analytic`] / [`bin_mean_series`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homogeneous medium. Absorption coefficients in 1/m, lengths in m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Absorption coefficient without EIT.
    pub alpha: f64,
    /// Absorption coefficient at the EIT resonance.
    pub alpha1: f64,
    pub length: f64,
    /// Spatial length of the pulse inside the medium.
    pub pulse_length: f64,
}

impl MediumParams {
    /// Medium of length `length` with the given optical depths, and L_p = L.
    pub fn from_ods(od: f64, od_eit: f64, length: f64) -> Result<Self> {
        let m = MediumParams {
            alpha: od / length,
            alpha1: od_eit / length,
            length,
            pulse_length: length,
        };
        m.validate()?;
        Ok(m)
    }

    /// Unit-length medium, so that z is measured in units of L.
    pub fn normalized(od: f64, od_eit: f64) -> Result<Self> {
        Self::from_ods(od, od_eit, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha1 >= 0.0) {
            return Err(Error::domain("MediumParams", "absorption coefficients must be >= 0"));
        }
        if !(self.length > 0.0 && self.pulse_length > 0.0 && self.pulse_length <= self.length) {
            return Err(Error::domain("MediumParams", "requires L >= L_p > 0"));
        }
        Ok(())
    }

    /// The binning picture assumes EIT lowers the absorption (alpha > alpha1).
    /// The equations stay well defined otherwise, so this is only a warning.
    pub fn blockade_regime(&self) -> bool {
        self.alpha > self.alpha1
    }

    pub fn od(&self) -> f64 {
        self.alpha * self.length
    }

    pub fn od_eit(&self) -> f64 {
        self.alpha1 * self.length
    }

    /// Resonant EIT transmission e^{-alpha1 L}.
    pub fn t0(&self) -> f64 {
        (-self.od_eit()).exp()
    }
}

/// Incoming pulse divided into `bins` independent bins of duration tau_c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub n_in: f64,
    /// Real-valued bin count; closed forms use it as a continuous parameter.
    pub bins: f64,
    pub pulse_duration: f64,
    pub correlation_time: f64,
}

impl PulseSpec {
    /// b = t_p / tau_c.
    pub fn from_durations(n_in: f64, pulse_duration: f64, correlation_time: f64) -> Self {
        PulseSpec {
            n_in,
            bins: pulse_duration / correlation_time,
            pulse_duration,
            correlation_time,
        }
    }

    pub fn mu0(&self) -> f64 {
        self.n_in / self.bins
    }

    /// Bin count for simulations, which need whole bins: b rounded up,
    /// with the per-bin mean rescaled to keep N_in fixed.
    pub fn integer_bins(&self) -> (usize, f64) {
        let nb = (self.bins.ceil() as usize).max(1);
        (nb, self.n_in / nb as f64)
    }
}

/// Truncated photon-number distribution p_0 ..= p_nmax of one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinDistribution {
    pub probs: Vec<f64>,
    /// Probability mass beyond the truncation at t = 0.
    pub truncation_error: f64,
}

impl BinDistribution {
    /// Default truncation max(20, ceil(mu0 + 8 sqrt(mu0))).
    pub fn default_nmax(mu0: f64) -> usize {
        ((mu0 + 8.0 * mu0.sqrt()).ceil() as usize).max(20)
    }

    pub fn poisson(mu0: f64, nmax: usize) -> Self {
        let nmax = nmax.max(2);
        let mut probs = Vec::with_capacity(nmax + 1);
        let mut p = (-mu0).exp();
        for n in 0..=nmax {
            if n > 0 {
                p *= mu0 / n as f64;
            }
            probs.push(p);
        }
        let total: f64 = probs.iter().sum();
        BinDistribution {
            probs,
            truncation_error: (1.0 - total).max(0.0),
        }
    }

    pub fn fock(n: usize, nmax: usize) -> Self {
        let nmax = nmax.max(2).max(n);
        let mut probs = vec![0.0; nmax + 1];
        probs[n] = 1.0;
        BinDistribution {
            probs,
            truncation_error: 0.0,
        }
    }

    pub fn nmax(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

fn master_equation(m: &MediumParams, p: &[f64], dp: &mut [f64]) {
    let nmax = p.len() - 1;
    for n in 2..=nmax {
        let gain = if n < nmax { (n + 1) as f64 * p[n + 1] } else { 0.0 };
        dp[n] = m.alpha * (gain - n as f64 * p[n]);
    }
    dp[1] = -m.alpha1 * p[1] + 2.0 * m.alpha * p[2];
    dp[0] = m.alpha1 * p[1];
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Local error tolerance per step (absolute, on probabilities).
const STEP_TOLERANCE: f64 = 1e-12;
/// Largest acceptable change of total probability in one step.
const MAX_DRIFT_PER_STEP: f64 = 1e-6;

/// Integrates the bin master equation from 0 to `z` with an adaptive
/// explicit Dormand-Prince stepper. `step` is the initial trial step.
pub fn evolve_bin(init: &BinDistribution, m: &MediumParams, z: f64, step: f64) -> Result<BinDistribution> {
    m.validate()?;
    if !(0.0..=m.length * (1.0 + 1e-12)).contains(&z) {
        return Err(Error::domain("evolve_bin", format!("z = {z} outside [0, L]")));
    }
    if !(step > 0.0) {
        return Err(Error::domain("evolve_bin", "initial step must be > 0"));
    }
    let dim = init.probs.len();
    let mut y = init.probs.clone();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];

    let mut pos = 0.0;
    let mut h = step.min(z);
    master_equation(m, &y, &mut k[0]);
    while pos < z {
        h = h.min(z - pos);
        if h <= f64::EPSILON * z.max(1e-300) {
            break;
        }
        let stage = |coeffs: &[(usize, f64)], k: &[Vec<f64>; 7], out: &mut [f64]| {
            for i in 0..dim {
                let mut acc = y[i];
                for &(j, a) in coeffs {
                    acc += h * a * k[j][i];
                }
                out[i] = acc;
            }
        };
        stage(&[(0, A21)], &k, &mut tmp);
        master_equation(m, &tmp, &mut k[1]);
        stage(&[(0, A31), (1, A32)], &k, &mut tmp);
        master_equation(m, &tmp, &mut k[2]);
        stage(&[(0, A41), (1, A42), (2, A43)], &k, &mut tmp);
        master_equation(m, &tmp, &mut k[3]);
        stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &k, &mut tmp);
        master_equation(m, &tmp, &mut k[4]);
        stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &k, &mut tmp);
        master_equation(m, &tmp, &mut k[5]);
        stage(&[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], &k, &mut y5);
        master_equation(m, &y5, &mut k[6]);

        let mut err: f64 = 0.0;
        for i in 0..dim {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            err = err.max(e.abs());
        }

        if err <= STEP_TOLERANCE {
            let before: f64 = y.iter().sum();
            let after: f64 = y5.iter().sum();
            if (after - before).abs() > MAX_DRIFT_PER_STEP {
                return Err(Error::Solver {
                    z: pos,
                    step: h,
                    reason: format!("probability drift {:.3e} in one step", after - before),
                });
            }
            pos += h;
            std::mem::swap(&mut y, &mut y5);
            // first-same-as-last
            let (first, rest) = k.split_at_mut(6);
            first[0].copy_from_slice(&rest[0]);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * (STEP_TOLERANCE / err).powf(0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if !h.is_finite() || h < 1e-14 * z {
            return Err(Error::Solver {
                z: pos,
                step: h,
                reason: "step size underflow".into(),
            });
        }
    }
    Ok(BinDistribution {
        probs: y,
        truncation_error: init.truncation_error,
    })
}

/// mu(z) = mu0 e^{-alpha z}.
pub fn bin_poisson_mean(mu0: f64, m: &MediumParams, z: f64) -> f64 {
    mu0 * (-m.alpha * z).exp()
}

/// Closed-form p_n(z) for n >= 2 (Poissonian with decaying mean).
pub fn pn_closed(n: usize, mu0: f64, m: &MediumParams, z: f64) -> f64 {
    assert!(n >= 2, "closed form holds for n >= 2");
    let mu = bin_poisson_mean(mu0, m, z);
    let mut p = (-mu).exp();
    for k in 1..=n {
        p *= mu / k as f64;
    }
    p
}

/// Which closed form for the lone-photon probability p_1(z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ClosedForm {
    /// alpha1 dropped from the series denominators (alpha1 << alpha).
    #[default]
    NeglectAlpha1,
    /// Full power series, exact for the master equation.
    Series,
}

/// p_1(z) with alpha1 neglected in the denominators.
pub fn p1_neglected(mu0: f64, m: &MediumParams, z: f64) -> f64 {
    let mu = bin_poisson_mean(mu0, m, z);
    -(-m.alpha1 * z).exp() * (-mu0).exp_m1() - 1.0 + (1.0 + mu) * (-mu).exp()
}

/// p_1(z) from the power series, truncated after `max_k + 1` terms.
pub fn p1_series_terms(mu0: f64, m: &MediumParams, z: f64, max_k: usize) -> f64 {
    let mut coeff = mu0 * mu0; // (-mu0)^{k+2} / k!
    let mut sum = 0.0;
    for k in 0..=max_k {
        if k > 0 {
            coeff *= -mu0 / k as f64;
        }
        let d = m.alpha1 - (k + 2) as f64 * m.alpha;
        let integral = if d == 0.0 { z } else { (d * z).exp_m1() / d };
        sum += coeff * integral;
    }
    (-m.alpha1 * z).exp() * (mu0 * (-mu0).exp() + m.alpha * sum)
}

/// p_1(z) from the power series, summed until the terms are negligible.
pub fn p1_series(mu0: f64, m: &MediumParams, z: f64) -> f64 {
    // terms decay like mu0^k / k!; 40 + 4 mu0 terms reach machine precision
    let k = 40 + (4.0 * mu0).ceil() as usize;
    p1_series_terms(mu0, m, z, k.min(400))
}

/// Mean photon number of a bin after distance `z`, alpha1-neglected form.
pub fn bin_mean_analytic(mu0: f64, m: &MediumParams, z: f64) -> f64 {
    let mu = bin_poisson_mean(mu0, m, z);
    // e^{-a1 z}(1 - e^{-mu0}) - 1 + mu + e^{-mu}
    -(-m.alpha1 * z).exp() * (-mu0).exp_m1() + mu + (-mu).exp_m1()
}

/// Mean photon number of a bin after distance `z`, exact series form.
pub fn bin_mean_series(mu0: f64, m: &MediumParams, z: f64) -> f64 {
    let mu = bin_poisson_mean(mu0, m, z);
    p1_series(mu0, m, z) - mu * (-mu).exp_m1()
}

pub fn bin_mean(mu0: f64, m: &MediumParams, z: f64, form: ClosedForm) -> f64 {
    match form {
        ClosedForm::NeglectAlpha1 => bin_mean_analytic(mu0, m, z),
        ClosedForm::Series => bin_mean_series(mu0, m, z),
    }
}

/// Transmitted photon number in the rapid-blockade limit, b T0 (1 - e^{-N_in/b}).
pub fn transmitted_mean(n_in: f64, bins: f64, t0: f64) -> f64 {
    -bins * t0 * (-n_in / bins).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn medium(od: f64, od_eit: f64) -> MediumParams {
        MediumParams::normalized(od, od_eit).unwrap()
    }

    #[test]
    fn vacuum_is_fixed_point() {
        let m = medium(3.2, 0.91);
        let out = evolve_bin(&BinDistribution::fock(0, 20), &m, 1.0, 1e-3).unwrap();
        assert_eq!(out.probs[0], 1.0);
        assert!(out.probs[1..].iter().all(|p| *p == 0.0));
    }

    #[test]
    fn lone_photon_with_perfect_eit_survives() {
        let m = medium(3.2, 0.0);
        for z in [0.1, 0.5, 1.0] {
            let out = evolve_bin(&BinDistribution::fock(1, 20), &m, z, 1e-3).unwrap();
            assert_eq!(out.probs[1], 1.0);
        }
    }

    #[test]
    fn poisson_input_matches_closed_forms() {
        let m = medium(3.2, 0.91);
        let mu0 = 2.0;
        let init = BinDistribution::poisson(mu0, BinDistribution::default_nmax(mu0));
        let out = evolve_bin(&init, &m, 1.0, 1e-3).unwrap();
        for n in 2..10 {
            assert!((out.probs[n] - pn_closed(n, mu0, &m, 1.0)).abs() < 1e-6);
        }
        assert!((out.probs[1] - p1_series(mu0, &m, 1.0)).abs() < 1e-6);
        // p0 from normalization
        let mu = bin_poisson_mean(mu0, &m, 1.0);
        let p0 = (1.0 + mu) * (-mu).exp() - p1_series(mu0, &m, 1.0);
        assert!((out.probs[0] - p0).abs() < 1e-6);
    }

    #[test]
    fn probability_conserved() {
        let m = medium(10.0, 1.2);
        let init = BinDistribution::poisson(4.0, 40);
        let before = init.total();
        for z in [0.1, 0.33, 1.0] {
            let out = evolve_bin(&init, &m, z, 1e-2).unwrap();
            assert!((out.total() - before).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_z_outside_medium() {
        let m = medium(1.0, 0.1);
        assert!(evolve_bin(&BinDistribution::fock(2, 5), &m, 1.5, 1e-3).is_err());
        assert!(evolve_bin(&BinDistribution::fock(2, 5), &m, 0.5, 0.0).is_err());
    }

    #[test]
    fn analytic_mean_at_entry_is_input() {
        let m = medium(3.2, 0.91);
        for mu0 in [0.0, 0.1, 1.0, 5.0] {
            assert!((bin_mean_analytic(mu0, &m, 0.0) - mu0).abs() <= 1e-12 * mu0.max(1.0));
            assert!((bin_mean_series(mu0, &m, 0.0) - mu0).abs() <= 1e-12 * mu0.max(1.0));
        }
    }

    #[test]
    fn analytic_mean_full_blockade_limit() {
        let m = medium(200.0, 0.0);
        for mu0 in [0.3, 1.0, 3.0] {
            let v = bin_mean_analytic(mu0, &m, 1.0);
            assert!((v - (1.0 - (-mu0).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn neglected_form_tracks_ode_for_small_alpha1() {
        // with alpha1/alpha -> 0 the two forms coincide
        let m = medium(3.2, 1e-4);
        let init = BinDistribution::poisson(0.5, 20);
        let ode = evolve_bin(&init, &m, 1.0, 1e-3).unwrap().mean();
        assert!((bin_mean_analytic(0.5, &m, 1.0) / ode - 1.0).abs() < 1e-4);
    }

    #[test]
    fn series_form_matches_ode_at_gate_parameters() {
        let m = medium(3.2, 0.91);
        let init = BinDistribution::poisson(0.5, 20);
        let ode = evolve_bin(&init, &m, 1.0, 1e-3).unwrap().mean();
        assert!((bin_mean_series(0.5, &m, 1.0) / ode - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rapid_limit_agrees_with_full_form() {
        // mu(L) < 1e-3: N_out = b T0 (1 - e^{-N/b}) vs b N_bin(L)
        let m = medium(12.0, 1.2);
        let b = 1.6;
        for n_in in [0.5, 2.0, 7.0] {
            let mu0 = n_in / b;
            assert!(bin_poisson_mean(mu0, &m, 1.0) < 1e-3);
            let rapid = transmitted_mean(n_in, b, m.t0());
            let full = b * bin_mean_analytic(mu0, &m, 1.0);
            assert!((rapid / full - 1.0).abs() < 1e-2);
        }
    }

    #[test]
    fn transmitted_mean_limits() {
        assert_eq!(transmitted_mean(0.0, 1.6, 0.3), 0.0);
        let small = 1e-6;
        assert!((transmitted_mean(small, 1.6, 0.3) / (0.3 * small) - 1.0).abs() < 1e-6);
        assert!((transmitted_mean(1e3, 1.6, 0.3) - 0.48).abs() < 1e-12);
    }

    #[test]
    fn integer_bins_rescale() {
        let p = PulseSpec { n_in: 1.7, bins: 1.6, pulse_duration: 0.4e-6, correlation_time: 0.25e-6 };
        let (nb, mu0) = p.integer_bins();
        assert_eq!(nb, 2);
        assert!((mu0 - 0.85).abs() < 1e-15);
        let est = PulseSpec::from_durations(1.0, 0.4e-6, 0.23e-6);
        assert!((est.bins - 1.739).abs() < 1e-3);
    }

    #[test]
    fn default_truncation() {
        assert_eq!(BinDistribution::default_nmax(1.0), 20);
        assert_eq!(BinDistribution::default_nmax(16.0), 48);
        let d = BinDistribution::poisson(2.0, 20);
        assert!(d.truncation_error < 1e-12);
        assert!((d.total() + d.truncation_error - 1.0).abs() < 1e-14);
    }
}
