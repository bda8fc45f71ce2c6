//! Two-detector click records and the g2(tau) coincidence estimator.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transit::poisson_count;
use super::StreamKey;
use crate::error::{Error, Result};

/// Clicks of one detector in one cycle, times in s from the window start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub cycle: u64,
    pub detector_id: u8,
    pub timestamps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Row {
    pub tau: f64,
    pub g2: f64,
    pub std_error: f64,
    /// Same-cycle coincidences in this bin.
    pub coincidences: u64,
    /// Fewer than 10 coincidences.
    pub flagged: bool,
}

/// Cross-detector g2(tau) from `n_cycles` cycles.
///
/// Same-cycle coincidences are normalized by coincidences between cycle i
/// and cycle i + s, s = 1..=max_shift, which carry the same pulse shape but
/// no correlation.
pub fn estimate_g2(
    records: &[ClickRecord],
    n_cycles: u64,
    bin_width: f64,
    max_tau: f64,
    max_shift: u64,
) -> Result<Vec<G2Row>> {
    if !(bin_width > 0.0 && max_tau >= 0.0) {
        return Err(Error::Data("bin width must be > 0 and max tau >= 0".into()));
    }
    if max_shift == 0 || max_shift >= n_cycles {
        return Err(Error::Data("need 1 <= max_shift < n_cycles".into()));
    }
    let mut by_cycle: HashMap<u64, [Vec<f64>; 2]> = HashMap::new();
    let mut seen = [false; 2];
    for r in records {
        if r.detector_id > 1 {
            return Err(Error::Data(format!("detector id {} (expected 0 or 1)", r.detector_id)));
        }
        if r.cycle >= n_cycles {
            return Err(Error::Data(format!("cycle {} >= n_cycles {n_cycles}", r.cycle)));
        }
        if r.timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Data(format!("timestamps of cycle {} not sorted", r.cycle)));
        }
        seen[r.detector_id as usize] |= !r.timestamps.is_empty();
        by_cycle.entry(r.cycle).or_default()[r.detector_id as usize].extend_from_slice(&r.timestamps);
    }
    if !(seen[0] && seen[1]) {
        return Err(Error::Data("coincidence estimator needs clicks on both detectors".into()));
    }

    let half = (max_tau / bin_width).round() as i64;
    let width = (2 * half + 1) as usize;
    let bin_of = |tau: f64| -> Option<usize> {
        let k = (tau / bin_width).round() as i64;
        (k.abs() <= half).then(|| (k + half) as usize)
    };
    let count = |a: &[f64], b: &[f64], hist: &mut [u64]| {
        for &t0 in a {
            for &t1 in b {
                if let Some(i) = bin_of(t1 - t0) {
                    hist[i] += 1;
                }
            }
        }
    };

    let mut same = vec![0u64; width];
    let mut shifted = vec![0u64; width];
    for (c, det) in &by_cycle {
        count(&det[0], &det[1], &mut same);
        for s in 1..=max_shift {
            if let Some(other) = by_cycle.get(&(c + s)) {
                count(&det[0], &other[1], &mut shifted);
            }
        }
    }
    let shifted_pairs: f64 = (1..=max_shift).map(|s| (n_cycles - s) as f64).sum();
    let n = n_cycles as f64;

    Ok((0..width)
        .map(|i| {
            let c0 = same[i] as f64;
            let cs = shifted[i] as f64;
            let expected = cs / shifted_pairs * n;
            let g2 = c0 / expected;
            let se = g2.max(1.0 / expected) * (1.0 / c0.max(1.0) + 1.0 / cs).sqrt();
            G2Row {
                tau: (i as i64 - half) as f64 * bin_width,
                g2,
                std_error: se,
                coincidences: same[i],
                flagged: same[i] < 10 || shifted[i] == 0,
            }
        })
        .collect())
}

/// Splits photons 50:50 onto two detectors of efficiency `eta`.
fn detect<R: Rng + ?Sized>(cycle: u64, photons: &[f64], eta: f64, rng: &mut R) -> [ClickRecord; 2] {
    let mut out = [0u8, 1].map(|d| ClickRecord {
        cycle,
        detector_id: d,
        timestamps: Vec::new(),
    });
    for &t in photons {
        let d = usize::from(rng.random::<bool>());
        if rng.random::<f64>() < eta {
            out[d].timestamps.push(t);
        }
    }
    out
}

fn uniform_times<R: Rng + ?Sized>(n: u32, window: f64, rng: &mut R) -> Vec<f64> {
    let mut t: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * window).collect();
    t.sort_by(f64::total_cmp);
    t
}

fn generate<F>(n_cycles: u64, eta: f64, seed: u64, photons: F) -> Vec<ClickRecord>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Vec<f64> + Sync,
{
    let key = StreamKey::new(seed);
    (0..n_cycles)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = key.stream(c);
            let p = photons(&mut rng);
            detect(c, &p, eta, &mut rng).into_iter().filter(|r| !r.timestamps.is_empty())
        })
        .collect()
}

/// Coherent light: Poisson(mean) photons per cycle, uniform in the window.
pub fn poissonian_clicks(n_cycles: u64, mean: f64, window: f64, eta: f64, seed: u64) -> Vec<ClickRecord> {
    generate(n_cycles, eta, seed, |rng| {
        let n = poisson_count(mean, rng);
        uniform_times(n, window, rng)
    })
}

/// Retrieval after storing a gate pulse in `bins` blockade bins: each
/// occupied bin holds one excitation, stored and retrieved with probability
/// `efficiency`. `background` uncorrelated photons per cycle are added.
pub fn single_excitation_clicks(
    n_cycles: u64,
    n_gate: f64,
    bins: f64,
    efficiency: f64,
    background: f64,
    window: f64,
    eta: f64,
    seed: u64,
) -> Vec<ClickRecord> {
    let b = (bins.ceil() as u32).max(1);
    let mu = n_gate / b as f64;
    generate(n_cycles, eta, seed, |rng| {
        let mut n = 0;
        for _ in 0..b {
            if poisson_count(mu, rng) > 0 && rng.random::<f64>() < efficiency {
                n += 1;
            }
        }
        n += poisson_count(background, rng);
        uniform_times(n, window, rng)
    })
}

/// Survival correlation of transmitted photons: a photon arriving `dt`
/// after the previous transmitted one is absorbed with probability
/// amplitude e^{-dt^2 / 2 tau_c^2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitKernel {
    pub amplitude: f64,
    pub tau_c: f64,
}

impl TransitKernel {
    pub fn kill_probability(&self, dt: f64) -> f64 {
        self.amplitude * (-dt * dt / (2.0 * self.tau_c * self.tau_c)).exp()
    }
}

pub fn blockade_transit_clicks(
    n_cycles: u64,
    mean: f64,
    kernel: TransitKernel,
    window: f64,
    eta: f64,
    seed: u64,
) -> Vec<ClickRecord> {
    generate(n_cycles, eta, seed, |rng| {
        let n = poisson_count(mean, rng);
        let mut last: Option<f64> = None;
        let mut out = Vec::new();
        for t in uniform_times(n, window, rng) {
            let killed = last.is_some_and(|l| rng.random::<f64>() < kernel.kill_probability(t - l));
            if !killed {
                out.push(t);
                last = Some(t);
            }
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poissonian_baseline_is_flat() {
        let n = 200_000;
        let recs = poissonian_clicks(n, 1.0, 2e-6, 0.5, 3);
        let rows = estimate_g2(&recs, n, 0.2e-6, 1.0e-6, 20).unwrap();
        for r in &rows {
            assert!(!r.flagged);
            assert!(r.g2 > 0.0 && (r.g2 - 1.0).abs() <= 3.0 * r.std_error, "{r:?}");
        }
    }

    #[test]
    fn single_excitation_is_antibunched() {
        let n = 400_000;
        let recs = single_excitation_clicks(n, 2.0, 0.2 / 0.23, 0.3, 0.01, 1e-6, 0.5, 4);
        let rows = estimate_g2(&recs, n, 2e-6, 0.0, 10).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].g2 < 0.5, "{:?}", rows[0]);
    }

    #[test]
    fn transit_kernel_makes_dip() {
        let n = 200_000;
        let k = TransitKernel { amplitude: 0.9, tau_c: 0.23e-6 };
        let recs = blockade_transit_clicks(n, 1.5, k, 2e-6, 0.5, 5);
        let rows = estimate_g2(&recs, n, 0.05e-6, 1.0e-6, 20).unwrap();
        let centre = rows[rows.len() / 2];
        assert_eq!(centre.tau, 0.0);
        assert!(centre.g2 < 0.4, "{centre:?}");
        assert!(rows[0].g2 > 0.8);
    }

    #[test]
    fn rejects_bad_input() {
        let one = vec![ClickRecord { cycle: 0, detector_id: 0, timestamps: vec![0.1] }];
        assert!(estimate_g2(&one, 10, 1.0, 1.0, 1).is_err());
        let bad = vec![ClickRecord { cycle: 0, detector_id: 2, timestamps: vec![0.1] }];
        assert!(estimate_g2(&bad, 10, 1.0, 1.0, 1).is_err());
        let unsorted = vec![
            ClickRecord { cycle: 0, detector_id: 0, timestamps: vec![0.2, 0.1] },
            ClickRecord { cycle: 0, detector_id: 1, timestamps: vec![0.1] },
        ];
        assert!(estimate_g2(&unsorted, 10, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn sparse_bins_are_flagged() {
        let recs = poissonian_clicks(200, 0.5, 1e-6, 0.5, 6);
        let rows = estimate_g2(&recs, 200, 0.1e-6, 0.5e-6, 5).unwrap();
        assert!(rows.iter().any(|r| r.flagged));
    }
}
