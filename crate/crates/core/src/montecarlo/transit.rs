use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;

use super::{with_workers, StreamKey};
use crate::error::{Error, Result};
use crate::propagation::MediumParams;

/// Photons left in one bin after crossing the whole medium.
pub fn simulate_bin_transit<R: Rng + ?Sized>(n0: u32, m: &MediumParams, rng: &mut R) -> u32 {
    simulate_bin_transit_to(n0, m, m.length, rng)
}

/// Continuous-z death process up to depth `z`: with n >= 2 photons the next
/// absorption happens after an Exp(n alpha) distance; a lone photon survives
/// the remaining distance with probability e^{-alpha1 dz}.
pub fn simulate_bin_transit_to<R: Rng + ?Sized>(n0: u32, m: &MediumParams, z: f64, rng: &mut R) -> u32 {
    let mut n = n0;
    let mut pos = 0.0;
    while n >= 2 {
        if m.alpha <= 0.0 {
            return n;
        }
        let step = Exp::new(n as f64 * m.alpha).expect("positive rate").sample(rng);
        if pos + step >= z {
            return n;
        }
        pos += step;
        n -= 1;
    }
    if n == 1 && rng.random::<f64>() >= (-m.alpha1 * (z - pos)).exp() {
        return 0;
    }
    n
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u32
}

/// Mean and standard error of the transmitted count over `trials` bins with
/// Poisson(mu0) input.
pub fn transit_mean(mu0: f64, m: &MediumParams, z: f64, trials: u64, seed: u64, workers: usize) -> Result<(f64, f64)> {
    if !(mu0 >= 0.0 && mu0.is_finite()) {
        return Err(Error::domain("transit_mean", "mu0 must be finite and >= 0"));
    }
    if trials < 2 {
        return Err(Error::domain("transit_mean", "need at least 2 trials"));
    }
    m.validate()?;
    let key = StreamKey::new(seed);
    const CHUNK: u64 = 4096;
    let chunks = trials.div_ceil(CHUNK);
    let (sum, sum_sq) = with_workers(workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = key.stream(c);
                let mut s = 0u64;
                let mut s2 = 0u64;
                for _ in (c * CHUNK)..((c + 1) * CHUNK).min(trials) {
                    let n = simulate_bin_transit_to(poisson_count(mu0, &mut rng), m, z, &mut rng) as u64;
                    s += n;
                    s2 += n * n;
                }
                (s, s2)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    });
    let n = trials as f64;
    let mean = sum as f64 / n;
    let var = (sum_sq as f64 / n - mean * mean) * n / (n - 1.0);
    Ok((mean, (var.max(0.0) / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::{bin_mean_series, evolve_bin, BinDistribution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = MediumParams::normalized(3.2, 0.91).unwrap();
        let clear = MediumParams::normalized(3.2, 0.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(simulate_bin_transit(0, &m, &mut rng), 0);
            assert_eq!(simulate_bin_transit(1, &clear, &mut rng), 1);
            assert!(simulate_bin_transit(5, &m, &mut rng) <= 5);
        }
    }

    #[test]
    fn fock_state_distribution_matches_ode() {
        let m = MediumParams::normalized(2.0, 0.5).unwrap();
        let ode = evolve_bin(&BinDistribution::fock(3, 20), &m, 1.0, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut counts = [0u32; 4];
        for _ in 0..n {
            counts[simulate_bin_transit(3, &m, &mut rng) as usize] += 1;
        }
        for k in 0..4 {
            let p = ode.probs[k];
            let f = counts[k] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-9);
            assert!((f - p).abs() < 4.0 * se, "n={k}: {f} vs {p}");
        }
    }

    #[test]
    fn mean_matches_series_and_is_worker_independent() {
        let m = MediumParams::normalized(3.2, 0.91).unwrap();
        let (a, se) = transit_mean(1.0, &m, 1.0, 100_000, 11, 1).unwrap();
        let (b, _) = transit_mean(1.0, &m, 1.0, 100_000, 11, 4).unwrap();
        assert_eq!(a, b);
        let exact = bin_mean_series(1.0, &m, 1.0);
        assert!((a - exact).abs() < 3.5 * se, "{a} vs {exact} (se {se})");
    }
}
