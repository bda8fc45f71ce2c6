//! Exact expectations of the simulated cycle, built from the closed forms.

use serde::{Deserialize, Serialize};

use super::cycles::{GateTransit, Scenario};
use crate::error::Result;
use crate::propagation::{evolve_bin, transmitted_mean, BinDistribution};
use crate::special::gauss_legendre_nodes;
use crate::storage_switch::{
    extinction_total_vs_nt, stored_mean_before_switchoff, StorageMode, StorageParams, SwitchParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    /// Whole bins used by the simulation for gate and target.
    pub gate_bins: usize,
    pub target_bins: usize,
    /// Mean excitations at switch-off for the simulated (integer-bin) process.
    pub n_b: f64,
    /// The closed-form N_b at the real-valued bin count.
    pub n_b_formula: f64,
    pub p_stored: f64,
    pub p_herald: f64,
    /// eta_wr eta_det N_b + p_h0.
    pub p_herald_linear: f64,
    pub n_out: f64,
    /// Total-ensemble extinction.
    pub epsilon: f64,
    /// 1 - eta_sb N_b: the storage-side model with perfect blockade.
    pub epsilon_storage_linear: f64,
    /// Extinction of the heralded subensemble.
    pub epsilon_post: f64,
}

/// Distribution of photons left in bin k at switch-off, averaged over its
/// position inside stratum [k/B, (k+1)/B).
fn stratum_distribution(sc: &Scenario, k: usize, bins: usize, mu0: f64) -> Result<Vec<f64>> {
    let b = bins as f64;
    let (lo, hi) = (k as f64 / b, (k + 1) as f64 / b);
    match sc.gate.transit {
        GateTransit::Rapid => {
            let x = sc.gate.od_eit;
            let avg = if x * (hi - lo) < 1e-12 {
                (-x * 0.5 * (lo + hi)).exp()
            } else {
                (-x * lo).exp() * -(-x * (hi - lo)).exp_m1() / (x * (hi - lo))
            };
            let p1 = -(-mu0).exp_m1() * avg;
            Ok(vec![1.0 - p1, p1])
        }
        GateTransit::ZResolved => {
            let m = sc.gate_medium()?;
            let init = BinDistribution::poisson(mu0, BinDistribution::default_nmax(mu0));
            let mut acc = vec![0.0; init.probs.len()];
            for (z, w) in gauss_legendre_nodes(lo, hi, 2) {
                let d = evolve_bin(&init, &m, z, 1e-3)?;
                for (a, p) in acc.iter_mut().zip(&d.probs) {
                    *a += w * b * p;
                }
            }
            Ok(acc)
        }
    }
}

/// E[(1 - s)^c] for a photon-number distribution.
fn survival_generating(probs: &[f64], s: f64) -> f64 {
    probs.iter().enumerate().map(|(n, p)| p * (1.0 - s).powi(n as i32)).sum()
}

pub fn compose(sc: &Scenario) -> Result<Composition> {
    sc.validate()?;
    let (gate_bins, mu0) = sc.gate_bins();
    let (target_bins, _) = sc.target_bins();
    let eta = sc.gate.eta_sb;
    let r = sc.retrieval_herald();

    let mut n_b = 0.0;
    let mut p_none = 1.0;
    let mut p_no_storage_herald = 1.0;
    for k in 0..gate_bins {
        let probs = stratum_distribution(sc, k, gate_bins, mu0)?;
        n_b += probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum::<f64>();
        p_none *= survival_generating(&probs, eta);
        p_no_storage_herald *= survival_generating(&probs, eta * r);
    }
    let p_stored = 1.0 - p_none;
    let p_h0 = sc.herald.p_h0;
    let p_herald = 1.0 - (1.0 - p_h0) * p_no_storage_herald;

    let storage = StorageParams {
        eta_sb: eta,
        bins: sc.gate.bins,
        od: sc.gate.od,
        od_eit: sc.gate.od_eit,
    };
    let mode = match sc.gate.transit {
        GateTransit::Rapid => StorageMode::Rapid,
        GateTransit::ZResolved => StorageMode::Full,
    };
    let n_b_formula = if sc.gate.od > 0.0 || mode == StorageMode::Rapid {
        stored_mean_before_switchoff(sc.n_g, &storage, mode)?
    } else {
        f64::NAN
    };

    let tb = target_bins as f64;
    let n_out = transmitted_mean(sc.n_t, tb, sc.switch.t0);
    let od_b = sc.blockaded_od();
    let blocked = sc.n_t * (-od_b).exp() + sc.switch.n0;
    let switch = SwitchParams {
        od_b0: od_b,
        n1: f64::INFINITY,
        p_s: p_stored,
        n0: sc.switch.n0,
        t0: sc.switch.t0,
        bins: tb,
    };
    let epsilon = if sc.n_t > 0.0 {
        extinction_total_vs_nt(sc.n_t, &switch)?
    } else {
        f64::NAN
    };
    let heralded_empty = p_none * p_h0;
    let epsilon_post = (heralded_empty * n_out + (p_herald - heralded_empty) * blocked) / (p_herald * n_out);

    Ok(Composition {
        gate_bins,
        target_bins,
        n_b,
        n_b_formula,
        p_stored,
        p_herald,
        p_herald_linear: sc.herald.eta_wr * sc.herald.eta_det * n_b + p_h0,
        n_out,
        epsilon,
        epsilon_storage_linear: 1.0 - eta * n_b,
        epsilon_post,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::run_cycles;
    use crate::presets::Preset;

    fn rapid() -> Scenario {
        let mut sc = Scenario::from_preset(&Preset::baseline());
        sc.gate.transit = GateTransit::Rapid;
        sc
    }

    #[test]
    fn rapid_n_b_equals_closed_form_at_integer_bins() {
        let sc = rapid();
        let c = compose(&sc).unwrap();
        assert_eq!(c.gate_bins, 2);
        assert!((c.n_b - c.n_b_formula).abs() < 1e-14);
    }

    #[test]
    fn z_resolved_n_b_matches_series_quadrature() {
        let sc = Scenario::from_preset(&Preset::baseline());
        let c = compose(&sc).unwrap();
        let exact = crate::storage_switch::stored_mean_exact(
            sc.n_g,
            &StorageParams { eta_sb: 0.29, bins: 2.0, od: 3.2, od_eit: 0.91 },
        )
        .unwrap();
        assert!((c.n_b - exact).abs() < 1e-7, "{} vs {exact}", c.n_b);
    }

    #[test]
    fn limits() {
        let mut sc = rapid();
        sc.gate.eta_sb = 0.0;
        let c = compose(&sc).unwrap();
        assert_eq!(c.p_stored, 0.0);
        assert!((c.epsilon - 1.0).abs() < 1e-15);
        assert!((c.p_herald - sc.herald.p_h0).abs() < 1e-15);
        let mut sc = rapid();
        sc.n_g = 0.0;
        assert!((compose(&sc).unwrap().p_herald - 1.4e-4).abs() < 1e-15);
    }

    #[test]
    fn rapid_simulation_matches_composition() {
        let sc = rapid();
        let c = compose(&sc).unwrap();
        let s = run_cycles(200_000, &sc, 21, 0).unwrap();
        let e = s.epsilon().unwrap();
        assert!(e.within(c.epsilon, 3.0), "{e:?} vs {}", c.epsilon);
        let h = s.herald_rate();
        assert!(h.within(c.p_herald, 3.0), "{h:?} vs {}", c.p_herald);
        let p = s.signal.stored_cycles as f64 / s.signal.cycles as f64;
        let se = (c.p_stored * (1.0 - c.p_stored) / s.signal.cycles as f64).sqrt();
        assert!((p - c.p_stored).abs() < 3.0 * se);
    }
}
