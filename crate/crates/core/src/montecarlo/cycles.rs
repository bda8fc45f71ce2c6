use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transit::{poisson_count, simulate_bin_transit_to};
use super::{with_workers, StreamKey};
use crate::error::{Error, Result};
use crate::presets::Preset;
use crate::propagation::MediumParams;
use crate::storage_switch::{HeraldParams, StorageMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateTransit {
    /// Each occupied bin keeps exactly one photon from the entrance on.
    Rapid,
    /// Bin photon numbers follow the continuous-z death process.
    ZResolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateStage {
    pub bins: f64,
    pub od: f64,
    pub od_eit: f64,
    pub eta_sb: f64,
    pub transit: GateTransit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchStage {
    pub od_b0: f64,
    pub n1: f64,
    /// Mean background photons emitted into the target window when storage succeeded.
    pub n0: f64,
    pub t0: f64,
    pub bins: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_g: f64,
    pub n_t: f64,
    pub gate: GateStage,
    pub herald: HeraldParams,
    pub switch: SwitchStage,
    /// Detection efficiency of transmitted target photons.
    pub eta_det: f64,
    /// Even cycles run without gate photons and serve as the reference.
    pub alternate_reference: bool,
    pub cycles_per_sample: u64,
}

impl Scenario {
    pub fn from_preset(p: &Preset) -> Self {
        let m = &p.models;
        Scenario {
            n_g: m.n_g,
            n_t: m.n_t,
            gate: GateStage {
                bins: m.storage.bins,
                od: m.storage.od,
                od_eit: m.storage.od_eit,
                eta_sb: m.storage.eta_sb,
                transit: match m.storage_mode {
                    StorageMode::Full => GateTransit::ZResolved,
                    StorageMode::Rapid => GateTransit::Rapid,
                },
            },
            herald: m.herald,
            switch: SwitchStage {
                od_b0: m.switch.od_b0,
                n1: m.switch.n1,
                n0: m.switch.n0,
                t0: m.switch.t0,
                bins: m.switch.bins,
            },
            eta_det: p.experiment.detection_efficiency,
            alternate_reference: true,
            cycles_per_sample: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut need = |ok: bool, what: &str| {
            if !ok {
                problems.push(what.to_string());
            }
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        need(self.n_g >= 0.0 && self.n_g.is_finite(), "n_g must be finite and >= 0");
        need(self.n_t >= 0.0 && self.n_t.is_finite(), "n_t must be finite and >= 0");
        need(self.gate.bins > 0.0 && self.gate.bins.is_finite(), "gate bins must be > 0");
        need(self.gate.od >= 0.0 && self.gate.od_eit >= 0.0, "gate optical depths must be >= 0");
        need(unit(self.gate.eta_sb), "eta_sb must lie in [0, 1]");
        need(unit(self.herald.eta_wr) && unit(self.herald.eta_det), "herald efficiencies must lie in [0, 1]");
        need(unit(self.herald.p_h0), "p_h0 must lie in [0, 1]");
        need(unit(self.eta_det), "eta_det must lie in [0, 1]");
        need(self.switch.od_b0 >= 0.0, "od_b0 must be >= 0");
        need(self.switch.n1 > 0.0, "n1 must be > 0");
        need(self.switch.n0 >= 0.0 && self.switch.n0.is_finite(), "n0 must be finite and >= 0");
        need(unit(self.switch.t0), "t0 must lie in [0, 1]");
        need(self.switch.bins > 0.0 && self.switch.bins.is_finite(), "target bins must be > 0");
        need(self.cycles_per_sample >= 2, "cycles_per_sample must be >= 2");
        need(
            !self.alternate_reference || self.cycles_per_sample.is_multiple_of(2),
            "cycles_per_sample must be even with alternating reference cycles",
        );
        need(
            self.gate.eta_sb == 0.0 || self.retrieval_herald() <= 1.0,
            "eta_wr eta_det / eta_sb must not exceed 1",
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Scenario(problems.join("; ")))
        }
    }

    /// Herald probability per stored excitation, so that each excitation
    /// present at switch-off heralds with eta_wr eta_det.
    pub fn retrieval_herald(&self) -> f64 {
        if self.gate.eta_sb == 0.0 {
            0.0
        } else {
            self.herald.eta_wr * self.herald.eta_det / self.gate.eta_sb
        }
    }

    pub(crate) fn gate_bins(&self) -> (usize, f64) {
        let b = (self.gate.bins.ceil() as usize).max(1);
        (b, self.n_g / b as f64)
    }

    pub(crate) fn target_bins(&self) -> (usize, f64) {
        let b = (self.switch.bins.ceil() as usize).max(1);
        (b, self.n_t / b as f64)
    }

    /// Blockaded OD at this N_t, floored at 0.
    pub fn blockaded_od(&self) -> f64 {
        (self.switch.od_b0 * (1.0 - self.n_t / self.switch.n1)).max(0.0)
    }

    pub(crate) fn gate_medium(&self) -> Result<MediumParams> {
        MediumParams::normalized(self.gate.od, self.gate.od_eit)
    }

    fn is_reference(&self, cycle: u64) -> bool {
        self.alternate_reference && cycle.is_multiple_of(2)
    }
}

/// One gate/target cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// Cycle index, also the RNG stream id.
    pub cycle: u64,
    pub reference: bool,
    pub gate_in: u32,
    pub stored: u32,
    pub target_in: u32,
    /// Target photons that crossed the medium.
    pub target_transmitted: u32,
    /// Photons emitted into the target window by the stored excitation.
    pub background_emitted: u32,
    pub target_detected: u32,
    pub background_detected: u32,
    pub herald_detected: bool,
    pub background_herald: bool,
}

impl CycleRecord {
    pub fn clicks(&self) -> u32 {
        self.target_detected + self.background_detected
    }
}

struct Prepared {
    gate_bins: usize,
    gate_mu: f64,
    target_bins: usize,
    target_mu: f64,
    medium: Option<MediumParams>,
    blockade_survival: f64,
    retrieval_herald: f64,
}

impl Prepared {
    fn new(sc: &Scenario) -> Result<Self> {
        sc.validate()?;
        let (gate_bins, gate_mu) = sc.gate_bins();
        let (target_bins, target_mu) = sc.target_bins();
        if sc.n_t >= sc.switch.n1 {
            log::warn!("N_t = {} >= N_1 = {}; blockaded OD floored at 0", sc.n_t, sc.switch.n1);
        }
        Ok(Prepared {
            gate_bins,
            gate_mu,
            target_bins,
            target_mu,
            medium: match sc.gate.transit {
                GateTransit::ZResolved => Some(sc.gate_medium()?),
                GateTransit::Rapid => None,
            },
            blockade_survival: (-sc.blockaded_od()).exp(),
            retrieval_herald: sc.retrieval_herald(),
        })
    }
}

fn binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p).expect("valid binomial").sample(rng) as u32
}

fn simulate_cycle(cycle: u64, sc: &Scenario, prep: &Prepared, key: &StreamKey) -> CycleRecord {
    let mut rng = key.stream(cycle);
    let reference = sc.is_reference(cycle);
    let mut rec = CycleRecord {
        cycle,
        reference,
        gate_in: 0,
        stored: 0,
        target_in: 0,
        target_transmitted: 0,
        background_emitted: 0,
        target_detected: 0,
        background_detected: 0,
        herald_detected: false,
        background_herald: false,
    };

    let mut storage_herald = false;
    if !reference {
        let b = prep.gate_bins as f64;
        for k in 0..prep.gate_bins {
            let n = poisson_count(prep.gate_mu, &mut rng);
            rec.gate_in += n;
            if n == 0 {
                continue;
            }
            // bin position inside the medium when the control light turns off
            let z = (k as f64 + rng.random::<f64>()) / b;
            let left = match &prep.medium {
                None => u32::from(rng.random::<f64>() < (-sc.gate.od_eit * z).exp()),
                Some(m) => simulate_bin_transit_to(n, m, z, &mut rng),
            };
            for _ in 0..left {
                if rng.random::<f64>() < sc.gate.eta_sb {
                    rec.stored += 1;
                    if rng.random::<f64>() < prep.retrieval_herald {
                        storage_herald = true;
                    }
                }
            }
        }
    }
    rec.background_herald = rng.random::<f64>() < sc.herald.p_h0;
    rec.herald_detected = storage_herald || rec.background_herald;

    for _ in 0..prep.target_bins {
        let n = poisson_count(prep.target_mu, &mut rng);
        rec.target_in += n;
        if n == 0 {
            continue;
        }
        rec.target_transmitted += if rec.stored > 0 {
            binomial(n, prep.blockade_survival, &mut rng)
        } else {
            u32::from(rng.random::<f64>() < sc.switch.t0)
        };
    }
    if rec.stored > 0 {
        rec.background_emitted = poisson_count(sc.switch.n0, &mut rng);
    }
    rec.target_detected = binomial(rec.target_transmitted, sc.eta_det, &mut rng);
    rec.background_detected = binomial(rec.background_emitted, sc.eta_det, &mut rng);
    rec
}

/// Records of `n_cycles` cycles in index order.
pub fn simulate_cycles(n_cycles: u64, sc: &Scenario, seed: u64) -> Result<Vec<CycleRecord>> {
    if n_cycles == 0 {
        return Err(Error::Scenario("n_cycles must be >= 1".into()));
    }
    let prep = Prepared::new(sc)?;
    let key = StreamKey::new(seed);
    Ok((0..n_cycles)
        .into_par_iter()
        .map(|i| simulate_cycle(i, sc, &prep, &key))
        .collect())
}

/// Integer sums over one group of cycles (signal or reference).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetStats {
    pub cycles: u64,
    pub gate_in: u64,
    pub stored: u64,
    pub stored_cycles: u64,
    pub target_in: u64,
    pub transmitted: u64,
    pub background: u64,
    pub clicks: u64,
    pub clicks_sq: u64,
    pub heralds: u64,
    pub background_heralds: u64,
    pub post_clicks: u64,
    pub post_clicks_sq: u64,
}

impl TargetStats {
    fn add(&mut self, r: &CycleRecord) {
        let c = r.clicks() as u64;
        self.cycles += 1;
        self.gate_in += r.gate_in as u64;
        self.stored += r.stored as u64;
        self.stored_cycles += u64::from(r.stored > 0);
        self.target_in += r.target_in as u64;
        self.transmitted += r.target_transmitted as u64;
        self.background += r.background_emitted as u64;
        self.clicks += c;
        self.clicks_sq += c * c;
        if r.herald_detected {
            self.heralds += 1;
            self.post_clicks += c;
            self.post_clicks_sq += c * c;
        }
        self.background_heralds += u64::from(r.background_herald);
    }

    fn merge(mut self, o: &TargetStats) -> Self {
        self.cycles += o.cycles;
        self.gate_in += o.gate_in;
        self.stored += o.stored;
        self.stored_cycles += o.stored_cycles;
        self.target_in += o.target_in;
        self.transmitted += o.transmitted;
        self.background += o.background;
        self.clicks += o.clicks;
        self.clicks_sq += o.clicks_sq;
        self.heralds += o.heralds;
        self.background_heralds += o.background_heralds;
        self.post_clicks += o.post_clicks;
        self.post_clicks_sq += o.post_clicks_sq;
        self
    }

    /// Mean clicks per cycle and its standard error.
    pub fn click_mean(&self) -> Estimate {
        mean_and_error(self.clicks, self.clicks_sq, self.cycles)
    }

    pub fn post_click_mean(&self) -> Estimate {
        mean_and_error(self.post_clicks, self.post_clicks_sq, self.heralds)
    }

    pub fn herald_rate(&self) -> Estimate {
        let n = self.cycles as f64;
        let p = self.heralds as f64 / n;
        Estimate::new(p, (p * (1.0 - p) / n).sqrt())
    }
}

fn mean_and_error(sum: u64, sum_sq: u64, n: u64) -> Estimate {
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mean = sum as f64 / nf;
    let var = if n > 1 {
        ((sum_sq as f64 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0)
    } else {
        f64::NAN
    };
    Estimate::new(mean, (var / nf).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Estimate { value, std_error }
    }

    /// |value - reference| <= k standard errors.
    pub fn within(&self, reference: f64, k: f64) -> bool {
        (self.value - reference).abs() <= k * self.std_error
    }

    /// Distance to `reference` in standard errors.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference) / self.std_error
    }
}

/// Ratio of two independent estimates with first-order error propagation.
fn ratio(num: Estimate, den: Estimate) -> Estimate {
    let r = num.value / den.value;
    let rel = ((num.std_error / num.value).powi(2) + (den.std_error / den.value).powi(2)).sqrt();
    Estimate::new(r, (r * rel).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub scenario: Scenario,
    pub seed: u64,
    pub cycles: u64,
    pub signal: TargetStats,
    pub reference: TargetStats,
    /// Clicks per atomic sample: (signal cycles, reference cycles).
    pub samples: Vec<(u64, u64)>,
}

impl CycleSummary {
    /// Pooled ratio of mean clicks with and without gate photons.
    pub fn epsilon(&self) -> Option<Estimate> {
        (self.reference.cycles > 0).then(|| ratio(self.signal.click_mean(), self.reference.click_mean()))
    }

    /// Mean and standard error of the per-sample ratios of summed clicks.
    /// Samples without reference clicks are skipped.
    pub fn epsilon_per_sample(&self) -> Option<Estimate> {
        let ratios: Vec<f64> = self
            .samples
            .iter()
            .filter(|(_, r)| *r > 0)
            .map(|&(s, r)| s as f64 / r as f64)
            .collect();
        if ratios.len() < 2 {
            return None;
        }
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Some(Estimate::new(mean, (var / n).sqrt()))
    }

    /// Postselected extinction with its empirical standard error.
    pub fn epsilon_post(&self) -> Option<Estimate> {
        (self.reference.cycles > 0 && self.signal.heralds > 1)
            .then(|| ratio(self.signal.post_click_mean(), self.reference.click_mean()))
    }

    /// Shot-noise error of the postselected extinction: Poisson errors on
    /// both click totals (at least one count each).
    pub fn epsilon_post_shot_noise(&self) -> Option<f64> {
        let e = self.epsilon_post()?;
        let a = (self.signal.post_clicks.max(1)) as f64;
        let b = (self.reference.clicks.max(1)) as f64;
        Some(e.value.abs().max(1.0 / a) * (1.0 / a + 1.0 / b).sqrt())
    }

    pub fn herald_rate(&self) -> Estimate {
        self.signal.herald_rate()
    }

    pub fn herald_rate_reference(&self) -> Option<Estimate> {
        (self.reference.cycles > 0).then(|| self.reference.herald_rate())
    }

    pub fn mean_stored(&self) -> f64 {
        self.signal.stored as f64 / self.signal.cycles as f64
    }

    /// Detected clicks against eta_det times the emitted photons, both per cycle.
    pub fn thinning_check(&self) -> (Estimate, f64) {
        let all = self.signal.merge(&self.reference);
        let expected = self.scenario.eta_det * (all.transmitted + all.background) as f64 / all.cycles as f64;
        (all.click_mean(), expected)
    }
}

/// Aggregated run of `n_cycles` cycles on `workers` threads (0 = default).
/// The result is identical for every worker count.
pub fn run_cycles(n_cycles: u64, sc: &Scenario, seed: u64, workers: usize) -> Result<CycleSummary> {
    if n_cycles == 0 {
        return Err(Error::Scenario("n_cycles must be >= 1".into()));
    }
    let prep = Prepared::new(sc)?;
    let key = StreamKey::new(seed);
    let per = sc.cycles_per_sample;
    let n_samples = n_cycles.div_ceil(per);
    let parts: Vec<(TargetStats, TargetStats, (u64, u64))> = with_workers(workers, || {
        (0..n_samples)
            .into_par_iter()
            .map(|s| {
                let mut sig = TargetStats::default();
                let mut refs = TargetStats::default();
                for i in (s * per)..((s + 1) * per).min(n_cycles) {
                    let r = simulate_cycle(i, sc, &prep, &key);
                    if r.reference {
                        refs.add(&r);
                    } else {
                        sig.add(&r);
                    }
                }
                let clicks = (sig.clicks, refs.clicks);
                (sig, refs, clicks)
            })
            .collect()
    });
    let mut signal = TargetStats::default();
    let mut reference = TargetStats::default();
    let mut samples = Vec::with_capacity(parts.len());
    for (s, r, c) in &parts {
        signal = signal.merge(s);
        reference = reference.merge(r);
        samples.push(*c);
    }
    Ok(CycleSummary {
        scenario: *sc,
        seed,
        cycles: n_cycles,
        signal,
        reference,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> Scenario {
        Scenario::from_preset(&Preset::baseline())
    }

    #[test]
    fn record_invariants() {
        let sc = scenario();
        for r in simulate_cycles(20_000, &sc, 3).unwrap() {
            assert!(r.target_detected <= r.target_transmitted);
            assert!(r.target_transmitted <= r.target_in);
            assert!(r.stored <= r.gate_in);
            assert_eq!(r.reference, r.cycle.is_multiple_of(2));
            if r.reference {
                assert_eq!(r.gate_in, 0);
            }
            if r.stored == 0 {
                assert_eq!(r.background_emitted, 0);
            }
        }
    }

    #[test]
    fn records_reproducible() {
        let sc = scenario();
        let a = simulate_cycles(5000, &sc, 9).unwrap();
        let b = simulate_cycles(5000, &sc, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_cycles(5000, &sc, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn summary_independent_of_workers() {
        let sc = scenario();
        let a = run_cycles(30_000, &sc, 1, 1).unwrap();
        let b = run_cycles(30_000, &sc, 1, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_matches_records() {
        let sc = scenario();
        let recs = simulate_cycles(10_000, &sc, 4).unwrap();
        let sum = run_cycles(10_000, &sc, 4, 2).unwrap();
        let clicks: u64 = recs.iter().filter(|r| !r.reference).map(|r| r.clicks() as u64).sum();
        let stored: u64 = recs.iter().map(|r| r.stored as u64).sum();
        assert_eq!(clicks, sum.signal.clicks);
        assert_eq!(stored, sum.signal.stored + sum.reference.stored);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut sc = scenario();
        sc.gate.eta_sb = 1.5;
        assert!(matches!(run_cycles(10, &sc, 0, 1), Err(Error::Scenario(_))));
        let mut sc = scenario();
        sc.cycles_per_sample = 3;
        assert!(run_cycles(10, &sc, 0, 1).is_err());
        assert!(run_cycles(0, &scenario(), 0, 1).is_err());
    }

    #[test]
    fn no_storage_means_no_extinction() {
        let mut sc = scenario();
        sc.gate.eta_sb = 0.0;
        let s = run_cycles(100_000, &sc, 2, 0).unwrap();
        let e = s.epsilon().unwrap();
        assert!(e.within(1.0, 3.0), "{e:?}");
        assert_eq!(s.signal.stored, 0);
    }

    #[test]
    fn thinning_commutes() {
        let s = run_cycles(100_000, &scenario(), 5, 0).unwrap();
        let (detected, expected) = s.thinning_check();
        assert!(detected.within(expected, 3.0), "{detected:?} vs {expected}");
    }

    #[test]
    fn background_herald_rate_without_gate() {
        let mut sc = scenario();
        sc.n_g = 0.0;
        let s = run_cycles(400_000, &sc, 8, 0).unwrap();
        let h = s.herald_rate();
        assert!(h.within(1.4e-4, 3.0), "{h:?}");
    }
}
