//! The acceptance suite: seven numbered criteria, each a list of checks
//! with the measured value, its reference and the tolerance applied.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constants::CODATA_2018;
use crate::error::Result;
use crate::fitting::{
    self, depletion_scale, fit, fit_exponential, fit_linear, linspace, synthesize, ExponentialForm, FitProblem,
    FitResult, Noise,
};
use crate::montecarlo::{
    compose, estimate_g2, poissonian_clicks, run_cycles, single_excitation_clicks, transit_mean, Scenario,
};
use crate::presets::Preset;
use crate::propagation::{bin_mean_analytic, bin_mean_series, evolve_bin, transmitted_mean, BinDistribution, MediumParams};
use crate::report::DerivedReport;
use crate::storage_switch::{
    extinction_total_vs_nt, extinction_vs_ng_raw, herald_probability, initial_slope_beta, od_b0_estimate,
    postselected_extinction_vs_ng,
    stored_mean_before_switchoff, StorageMode, StorageParams, SwitchParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    /// Human-readable rule, e.g. "rel <= 0.05".
    pub rule: String,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, reference: f64, rule: impl Into<String>, passed: bool) -> Self {
        Check { name: name.into(), value, reference, rule: rule.into(), passed }
    }

    fn relative(name: impl Into<String>, value: f64, reference: f64, tol: f64) -> Self {
        let rel = (value / reference - 1.0).abs();
        Check::new(name, value, reference, format!("rel {rel:.2e} <= {tol:e}"), rel <= tol + 1e-12)
    }

    fn absolute(name: impl Into<String>, value: f64, reference: f64, tol: f64) -> Self {
        let d = (value - reference).abs();
        Check::new(name, value, reference, format!("abs {d:.2e} <= {tol:e}"), d <= tol + 1e-12)
    }

    fn sigma(name: impl Into<String>, value: f64, se: f64, reference: f64, k: f64) -> Self {
        let z = (value - reference) / se;
        Check::new(name, value, reference, format!("|z| {:.2} <= {k}", z.abs()), z.abs() <= k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub checks: Vec<Check>,
    /// Report-only criteria never fail.
    pub report_only: bool,
    pub passed: bool,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn status_line(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        let status = match (self.report_only, self.passed) {
            (true, _) => "REPORT",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        format!(
            "criterion {} {:<6} {} ({}/{} checks, {:.1} s)",
            self.id,
            status,
            self.title,
            ok,
            self.checks.len(),
            self.seconds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceOptions {
    pub seed: u64,
    /// Worker threads for Monte Carlo (0 = default pool).
    pub workers: usize,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions { seed: 20140725, workers: 0 }
    }
}

pub const CRITERIA: [(u8, &str); 7] = [
    (1, "derived parameters"),
    (2, "closed form vs master equation"),
    (3, "Monte Carlo vs closed forms"),
    (4, "best-fit round trips"),
    (5, "derived identities"),
    (6, "property suites"),
    (7, "measured extinctions (report only)"),
];

pub fn run_criterion(id: u8, preset: &Preset, opts: &AcceptanceOptions) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let checks = match id {
        1 => derived_parameters(preset)?,
        2 => closed_form_vs_ode()?,
        3 => monte_carlo(preset, opts)?,
        4 => round_trips(preset, opts.seed)?,
        5 => identities(preset)?,
        6 => properties(opts)?,
        7 => measured(preset, opts)?,
        _ => return Err(crate::Error::Data(format!("no acceptance criterion {id} (1-7)"))),
    };
    let report_only = id == 7;
    let passed = report_only || checks.iter().all(|c| c.passed);
    Ok(CriterionOutcome {
        id,
        title: CRITERIA[id as usize - 1].1.to_string(),
        checks,
        report_only,
        passed,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(preset: &Preset, opts: &AcceptanceOptions) -> Result<Vec<CriterionOutcome>> {
    CRITERIA.iter().map(|(id, _)| run_criterion(*id, preset, opts)).collect()
}

/// Status lines followed by every failing check.
pub fn summary_table(outcomes: &[CriterionOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        let _ = writeln!(out, "{}", o.status_line());
    }
    for o in outcomes.iter().filter(|o| !o.report_only) {
        for c in o.failures() {
            let _ = writeln!(out, "  [{}] {}: {} vs {} ({})", o.id, c.name, c.value, c.reference, c.rule);
        }
    }
    out
}

fn derived_parameters(preset: &Preset) -> Result<Vec<Check>> {
    let report = DerivedReport::compute(&preset.experiment, &CODATA_2018)?;
    Ok(report
        .rows
        .iter()
        .filter_map(|r| {
            let (reference, tol) = (r.reference?, r.tolerance?);
            Some(Check::relative(format!("{} [{}]", r.key, r.unit), r.value, reference, tol))
        })
        .collect())
}

fn closed_form_vs_ode() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut worst_neglected: f64 = 0.0;
    for od in [1.0, 3.2, 10.0] {
        for od_eit in [0.3, 0.91, 1.2] {
            let m = MediumParams::normalized(od, od_eit)?;
            for mu0 in [0.1, 0.5, 1.0, 2.0, 4.0] {
                let init = BinDistribution::poisson(mu0, BinDistribution::default_nmax(mu0));
                for z in [0.25, 0.5, 1.0] {
                    let ode = evolve_bin(&init, &m, z, 1e-3)?.mean();
                    let series = bin_mean_series(mu0, &m, z);
                    worst_neglected = worst_neglected.max((bin_mean_analytic(mu0, &m, z) / ode - 1.0).abs());
                    checks.push(Check::relative(
                        format!("OD={od} OD_EIT={od_eit} mu0={mu0} z/L={z}"),
                        series,
                        ode,
                        1e-4,
                    ));
                }
            }
        }
    }
    log::info!("alpha1-neglected closed form deviates up to {worst_neglected:.3} from the ODE on this grid");
    Ok(checks)
}

fn monte_carlo(preset: &Preset, opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let points = [(3.2, 0.91, 1.0, 1.0), (10.0, 1.2, 4.0, 0.5), (1.0, 0.3, 0.1, 0.25), (3.2, 0.3, 2.0, 1.0), (10.0, 0.91, 0.5, 0.25)];
    for (i, (od, od_eit, mu0, z)) in points.into_iter().enumerate() {
        let m = MediumParams::normalized(od, od_eit)?;
        let (mean, se) = transit_mean(mu0, &m, z, 1_000_000, opts.seed + i as u64, opts.workers)?;
        checks.push(Check::sigma(
            format!("transit mean OD={od} OD_EIT={od_eit} mu0={mu0} z/L={z}"),
            mean,
            se,
            bin_mean_series(mu0, &m, z),
            3.0,
        ));
    }
    let sc = Scenario::from_preset(preset);
    let c = compose(&sc)?;
    let s = run_cycles(100_000, &sc, opts.seed, opts.workers)?;
    let eps = s.epsilon().expect("alternating reference cycles");
    checks.push(Check::sigma("cycles epsilon", eps.value, eps.std_error, c.epsilon, 3.0));
    let ph = s.herald_rate();
    checks.push(Check::sigma("cycles p_h", ph.value, ph.std_error, c.p_herald, 3.0));
    Ok(checks)
}

/// Outcome of one tuple over all seeds.
struct TupleRun {
    label: &'static str,
    successes: usize,
    total: usize,
}

fn recovered(f: &FitResult, truth: &[(&str, f64)]) -> bool {
    f.converged && truth.iter().all(|(n, v)| f.recovers(n, *v, 3.0))
}

fn nonlinear(
    model: &str,
    truth: &[(&str, f64)],
    x: &[f64],
    noise: Noise,
    free: &[(&str, f64)],
    seed: u64,
) -> Result<bool> {
    let data = synthesize(model, truth, x, noise, seed)?;
    let mut p = FitProblem::new(model);
    for (name, v) in truth {
        match free.iter().find(|(f, _)| f == name) {
            Some((_, init)) => p = p.free(name, *init),
            None => p = p.fix(name, *v),
        }
    }
    let f = match fit(&p, &data) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("{model} round trip (seed {seed}) failed: {e}");
            return Ok(false);
        }
    };
    let targets: Vec<(&str, f64)> = truth.iter().filter(|(n, _)| free.iter().any(|(f, _)| f == n)).copied().collect();
    Ok(recovered(&f, &targets))
}

fn round_trips(preset: &Preset, seed0: u64) -> Result<Vec<Check>> {
    const SEEDS: u64 = 20;
    const US: f64 = 1e-6;
    let m = &preset.models;
    let n_ref = transmitted_mean(m.n_t, m.propagation_bins, m.propagation_t0);
    let ng = &linspace(0.2, 6.0, 12);
    let nt = &linspace(0.3, 8.0, 10);
    let td = &linspace(0.0, 150.0 * US, 12);
    let sw = &m.switch;

    type Trial<'a> = Box<dyn Fn(u64) -> Result<bool> + 'a>;
    let tuples: Vec<(&'static str, Trial)> = vec![
        ("T0=0.30, b=1.6", Box::new(|s| {
            let truth = [("t0", 0.30), ("b", 1.6)];
            nonlinear("transmitted_mean", &truth, &linspace(0.1, 7.0, 12), Noise::Relative(0.05), &[("t0", 0.5), ("b", 1.0)], s)
        })),
        ("b=2.0, eta_sb=0.29 (full)", Box::new(|s| {
            let truth = [("b", 2.0), ("eta_sb", 0.29), ("od", 3.2), ("od_eit", 0.91)];
            nonlinear("extinction_vs_ng_full", &truth, ng, Noise::Absolute(0.01), &[("b", 1.0), ("eta_sb", 0.5)], s)
        })),
        ("b=3.2, eta_sb=0.31 (rapid)", Box::new(|s| {
            let truth = [("b", 3.2), ("eta_sb", 0.31), ("od_eit", 0.91)];
            nonlinear("extinction_vs_ng_rapid", &truth, ng, Noise::Absolute(0.01), &[("b", 1.5), ("eta_sb", 0.5)], s)
        })),
        ("eps_ideal=0.022, N_post0=0.7", Box::new(move |s| {
            let truth = [
                ("eps_ideal", m.eps_ideal),
                ("n_post0", m.n_post0),
                ("b_herald", m.herald_bins),
                ("eta_wr", m.herald.eta_wr),
                ("eta_det", m.herald.eta_det),
                ("p_h0", m.herald.p_h0),
                ("b", m.storage.bins),
                ("eta_sb", m.storage.eta_sb),
                ("od", m.storage.od),
                ("od_eit", m.storage.od_eit),
                ("n_ref", n_ref),
            ];
            nonlinear("postselected_extinction_vs_ng", &truth, &linspace(0.2, 4.0, 12), Noise::Absolute(0.004),
                &[("eps_ideal", 0.05), ("n_post0", 1.0)], s)
        })),
        ("OD_b0=5.4", Box::new(move |s| {
            let truth = [("od_b0", sw.od_b0), ("n1", sw.n1), ("t0", sw.t0), ("b", sw.bins)];
            nonlinear("extinction_post_vs_nt", &truth, nt, Noise::Relative(0.10), &[("od_b0", 3.0)], s)
        })),
        ("p_s=0.23", Box::new(move |s| {
            let truth = [("p_s", sw.p_s), ("ps_n0", m.ps_n0), ("od_b0", sw.od_b0), ("n1", sw.n1), ("t0", sw.t0), ("b", sw.bins)];
            nonlinear("extinction_total_vs_nt", &truth, nt, Noise::Absolute(0.005), &[("p_s", 0.5)], s)
        })),
        ("b=2.0, eta_wr=0.016 (herald)", Box::new(move |s| {
            let truth = [("b", m.herald_bins), ("eta_wr", m.herald.eta_wr), ("eta_det", m.herald.eta_det),
                ("od_eit", m.storage.od_eit), ("p_h0", m.herald.p_h0)];
            nonlinear("herald_probability", &truth, &linspace(0.1, 6.0, 12), Noise::Relative(0.05),
                &[("b", 1.0), ("eta_wr", 0.03)], s)
        })),
        ("N1=23", Box::new(move |s| {
            let data = synthesize("linear", &[("intercept", sw.od_b0), ("slope", -sw.od_b0 / sw.n1)], nt, Noise::Absolute(0.1), s)?;
            let (n1, se) = depletion_scale(&fit_linear(&data)?);
            Ok((n1 - sw.n1).abs() <= 3.0 * se)
        })),
        ("tau_pop=24 us", Box::new(move |s| {
            let data = synthesize("blockade_decay", &[("eps0", m.eps0), ("tau_pop", m.tau_pop_high)], td, Noise::Absolute(0.01), s)?;
            Ok(recovered(&fit_exponential(&data, ExponentialForm::Saturating)?, &[("tau_pop", m.tau_pop_high)]))
        })),
        ("tau_pop=60 us", Box::new(move |s| {
            let data = synthesize("blockade_decay", &[("eps0", m.eps0), ("tau_pop", m.tau_pop_low)], td, Noise::Absolute(0.01), s)?;
            Ok(recovered(&fit_exponential(&data, ExponentialForm::Saturating)?, &[("tau_pop", m.tau_pop_low)]))
        })),
        ("gamma0=0.8/us intercept", Box::new(move |s| {
            let d = &m.decay;
            let data = synthesize("dephasing_rate", &[("gamma0", d.gamma0), ("k_rho", d.k_rho)],
                &linspace(0.5e18, 3e18, 8), Noise::Absolute(0.03e6), s)?;
            let f = fit_linear(&data)?;
            Ok(f.recovers("intercept", d.gamma0, 3.0))
        })),
    ];

    let mut runs = Vec::new();
    for (label, trial) in &tuples {
        let mut successes = 0;
        for k in 0..SEEDS {
            if trial(seed0.wrapping_add(1000 * k))? {
                successes += 1;
            }
        }
        runs.push(TupleRun { label, successes, total: SEEDS as usize });
    }
    Ok(runs
        .into_iter()
        .map(|r| {
            Check::new(
                r.label,
                r.successes as f64,
                r.total as f64,
                format!("{}/{} within 3 se, need >= 18", r.successes, r.total),
                r.successes >= 18,
            )
        })
        .collect())
}

fn identities(preset: &Preset) -> Result<Vec<Check>> {
    let m = &preset.models;
    let full = StorageParams { eta_sb: 0.29, bins: 2.0, od: 3.2, od_eit: 0.91 };
    let rapid = StorageParams { eta_sb: 0.31, bins: 3.2, od: 3.2, od_eit: 0.91 };
    let n_b = stored_mean_before_switchoff(1.0, &rapid, StorageMode::Rapid)?;
    let eta = m.switch.p_s / 0.56;
    Ok(vec![
        Check::absolute("beta(eta_sb=0.29, OD_EIT=0.91)", initial_slope_beta(&full), 0.19, 0.005),
        Check::absolute("N_b(b=3.2, N_g=1, OD_EIT=0.91)", n_b, 0.56, 0.01),
        Check::new(
            "eta_sb = p_s / N_b",
            eta,
            0.41,
            "equal at 2 significant figures",
            crate::units::round_sig(eta, 2) == 0.41,
        ),
        Check::absolute("OD_b0 = 2 r_b / l_a (14 um, 5 um)", od_b0_estimate(14e-6, 5e-6), 5.6, 1e-12),
    ])
}

fn properties(opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let mut worst_drift: f64 = 0.0;
    let mut monotone_z = true;
    for od in [1.0, 3.2, 10.0] {
        for od_eit in [0.3, 0.91, 1.2] {
            let m = MediumParams::normalized(od, od_eit)?;
            for mu0 in [0.1, 1.0, 4.0] {
                let init = BinDistribution::poisson(mu0, BinDistribution::default_nmax(mu0));
                let mut last = f64::INFINITY;
                for z in linspace(0.0, 1.0, 11) {
                    let d = evolve_bin(&init, &m, z, 1e-3)?;
                    worst_drift = worst_drift.max((d.total() - init.total()).abs());
                    monotone_z &= d.mean() <= last + 1e-12;
                    last = d.mean();
                }
            }
        }
    }
    checks.push(Check::new("probability conservation", worst_drift, 0.0, "drift <= 1e-9", worst_drift <= 1e-9));
    checks.push(Check::new("bin mean non-increasing in z", f64::from(u8::from(monotone_z)), 1.0, "monotone", monotone_z));

    let mut monotone_ng = true;
    for mode in [StorageMode::Full, StorageMode::Rapid] {
        for (b, eta) in [(2.0, 0.29), (3.2, 0.31), (0.7, 0.6)] {
            let p = StorageParams { eta_sb: eta, bins: b, od: 3.2, od_eit: 0.91 };
            let mut last = f64::INFINITY;
            for n in linspace(0.0, 10.0, 41) {
                let e = extinction_vs_ng_raw(n, &p, mode)?;
                monotone_ng &= e <= last + 1e-12;
                last = e;
            }
        }
    }
    checks.push(Check::new("epsilon non-increasing in N_g", f64::from(u8::from(monotone_ng)), 1.0, "monotone", monotone_ng));

    let p = StorageParams { eta_sb: 0.29, bins: 2.0, od: 3.2, od_eit: 0.91 };
    let m = MediumParams::normalized(3.2, 0.91)?;
    let s = SwitchParams { od_b0: 5.4, n1: 23.0, p_s: 0.0, n0: 0.06, t0: 0.3, bins: 1.6 };
    let h = crate::storage_switch::HeraldParams { eta_wr: 0.016, eta_det: 0.27, p_h0: 1.4e-4 };
    let zero_eta = StorageParams { eta_sb: 0.0, ..p };
    let limits = [
        ("epsilon(N_g=0) = 1", extinction_vs_ng_raw(0.0, &p, StorageMode::Full)?, 1.0),
        ("epsilon at eta_sb=0 is 1", extinction_vs_ng_raw(2.0, &zero_eta, StorageMode::Rapid)?, 1.0),
        ("p_h(0) = p_h0", herald_probability(0.0, &h, &p, StorageMode::Rapid)?, 1.4e-4),
        ("bin mean at z=0 is mu0", bin_mean_series(1.3, &m, 0.0), 1.3),
        ("epsilon_total at p_s=0 is 1", extinction_total_vs_nt(1.7, &s)?, 1.0),
        ("N_out saturates at b T0", transmitted_mean(1e3, 1.6, 0.3), 1.6 * 0.3),
    ];
    for (name, v, r) in limits {
        checks.push(Check::relative(name, v, r, 1e-12));
    }

    let mut worst_jac: f64 = 0.0;
    for (i, model) in fitting::MODELS.iter().enumerate() {
        let c = fitting::models::jacobian_check(model, 20, 1e-5, opts.seed + i as u64)?;
        worst_jac = worst_jac.max(c.worst_ratio);
    }
    checks.push(Check::new(
        "Jacobian vs finite differences (all models)",
        worst_jac,
        1.0,
        "worst error / (1e-5 rel) <= 1",
        worst_jac <= 1.0,
    ));

    let n = 200_000;
    let recs = poissonian_clicks(n, 1.0, 2e-6, 0.5, opts.seed);
    let rows = estimate_g2(&recs, n, 0.2e-6, 1.0e-6, 20)?;
    let worst_z = rows
        .iter()
        .filter(|r| !r.flagged)
        .map(|r| ((r.g2 - 1.0) / r.std_error).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new("Poissonian g2 = 1 (worst |z| over bins)", worst_z, 0.0, "|z| <= 3", worst_z <= 3.0));

    let n = 400_000;
    let recs = single_excitation_clicks(n, 2.0, 0.2 / 0.23, 0.3, 0.01, 1e-6, 0.5, opts.seed + 1);
    let g0 = estimate_g2(&recs, n, 2e-6, 0.0, 10)?[0];
    checks.push(Check::new("single-excitation g2(0)", g0.g2, 0.5, "< 0.5", g0.g2 < 0.5));
    Ok(checks)
}

fn measured(preset: &Preset, opts: &AcceptanceOptions) -> Result<Vec<Check>> {
    let m = &preset.models;
    let r = &m.reference;
    let sc = Scenario::from_preset(preset);
    let c = compose(&sc)?;
    let s = run_cycles(100_000, &sc, opts.seed, opts.workers)?;
    let total = extinction_total_vs_nt(m.n_t, &m.switch)?;
    let post = postselected_extinction_vs_ng(m.n_g, m.eps_ideal, m.n_post0, &m.herald_model(), &m.total_transmission())?;
    let rule = |err: f64| format!("report only (measured +- {err})");
    Ok(vec![
        Check::new("epsilon, fitted total-ensemble model", total, r.epsilon_total, rule(r.epsilon_total_err), true),
        Check::new("epsilon, composed cycle model", c.epsilon, r.epsilon_total, rule(r.epsilon_total_err), true),
        Check::new("epsilon, Monte Carlo", s.epsilon().map_or(f64::NAN, |e| e.value), r.epsilon_total,
            rule(r.epsilon_total_err), true),
        Check::new("epsilon_post, fitted postselection model", post, r.epsilon_post, rule(r.epsilon_post_err), true),
        Check::new("epsilon_post, composed cycle model", c.epsilon_post, r.epsilon_post, rule(r.epsilon_post_err), true),
        Check::new("epsilon_post, Monte Carlo", s.epsilon_post().map_or(f64::NAN, |e| e.value), r.epsilon_post,
            rule(r.epsilon_post_err), true),
    ])
}
