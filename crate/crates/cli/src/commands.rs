use std::f64::consts::PI;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use rydswitch::acceptance::{run_criterion, AcceptanceOptions, CRITERIA};
use rydswitch::constants::CODATA_2018;
use rydswitch::eit::{eit_transmission, EitSpectrumParams};
use rydswitch::fitting::{self, fit_with, linspace, synthesize, DataSeries, FitOptions, FitProblem, Noise};
use rydswitch::montecarlo::{
    blockade_transit_clicks, compose, estimate_g2, poissonian_clicks, run_cycles, simulate_cycles,
    single_excitation_clicks, Estimate, GateTransit, Scenario, TransitKernel,
};
use rydswitch::presets::Preset;
use rydswitch::report::{format_sig, DerivedReport};

use crate::curves::{self, apply_overrides, parse_sweep, preset_values};
use crate::output::{num, write_file, Table};
use crate::{
    AcceptanceArgs, CurveArgs, FitArgs, G2Source, MonteCarloArgs, Run, SpectrumArgs, SynthArgs, Transit,
    EXIT_ACCEPTANCE, EXIT_NOT_CONVERGED,
};

const MHZ: f64 = 2.0 * PI * 1e6;
const US: f64 = 1e-6;

pub fn derive(preset: &Preset, header: &str) -> Result<Run> {
    let report = DerivedReport::compute(&preset.experiment, &CODATA_2018)?;
    let mut text = format!("# {header}\n");
    text.push_str("# value: unrounded chain; value_2sf_chain: every intermediate rounded to 2 significant figures\n");
    text.push_str(&report.to_table());
    let failing: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.passes() == Some(false))
        .map(|r| format!("{} = {} differs from {} by more than {}", r.key, r.value, r.reference.unwrap_or(f64::NAN), r.tolerance.unwrap_or(0.0)))
        .collect();
    for f in &failing {
        log::info!("{f}");
    }
    Ok(Run::new(text, serde_json::to_value(&report)?))
}

pub fn spectrum(a: &SpectrumArgs, preset: &Preset, header: &str) -> Result<Run> {
    let base = preset.models.eit;
    let p = EitSpectrumParams {
        od: a.od.unwrap_or(base.od),
        gamma: a.gamma_mhz.map_or(base.gamma, |v| v * MHZ),
        delta0: a.delta0_mhz.map_or(base.delta0, |v| v * MHZ),
        delta1: a.delta1_mhz.map_or(base.delta1, |v| v * MHZ),
        t0: a.t0.unwrap_or(base.t0),
        width: a.width_mhz.map_or(base.width, |v| v * MHZ),
    };
    p.validate()?;
    if a.points < 2 {
        bail!("a spectrum needs at least 2 points");
    }
    let mut t = Table::new(&["detuning_mhz", "transmission"]);
    t.note(header);
    t.note("model: T = exp(-OD / (1 + (2 (D - D0) / Gamma)^2)) + T0 exp(-4 ln2 (D - D1)^2 / D_T^2), detuning in 2 pi MHz");
    t.note(format!(
        "parameters: od={} gamma_mhz={} delta0_mhz={} delta1_mhz={} t0={} width_mhz={}",
        format_sig(p.od),
        format_sig(p.gamma / MHZ),
        format_sig(p.delta0 / MHZ),
        format_sig(p.delta1 / MHZ),
        format_sig(p.t0),
        format_sig(p.width / MHZ)
    ));
    for d in linspace(a.from_mhz, a.to_mhz, a.points) {
        t.push_numbers(&[d, eit_transmission(d * MHZ, &p)]);
    }
    Ok(Run::new(t.render(), serde_json::to_value(p)?))
}

/// Default sweep for a curve, chosen by its independent variable.
fn default_sweep(name: &str) -> &'static str {
    let x = fitting::lookup(name).map(|d| d.x_name).unwrap_or(name);
    match x {
        "n_g" | "extinction_vs_ng" => "0:4:41",
        "n_t" | "extinction_vs_nt" => "0.2:8:40",
        "n_in" => "0.2:10:50",
        "t_d_s" | "t_s" | "decay_vs_td" => "0:150e-6:31",
        "density_m3" | "rate_vs_density" => "0:3e18:31",
        "bin_profile" => "0:1:21",
        "detuning_rad_s" => "-125663706.14359172:125663706.14359172:201",
        "tau_s" => "-1e-6:1e-6:41",
        _ => "0:1:11",
    }
}

pub fn curve(a: &CurveArgs, preset: &Preset, header: &str) -> Result<Run> {
    let known = curves::SWEEPS.iter().any(|s| s.0 == a.name) || fitting::lookup(&a.name).is_ok();
    if !known {
        bail!(rydswitch::Error::UnknownModel { name: a.name.clone(), available: curves::available() });
    }
    let spec = a.sweep.clone().unwrap_or_else(|| default_sweep(&a.name).to_string());
    let x = parse_sweep(&spec)?;
    let mut out = curves::curve(&a.name, &x, preset, &a.params)?;
    out.table.provenance.insert(0, format!("{header}; curve: {}", a.name));
    out.table.note(format!("sweep: {spec}"));
    let mut run = Run::new(out.table.render(), json!({ "curve": a.name, "sweep": spec, "parameters": a.params }));
    run.warnings = out.warnings;
    Ok(run)
}

fn estimate_row(t: &mut Table, name: &str, e: Option<Estimate>, analytic: Option<f64>) {
    let (v, se) = e.map_or((f64::NAN, f64::NAN), |e| (e.value, e.std_error));
    t.push(vec![name.to_string(), num(v), num(se), analytic.map_or(String::new(), num)]);
}

pub fn montecarlo(a: &MonteCarloArgs, preset: &Preset, header: &str) -> Result<Run> {
    let mut sc = Scenario::from_preset(preset);
    if let Some(n) = a.n_g {
        sc.n_g = n;
    }
    if let Some(n) = a.n_t {
        sc.n_t = n;
    }
    if let Some(tr) = a.transit {
        sc.gate.transit = match tr {
            Transit::Rapid => GateTransit::Rapid,
            Transit::ZResolved => GateTransit::ZResolved,
        };
    }
    let mut warnings = Vec::new();
    if sc.n_t >= sc.switch.n1 {
        warnings.push(format!("N_t = {} >= N_1 = {}; blockaded OD floored at 0", sc.n_t, sc.switch.n1));
    }
    let comp = compose(&sc)?;
    let s = run_cycles(a.cycles, &sc, a.seed, a.workers)?;

    let mut t = Table::new(&["quantity", "value", "std_error", "analytic"]);
    t.note(header);
    t.note(format!(
        "scenario: n_g={} n_t={} gate_transit={:?} cycles={} seed={}",
        sc.n_g, sc.n_t, sc.gate.transit, a.cycles, a.seed
    ));
    t.note("analytic: exact expectation of the simulated process");
    let count = |t: &mut Table, name: &str, v: u64| t.push(vec![name.to_string(), v.to_string(), String::new(), String::new()]);
    count(&mut t, "signal_cycles", s.signal.cycles);
    count(&mut t, "reference_cycles", s.reference.cycles);
    count(&mut t, "signal_clicks", s.signal.clicks);
    count(&mut t, "reference_clicks", s.reference.clicks);
    count(&mut t, "heralds", s.signal.heralds);
    count(&mut t, "stored_excitations", s.signal.stored);
    let stored_rate = s.signal.stored_cycles as f64 / s.signal.cycles.max(1) as f64;
    estimate_row(&mut t, "mean_stored", Some(Estimate::new(s.mean_stored(), f64::NAN)), Some(comp.n_b * sc.gate.eta_sb));
    estimate_row(&mut t, "p_stored", Some(Estimate::new(stored_rate, f64::NAN)), Some(comp.p_stored));
    estimate_row(&mut t, "herald_rate", Some(s.herald_rate()), Some(comp.p_herald));
    estimate_row(&mut t, "herald_rate_reference", s.herald_rate_reference(), Some(sc.herald.p_h0));
    estimate_row(&mut t, "epsilon", s.epsilon(), Some(comp.epsilon));
    estimate_row(&mut t, "epsilon_per_sample", s.epsilon_per_sample(), Some(comp.epsilon));
    estimate_row(&mut t, "epsilon_post", s.epsilon_post(), Some(comp.epsilon_post));

    let mut run = Run::new(
        String::new(),
        json!({
            "summary": s,
            "composition": comp,
            "epsilon": s.epsilon(),
            "epsilon_post": s.epsilon_post(),
            "herald_rate": s.herald_rate(),
        }),
    );

    if let Some(path) = &a.records {
        let recs = simulate_cycles(a.cycles, &sc, a.seed)?;
        let mut r = Table::new(&[
            "cycle",
            "reference",
            "gate_in",
            "stored",
            "target_in",
            "target_transmitted",
            "background_emitted",
            "target_detected",
            "background_detected",
            "herald",
        ]);
        r.note(header);
        r.note(format!("seed: {}", a.seed));
        for c in &recs {
            r.push(vec![
                c.cycle.to_string(),
                u8::from(c.reference).to_string(),
                c.gate_in.to_string(),
                c.stored.to_string(),
                c.target_in.to_string(),
                c.target_transmitted.to_string(),
                c.background_emitted.to_string(),
                c.target_detected.to_string(),
                c.background_detected.to_string(),
                u8::from(c.herald_detected).to_string(),
            ]);
        }
        write_file(path, &r.render())?;
        run.extra_outputs.push(path.clone());
    }

    if let (Some(source), Some(path)) = (a.g2, &a.g2_out) {
        let m = &preset.models;
        let window = m.pulse_duration;
        let eta = sc.eta_det;
        let recs = match source {
            G2Source::Poissonian => poissonian_clicks(a.cycles, sc.n_t * sc.switch.t0, window, eta, a.seed),
            G2Source::Retrieval => single_excitation_clicks(
                a.cycles,
                sc.n_g,
                sc.gate.bins,
                sc.herald.eta_wr,
                0.0,
                window,
                eta,
                a.seed,
            ),
            G2Source::Transit => blockade_transit_clicks(
                a.cycles,
                sc.n_t * sc.switch.t0,
                TransitKernel { amplitude: 1.0, tau_c: m.correlation_time },
                window,
                eta,
                a.seed,
            ),
        };
        let rows = estimate_g2(&recs, a.cycles, a.g2_bin_us * US, a.g2_max_tau_us * US, 20.min(a.cycles - 1))?;
        let mut g = Table::new(&["tau_us", "g2", "std_error", "coincidences", "flagged"]);
        g.note(header);
        g.note(format!("g2 source: {source:?}; cycles={} seed={}", a.cycles, a.seed));
        g.note("normalization: coincidences between cycle i and i + s, s = 1..20");
        for r in &rows {
            g.push(vec![num(r.tau / US), num(r.g2), num(r.std_error), r.coincidences.to_string(), u8::from(r.flagged).to_string()]);
        }
        write_file(path, &g.render())?;
        run.extra_outputs.push(path.clone());
    }

    run.table = t.render();
    run.seed = Some(a.seed);
    run.warnings = warnings;
    Ok(run)
}

fn parse_bound(s: &str) -> Result<(String, f64, f64)> {
    let (name, range) = s.split_once('=').ok_or_else(|| anyhow!("bound `{s}` is not name=lo:hi"))?;
    let (lo, hi) = range.split_once(':').ok_or_else(|| anyhow!("bound `{s}` is not name=lo:hi"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| anyhow!("bound `{s}`: `{v}` is not a number"));
    Ok((name.trim().to_string(), parse(lo)?, parse(hi)?))
}

pub fn fit(a: &FitArgs, preset: &Preset, header: &str) -> Result<Run> {
    let def = fitting::lookup(&a.model)?;
    let defaults = preset_values(def, preset);
    let names = def.param_names();
    let check = |n: &str| -> Result<()> {
        if names.contains(&n) {
            Ok(())
        } else {
            bail!(rydswitch::Error::FitSetup(format!("{} has no parameter `{n}` (parameters: {})", def.name, names.join(", "))))
        }
    };
    let mut free: Vec<(String, Option<f64>)> = Vec::new();
    for f in &a.free {
        let (n, start) = match f.split_once('=') {
            Some((n, v)) => (n.trim(), Some(v.trim().parse::<f64>().map_err(|_| anyhow!("--free {f}: `{v}` is not a number"))?)),
            None => (f.trim(), None),
        };
        check(n)?;
        free.push((n.to_string(), start));
    }
    for (n, _) in &a.fix {
        check(n)?;
    }

    let mut problem = FitProblem::new(def.name);
    for p in def.params {
        if let Some((_, v)) = a.fix.iter().find(|(n, _)| n == p.name) {
            problem = problem.fix(p.name, *v);
        } else if free.is_empty() {
            problem = problem.free(p.name, defaults[p.name]);
        } else if let Some((_, start)) = free.iter().find(|(n, _)| n == p.name) {
            problem = problem.free(p.name, start.unwrap_or(defaults[p.name]));
        } else {
            problem = problem.fix(p.name, defaults[p.name]);
        }
    }
    for b in &a.bound {
        let (n, lo, hi) = parse_bound(b)?;
        check(&n)?;
        problem = problem.bound(&n, lo, hi);
    }

    let data = DataSeries::from_path(&a.data)?;
    let result = fit_with(&problem, &data, &FitOptions { max_iterations: a.max_iterations })?;

    let mut t = Table::new(&["parameter", "value", "std_error", "role"]);
    t.note(header);
    t.note(format!("model: {} ({})", def.name, def.formula));
    t.note(format!("data: {} ({} points, {})", a.data.display(), data.len(), if data.weighted() { "weighted by sigma" } else { "unit weights, errors scaled by residual variance" }));
    t.note(format!(
        "chi2={} dof={} converged={} stop={:?} iterations={} gradient={:e}",
        result.chi2(),
        result.dof,
        result.converged,
        result.diagnostics.stop,
        result.iterations,
        result.diagnostics.gradient_norm
    ));
    if !result.diagnostics.at_bound.is_empty() {
        t.note(format!("at bound: {}", result.diagnostics.at_bound.join(", ")));
    }
    for p in def.params {
        let is_free = result.free.iter().any(|n| n == p.name);
        t.push(vec![
            p.name.to_string(),
            num(result.value(p.name)),
            if is_free { num(result.std_error(p.name)) } else { String::new() },
            if is_free { "free" } else { "fixed" }.to_string(),
        ]);
    }
    let mut run = Run::new(t.render(), json!({ "problem": problem, "result": result }));
    if !result.converged {
        log::warn!("fit did not converge ({:?})", result.diagnostics.stop);
        run.exit_code = EXIT_NOT_CONVERGED;
    }
    Ok(run)
}

fn parse_noise(s: &str) -> Result<Noise> {
    let (kind, v) = s.split_once(':').ok_or_else(|| anyhow!("noise `{s}` is not abs:<sigma> or rel:<fraction>"))?;
    let v: f64 = v.trim().parse().with_context(|| format!("noise level `{v}`"))?;
    if !(v >= 0.0) {
        bail!("noise level must be >= 0");
    }
    match kind {
        "abs" => Ok(Noise::Absolute(v)),
        "rel" => Ok(Noise::Relative(v)),
        _ => bail!("noise kind `{kind}` (abs or rel)"),
    }
}

pub fn synth(a: &SynthArgs, preset: &Preset, header: &str) -> Result<Run> {
    let def = fitting::lookup(&a.model)?;
    let mut values = preset_values(def, preset);
    apply_overrides(&mut values, &a.params, def.name)?;
    let spec = a.sweep.clone().unwrap_or_else(|| default_sweep(def.name).to_string());
    let x = parse_sweep(&spec)?;
    let noise = parse_noise(&a.noise)?;
    let truth: Vec<(&str, f64)> = values.iter().map(|(k, v)| (*k, *v)).collect();
    let data = synthesize(def.name, &truth, &x, noise, a.seed)?;

    let mut t = Table::new(&[def.x_name, "y", "sigma"]);
    t.note(header);
    t.note(format!("model: {} ({})", def.name, def.formula));
    let params: Vec<String> = truth.iter().map(|(k, v)| format!("{k}={v}")).collect();
    t.note(format!("parameters: {}", params.join(" ")));
    t.note(format!("noise: {} seed: {}", a.noise, a.seed));
    let sigma = data.sigma.clone().unwrap_or_default();
    for i in 0..data.len() {
        t.push_numbers(&[data.x[i], data.y[i], sigma[i]]);
    }
    let mut run = Run::new(t.render(), json!({ "model": def.name, "parameters": values, "noise": noise, "sweep": spec }));
    run.seed = Some(a.seed);
    Ok(run)
}

pub fn acceptance(a: &AcceptanceArgs, preset: &Preset, header: &str) -> Result<Run> {
    let opts = AcceptanceOptions { seed: a.seed, workers: a.workers };
    let ids: Vec<u8> = if a.criterion.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { a.criterion.clone() };
    let mut outcomes = Vec::new();
    for id in ids {
        let o = run_criterion(id, preset, &opts)?;
        eprintln!("{}", o.status_line());
        outcomes.push(o);
    }

    let mut t = Table::new(&["criterion", "status", "checks_passed", "checks_total", "title"]);
    t.note(header);
    t.note(format!("seed: {}", a.seed));
    for o in &outcomes {
        let status = if o.report_only { "REPORT" } else if o.passed { "PASS" } else { "FAIL" };
        let ok = o.checks.iter().filter(|c| c.passed).count();
        t.push(vec![o.id.to_string(), status.into(), ok.to_string(), o.checks.len().to_string(), o.title.clone()]);
    }
    for o in outcomes.iter().filter(|o| !o.report_only) {
        for c in o.failures() {
            t.note(format!("criterion {} failed check: {} = {} vs {} ({})", o.id, c.name, c.value, c.reference, c.rule));
        }
    }
    let mut run = Run::new(t.render(), serde_json::to_value(&outcomes)?);
    run.seed = Some(a.seed);

    if let Some(path) = &a.checks {
        let mut c = Table::new(&["criterion", "check", "value", "reference", "rule", "passed"]);
        c.note(header);
        for o in &outcomes {
            for ch in &o.checks {
                c.push(vec![
                    o.id.to_string(),
                    format!("\"{}\"", ch.name.replace('"', "'")),
                    num(ch.value),
                    num(ch.reference),
                    format!("\"{}\"", ch.rule),
                    u8::from(ch.passed).to_string(),
                ]);
            }
        }
        write_file(path, &c.render())?;
        run.extra_outputs.push(path.clone());
    }
    if outcomes.iter().any(|o| !o.passed) {
        run.exit_code = EXIT_ACCEPTANCE;
    }
    Ok(run)
}
