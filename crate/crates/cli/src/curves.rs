//! Curve tables: every registered fit model, plus multi-column sweeps that
//! combine several models the way the measurements are plotted.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Result};
use rydswitch::fitting::{self, linspace, ModelDef};
use rydswitch::presets::Preset;
use rydswitch::propagation::{bin_mean, evolve_bin, BinDistribution, ClosedForm, MediumParams};
use rydswitch::storage_switch::{
    blockade_decay, blockaded_od, dephasing_rate, extinction_post_vs_nt, extinction_total_vs_nt, extinction_vs_ng,
    postselected_extinction_vs_ng,
};

use crate::output::Table;

/// Sweeps made of several columns; the names live beside the fit models.
pub const SWEEPS: &[(&str, &str)] = &[
    ("extinction_vs_ng", "N_g -> epsilon, epsilon_post, p_h"),
    ("extinction_vs_nt", "N_t -> epsilon, epsilon_post, OD_b"),
    ("decay_vs_td", "t_d [s] -> epsilon at both population lifetimes"),
    ("rate_vs_density", "rho [m^-3] -> gamma21 [1/s]"),
    ("bin_profile", "z/L -> p_0..p_3+, bin mean (master equation and closed forms)"),
];

pub fn available() -> String {
    let mut names: Vec<&str> = SWEEPS.iter().map(|s| s.0).collect();
    names.extend(fitting::MODELS.iter().map(|m| m.name));
    names.join(", ")
}

/// Parameter values of a fit model taken from the preset; parameters the
/// preset does not describe start in the middle of their typical range.
pub fn preset_values(def: &ModelDef, preset: &Preset) -> BTreeMap<&'static str, f64> {
    let m = &preset.models;
    let known: Vec<(&str, f64)> = match def.name {
        "blockade_decay" => vec![("eps0", m.eps0), ("tau_pop", m.decay.tau_pop)],
        "dephasing_rate" => vec![("gamma0", m.decay.gamma0), ("k_rho", m.decay.k_rho)],
        "eit_transmission" => vec![
            ("od", m.eit.od),
            ("gamma", m.eit.gamma),
            ("delta0", m.eit.delta0),
            ("delta1", m.eit.delta1),
            ("t0", m.eit.t0),
            ("delta_t", m.eit.width),
        ],
        "transmitted_mean" => vec![("t0", m.propagation_t0), ("b", m.propagation_bins)],
        "extinction_vs_ng_full" => vec![
            ("b", m.storage.bins),
            ("eta_sb", m.storage.eta_sb),
            ("od", m.storage.od),
            ("od_eit", m.storage.od_eit),
        ],
        "extinction_vs_ng_rapid" => vec![
            ("b", m.storage_rapid.bins),
            ("eta_sb", m.storage_rapid.eta_sb),
            ("od_eit", m.storage_rapid.od_eit),
        ],
        "herald_probability" => vec![
            ("b", m.herald_bins),
            ("eta_wr", m.herald.eta_wr),
            ("eta_det", m.herald.eta_det),
            ("od_eit", m.storage.od_eit),
            ("p_h0", m.herald.p_h0),
        ],
        "postselected_extinction_vs_ng" => vec![
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
            ("n_ref", m.total_transmission().reference),
        ],
        "extinction_post_vs_nt" => vec![
            ("od_b0", m.switch.od_b0),
            ("n1", m.switch.n1),
            ("t0", m.switch.t0),
            ("b", m.switch.bins),
        ],
        "extinction_total_vs_nt" => vec![
            ("p_s", m.switch.p_s),
            ("ps_n0", m.ps_n0),
            ("od_b0", m.switch.od_b0),
            ("n1", m.switch.n1),
            ("t0", m.switch.t0),
            ("b", m.switch.bins),
        ],
        _ => Vec::new(),
    };
    def.params
        .iter()
        .map(|p| {
            let v = known
                .iter()
                .find(|(n, _)| *n == p.name)
                .map_or(0.5 * (p.typical.0 + p.typical.1), |(_, v)| *v);
            (p.name, v)
        })
        .collect()
}

/// Applies `name=value` overrides, rejecting names the model does not have.
pub fn apply_overrides(
    values: &mut BTreeMap<&'static str, f64>,
    overrides: &[(String, f64)],
    model: &str,
) -> Result<()> {
    for (name, v) in overrides {
        match values.get_mut(name.as_str()) {
            Some(slot) => *slot = *v,
            None => {
                let names: Vec<&str> = values.keys().copied().collect();
                bail!("{model} has no parameter `{name}` (parameters: {})", names.join(", "));
            }
        }
    }
    Ok(())
}

pub struct CurveOutput {
    pub table: Table,
    pub warnings: Vec<String>,
}

/// Builds the table for `name` over the sweep `x`.
pub fn curve(name: &str, x: &[f64], preset: &Preset, overrides: &[(String, f64)]) -> Result<CurveOutput> {
    if SWEEPS.iter().any(|s| s.0 == name) {
        if !overrides.is_empty() {
            bail!("{name} takes its parameters from the preset or config file; --param applies to fit models");
        }
        return sweep(name, x, preset);
    }
    let def = fitting::lookup(name)?;
    let mut values = preset_values(def, preset);
    apply_overrides(&mut values, overrides, name)?;
    let theta: Vec<f64> = def.params.iter().map(|p| values[p.name]).collect();

    let asymptote = (def.name == "transmitted_mean").then(|| values["b"] * values["t0"]);
    let mut cols = vec![def.x_name, "y"];
    if asymptote.is_some() {
        cols.push("asymptote_b_t0");
    }
    let mut table = Table::new(&cols);
    table.note(format!("model: {} ({})", def.name, def.formula));
    let params: Vec<String> = def.params.iter().map(|p| format!("{}={}", p.name, values[p.name])).collect();
    table.note(format!("parameters: {}", params.join(" ")));
    for &xi in x {
        let y = def.eval(xi, &theta)?;
        let mut row = vec![xi, y];
        row.extend(asymptote);
        table.push_numbers(&row);
    }
    Ok(CurveOutput { table, warnings: Vec::new() })
}

fn sweep(name: &str, x: &[f64], preset: &Preset) -> Result<CurveOutput> {
    let m = &preset.models;
    let mut warnings = Vec::new();
    let table = match name {
        "extinction_vs_ng" => {
            let herald = m.herald_model();
            let total = m.total_transmission();
            let mut t = Table::new(&["n_g", "epsilon", "epsilon_post", "p_h"]);
            t.note(format!(
                "model: epsilon = 1 - eta_sb N_b(N_g) ({:?} storage); epsilon_post with background heralds q = p_h(0)/p_h(N_g)",
                m.storage_mode
            ));
            t.note(format!(
                "parameters: b={} eta_sb={} od={} od_eit={} eps_ideal={} n_post0={} eta_wr={} eta_det={} p_h0={}",
                m.storage.bins,
                m.storage.eta_sb,
                m.storage.od,
                m.storage.od_eit,
                m.eps_ideal,
                m.n_post0,
                m.herald.eta_wr,
                m.herald.eta_det,
                m.herald.p_h0
            ));
            for &n_g in x {
                let eps = extinction_vs_ng(n_g, &m.storage, m.storage_mode)?;
                warnings.extend(eps.warnings.iter().map(|w| format!("N_g = {n_g}: {w}")));
                let post = postselected_extinction_vs_ng(n_g, m.eps_ideal, m.n_post0, &herald, &total)?;
                t.push_numbers(&[n_g, eps.value, post, herald.probability(n_g)?]);
            }
            t
        }
        "extinction_vs_nt" => {
            let s = &m.switch;
            let mut t = Table::new(&["n_t", "epsilon", "epsilon_post", "od_b"]);
            t.note("model: epsilon = ((1 - p_s) N_out + p_s (N_t e^-OD_b + N_0)) / N_out, OD_b = od_b0 (1 - N_t / N_1)");
            t.note(format!(
                "parameters: p_s={} n0={} od_b0={} n1={} t0={} b={}",
                s.p_s, s.n0, s.od_b0, s.n1, s.t0, s.bins
            ));
            t.note(format!("at N_t = 0 only the background p_s N_0 = {} is detected", s.p_s * s.n0));
            for &n_t in x {
                if n_t <= 0.0 {
                    bail!("extinction_vs_nt needs N_t > 0 (got {n_t})");
                }
                let od = blockaded_od(n_t, s);
                warnings.extend(od.warnings.iter().map(|w| format!("N_t = {n_t}: {w}")));
                t.push_numbers(&[n_t, extinction_total_vs_nt(n_t, s)?, extinction_post_vs_nt(n_t, s)?, od.value]);
            }
            t
        }
        "decay_vs_td" => {
            let low = m.decay_at(m.tau_pop_low);
            let high = m.decay_at(m.tau_pop_high);
            let mut t = Table::new(&["t_d_s", "epsilon_low_density", "epsilon_high_density"]);
            t.note("model: epsilon = 1 - (1 - eps0) exp(-t_d / tau_pop)");
            t.note(format!("parameters: eps0={} tau_pop={} s and {} s", m.eps0, low.tau_pop, high.tau_pop));
            for &td in x {
                t.push_numbers(&[td, blockade_decay(td, m.eps0, &low), blockade_decay(td, m.eps0, &high)]);
            }
            t
        }
        "rate_vs_density" => {
            let mut t = Table::new(&["density_m3", "gamma21_per_s"]);
            t.note("model: gamma21 = gamma0 + k_rho rho");
            t.note(format!("parameters: gamma0={} k_rho={}", m.decay.gamma0, m.decay.k_rho));
            for &rho in x {
                t.push_numbers(&[rho, dephasing_rate(rho, &m.decay)]);
            }
            t
        }
        "bin_profile" => {
            let medium = MediumParams::normalized(m.storage.od, m.storage.od_eit)?;
            let mu0 = m.n_g / m.storage.bins;
            let init = BinDistribution::poisson(mu0, BinDistribution::default_nmax(mu0));
            let mut t = Table::new(&[
                "z_over_l",
                "p0",
                "p1",
                "p2",
                "p3_plus",
                "mean_master",
                "mean_neglect_alpha1",
                "mean_series",
            ]);
            t.note("model: bin photon-number master equation, Poisson input");
            t.note(format!("parameters: od={} od_eit={} mu0={mu0}", m.storage.od, m.storage.od_eit));
            for &z in x {
                if !(0.0..=1.0).contains(&z) {
                    bail!("bin_profile sweeps z/L in [0, 1] (got {z})");
                }
                let d = evolve_bin(&init, &medium, z, 1e-3)?;
                let p = &d.probs;
                let tail: f64 = p.iter().skip(3).sum();
                t.push_numbers(&[
                    z,
                    p[0],
                    p[1],
                    p[2],
                    tail,
                    d.mean(),
                    bin_mean(mu0, &medium, z, ClosedForm::NeglectAlpha1),
                    bin_mean(mu0, &medium, z, ClosedForm::Series),
                ]);
            }
            t
        }
        _ => unreachable!("sweep names are checked by the caller"),
    };
    Ok(CurveOutput { table, warnings })
}

/// Parses `from:to:points`.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        bail!("sweep `{spec}` must look like from:to:points");
    };
    let a: f64 = a.trim().parse().map_err(|_| anyhow!("sweep start `{a}` is not a number"))?;
    let b: f64 = b.trim().parse().map_err(|_| anyhow!("sweep end `{b}` is not a number"))?;
    let n: usize = n.trim().parse().map_err(|_| anyhow!("sweep points `{n}` is not a whole number"))?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        bail!("sweep `{spec}` needs finite ends and at least one point");
    }
    Ok(linspace(a, b, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_model_has_preset_values_inside_bounds() {
        let p = Preset::baseline();
        for def in fitting::MODELS {
            let v = preset_values(def, &p);
            for prm in def.params {
                let x = v[prm.name];
                assert!(x >= prm.bounds.0 && x <= prm.bounds.1, "{}.{} = {x}", def.name, prm.name);
            }
        }
    }

    #[test]
    fn sweep_spec() {
        assert_eq!(parse_sweep("0:4:5").unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(parse_sweep("0:4").is_err());
        assert!(parse_sweep("0:x:3").is_err());
        assert!(parse_sweep("0:1:0").is_err());
    }

    #[test]
    fn unknown_override_is_named() {
        let p = Preset::baseline();
        let err = curve("transmitted_mean", &[1.0], &p, &[("tzero".into(), 0.3)]).err().unwrap();
        assert!(err.to_string().contains("tzero"), "{err}");
    }
}
