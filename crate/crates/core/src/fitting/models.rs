//! Registry of curve models available to the fitting engine and the CLI.

use crate::eit::{eit_transmission, EitSpectrumParams};
use crate::error::{Error, Result};
use crate::propagation::transmitted_mean;
use crate::storage_switch::{
    extinction_post_vs_nt, extinction_total_vs_nt, extinction_vs_ng_raw, herald_probability,
    postselected_extinction_vs_ng, HeraldModel, HeraldParams, StorageMode, StorageParams, SwitchParams,
    TotalTransmission,
};

#[derive(Debug, Clone, Copy)]
pub struct ParamDef {
    pub name: &'static str,
    /// Typical magnitude; sets the finite-difference step near zero.
    pub scale: f64,
    /// Hard limits of the model's domain.
    pub bounds: (f64, f64),
    /// A physically sensible range, used for property tests and defaults.
    pub typical: (f64, f64),
}

const fn p(name: &'static str, scale: f64, bounds: (f64, f64), typical: (f64, f64)) -> ParamDef {
    ParamDef { name, scale, bounds, typical }
}

const INF: f64 = f64::INFINITY;
const POS: (f64, f64) = (0.0, INF);
const REAL: (f64, f64) = (-INF, INF);
const UNIT: (f64, f64) = (0.0, 1.0);
const BINS: (f64, f64) = (1e-3, 1e3);

type EvalFn = fn(f64, &[f64]) -> Result<f64>;
type GradFn = fn(f64, &[f64]) -> Vec<f64>;

pub struct ModelDef {
    pub name: &'static str,
    /// Formula and independent variable, for provenance headers.
    pub formula: &'static str,
    pub x_name: &'static str,
    pub params: &'static [ParamDef],
    eval: EvalFn,
    grad: Option<GradFn>,
}

impl std::fmt::Debug for ModelDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelDef").field("name", &self.name).finish()
    }
}

impl ModelDef {
    pub fn eval(&self, x: f64, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.params.len() {
            return Err(Error::FitSetup(format!(
                "{} takes {} parameters, got {}",
                self.name,
                self.params.len(),
                theta.len()
            )));
        }
        (self.eval)(x, theta)
    }

    /// Analytic gradient with respect to all parameters, if the model has one.
    pub fn analytic_gradient(&self, x: f64, theta: &[f64]) -> Option<Vec<f64>> {
        self.grad.map(|g| g(x, theta))
    }

    /// Central-difference gradient with step 1e-6 max(|theta|, scale).
    pub fn numeric_gradient(&self, x: f64, theta: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(theta.len());
        let mut t = theta.to_vec();
        for (j, def) in self.params.iter().enumerate() {
            let h = 1e-6 * theta[j].abs().max(def.scale);
            t[j] = theta[j] + h;
            let up = self.eval(x, &t)?;
            t[j] = theta[j] - h;
            let down = self.eval(x, &t)?;
            t[j] = theta[j];
            out.push((up - down) / (2.0 * h));
        }
        Ok(out)
    }

    pub fn gradient(&self, x: f64, theta: &[f64]) -> Result<Vec<f64>> {
        match self.analytic_gradient(x, theta) {
            Some(g) => Ok(g),
            None => self.numeric_gradient(x, theta),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        self.params.iter().map(|p| p.name).collect()
    }
}

fn linear(x: f64, t: &[f64]) -> Result<f64> {
    Ok(t[0] + t[1] * x)
}

fn linear_grad(x: f64, _: &[f64]) -> Vec<f64> {
    vec![1.0, x]
}

fn exponential(x: f64, t: &[f64]) -> Result<f64> {
    Ok(t[0] * (-x / t[1]).exp())
}

fn exponential_grad(x: f64, t: &[f64]) -> Vec<f64> {
    let e = (-x / t[1]).exp();
    vec![e, t[0] * e * x / (t[1] * t[1])]
}

fn retrieval(x: f64, t: &[f64]) -> Result<f64> {
    Ok(t[0] * (-t[1] * x).exp())
}

fn retrieval_grad(x: f64, t: &[f64]) -> Vec<f64> {
    let e = (-t[1] * x).exp();
    vec![e, -t[0] * x * e]
}

fn blockade(x: f64, t: &[f64]) -> Result<f64> {
    Ok(1.0 - (1.0 - t[0]) * (-x / t[1]).exp())
}

fn blockade_grad(x: f64, t: &[f64]) -> Vec<f64> {
    let e = (-x / t[1]).exp();
    vec![e, -(1.0 - t[0]) * e * x / (t[1] * t[1])]
}

fn gaussian_dip(x: f64, t: &[f64]) -> Result<f64> {
    Ok(t[0] * (1.0 - t[1] * (-x * x / (2.0 * t[2] * t[2])).exp()))
}

fn gaussian_dip_grad(x: f64, t: &[f64]) -> Vec<f64> {
    let g = (-x * x / (2.0 * t[2] * t[2])).exp();
    vec![1.0 - t[1] * g, -t[0] * g, -t[0] * t[1] * g * x * x / t[2].powi(3)]
}

fn eit(x: f64, t: &[f64]) -> Result<f64> {
    let p = EitSpectrumParams {
        od: t[0],
        gamma: t[1],
        delta0: t[2],
        delta1: t[3],
        t0: t[4],
        width: t[5],
    };
    Ok(eit_transmission(x, &p))
}

fn n_out(x: f64, t: &[f64]) -> Result<f64> {
    Ok(transmitted_mean(x, t[1], t[0]))
}

fn n_out_grad(x: f64, t: &[f64]) -> Vec<f64> {
    let (t0, b) = (t[0], t[1]);
    let e = (-x / b).exp();
    let s = -(-x / b).exp_m1();
    vec![b * s, t0 * (s - x / b * e)]
}

fn storage(b: f64, eta_sb: f64, od: f64, od_eit: f64) -> StorageParams {
    StorageParams { eta_sb, bins: b, od, od_eit }
}

fn ext_full(x: f64, t: &[f64]) -> Result<f64> {
    extinction_vs_ng_raw(x, &storage(t[0], t[1], t[2], t[3]), StorageMode::Full)
}

fn ext_rapid(x: f64, t: &[f64]) -> Result<f64> {
    extinction_vs_ng_raw(x, &storage(t[0], t[1], 0.0, t[2]), StorageMode::Rapid)
}

fn herald(x: f64, t: &[f64]) -> Result<f64> {
    let h = HeraldParams { eta_wr: t[1], eta_det: t[2], p_h0: t[4] };
    herald_probability(x, &h, &storage(t[0], 1.0, 0.0, t[3]), StorageMode::Rapid)
}

fn postselected(x: f64, t: &[f64]) -> Result<f64> {
    let herald = HeraldModel {
        params: HeraldParams { eta_wr: t[3], eta_det: t[4], p_h0: t[5] },
        storage: storage(t[2], 1.0, 0.0, t[9]),
        mode: StorageMode::Rapid,
    };
    let total = TotalTransmission {
        storage: storage(t[6], t[7], t[8], t[9]),
        mode: StorageMode::Full,
        reference: t[10],
    };
    postselected_extinction_vs_ng(x, t[0], t[1], &herald, &total)
}

fn switch(t: &[f64], p_s: f64, n0: f64) -> SwitchParams {
    SwitchParams { od_b0: t[0], n1: t[1], p_s, n0, t0: t[2], bins: t[3] }
}

fn post_nt(x: f64, t: &[f64]) -> Result<f64> {
    extinction_post_vs_nt(x, &switch(t, 1.0, 0.0))
}

fn total_nt(x: f64, t: &[f64]) -> Result<f64> {
    let (p_s, ps_n0) = (t[0], t[1]);
    if p_s <= 0.0 {
        return Err(Error::domain("extinction_total_vs_nt", "p_s must be > 0 to resolve N_0"));
    }
    extinction_total_vs_nt(x, &switch(&t[2..], p_s, ps_n0 / p_s))
}

const US: f64 = 1e-6;
const MHZ: f64 = 2.0 * std::f64::consts::PI * 1e6;

pub static MODELS: &[ModelDef] = &[
    ModelDef {
        name: "linear",
        formula: "y = intercept + slope x",
        x_name: "x",
        params: &[p("intercept", 1.0, REAL, (-2.0, 2.0)), p("slope", 1.0, REAL, (-2.0, 2.0))],
        eval: linear,
        grad: Some(linear_grad),
    },
    ModelDef {
        name: "exponential",
        formula: "y = amplitude exp(-t / tau)",
        x_name: "t_s",
        params: &[p("amplitude", 1.0, REAL, (0.1, 5.0)), p("tau", US, (1e-30, INF), (1.0 * US, 100.0 * US))],
        eval: exponential,
        grad: Some(exponential_grad),
    },
    ModelDef {
        name: "retrieval_decay",
        formula: "N_r = n_r0 exp(-rate t_d)",
        x_name: "t_d_s",
        params: &[p("n_r0", 1.0, POS, (0.1, 5.0)), p("rate", 1e6, POS, (0.1e6, 3e6))],
        eval: retrieval,
        grad: Some(retrieval_grad),
    },
    ModelDef {
        name: "blockade_decay",
        formula: "epsilon = 1 - (1 - eps0) exp(-t_d / tau_pop)",
        x_name: "t_d_s",
        params: &[p("eps0", 1.0, (-INF, 1.0), (0.2, 0.95)), p("tau_pop", US, (1e-30, INF), (5.0 * US, 200.0 * US))],
        eval: blockade,
        grad: Some(blockade_grad),
    },
    ModelDef {
        name: "dephasing_rate",
        formula: "gamma21 = gamma0 + k_rho rho",
        x_name: "density_m3",
        params: &[p("gamma0", 1e6, POS, (0.1e6, 2e6)), p("k_rho", 1e-13, POS, (1e-14, 1e-12))],
        eval: linear,
        grad: Some(linear_grad),
    },
    ModelDef {
        name: "gaussian_dip",
        formula: "g2 = c (1 - depth exp(-tau^2 / 2 width^2))",
        x_name: "tau_s",
        params: &[
            p("c", 1.0, POS, (0.5, 1.5)),
            p("depth", 1.0, (0.0, 1.0), (0.1, 0.95)),
            p("width", US, (1e-30, INF), (0.05 * US, 1.0 * US)),
        ],
        eval: gaussian_dip,
        grad: Some(gaussian_dip_grad),
    },
    ModelDef {
        name: "eit_transmission",
        formula: "T = exp(-od / (1 + (2 (D - delta0) / gamma)^2)) + t0 exp(-4 ln2 (D - delta1)^2 / delta_t^2)",
        x_name: "detuning_rad_s",
        params: &[
            p("od", 1.0, POS, (0.5, 10.0)),
            p("gamma", MHZ, (1.0, INF), (3.0 * MHZ, 8.0 * MHZ)),
            p("delta0", MHZ, REAL, (-MHZ, 1.0 * MHZ)),
            p("delta1", MHZ, REAL, (-MHZ, 1.0 * MHZ)),
            p("t0", 1.0, UNIT, (0.1, 0.9)),
            p("delta_t", MHZ, (1.0, INF), (0.5 * MHZ, 5.0 * MHZ)),
        ],
        eval: eit,
        grad: None,
    },
    ModelDef {
        name: "transmitted_mean",
        formula: "N_out = b t0 (1 - exp(-N_in / b))",
        x_name: "n_in",
        params: &[p("t0", 1.0, UNIT, (0.1, 0.9)), p("b", 1.0, BINS, (0.5, 5.0))],
        eval: n_out,
        grad: Some(n_out_grad),
    },
    ModelDef {
        name: "extinction_vs_ng_full",
        formula: "epsilon = 1 - eta_sb N_b(N_g), N_b with exponential integrals",
        x_name: "n_g",
        params: &[
            p("b", 1.0, BINS, (0.5, 5.0)),
            p("eta_sb", 1.0, UNIT, (0.05, 0.6)),
            p("od", 1.0, (1e-6, INF), (1.0, 10.0)),
            p("od_eit", 1.0, POS, (0.1, 2.0)),
        ],
        eval: ext_full,
        grad: None,
    },
    ModelDef {
        name: "extinction_vs_ng_rapid",
        formula: "epsilon = 1 - eta_sb b (1 - exp(-od_eit)) / od_eit (1 - exp(-N_g / b))",
        x_name: "n_g",
        params: &[
            p("b", 1.0, BINS, (0.5, 5.0)),
            p("eta_sb", 1.0, UNIT, (0.05, 0.6)),
            p("od_eit", 1.0, POS, (0.1, 2.0)),
        ],
        eval: ext_rapid,
        grad: None,
    },
    ModelDef {
        name: "herald_probability",
        formula: "p_h = eta_wr eta_det N_b(N_g) + p_h0, rapid-blockade N_b",
        x_name: "n_g",
        params: &[
            p("b", 1.0, BINS, (0.5, 5.0)),
            p("eta_wr", 0.01, UNIT, (0.005, 0.05)),
            p("eta_det", 1.0, UNIT, (0.1, 0.9)),
            p("od_eit", 1.0, POS, (0.1, 2.0)),
            p("p_h0", 1e-4, UNIT, (1e-5, 1e-3)),
        ],
        eval: herald,
        grad: None,
    },
    ModelDef {
        name: "postselected_extinction_vs_ng",
        formula: "epsilon_post = ((1 - q) eps_ideal n_post0 + q N_total(N_g)) / n_post0, q = p_h(0) / p_h(N_g)",
        x_name: "n_g",
        params: &[
            p("eps_ideal", 0.01, REAL, (0.005, 0.1)),
            p("n_post0", 1.0, (1e-9, INF), (0.3, 1.5)),
            p("b_herald", 1.0, BINS, (0.5, 5.0)),
            p("eta_wr", 0.01, UNIT, (0.005, 0.05)),
            p("eta_det", 1.0, UNIT, (0.1, 0.9)),
            p("p_h0", 1e-4, UNIT, (1e-5, 1e-3)),
            p("b", 1.0, BINS, (0.5, 5.0)),
            p("eta_sb", 1.0, UNIT, (0.05, 0.6)),
            p("od", 1.0, (1e-6, INF), (1.0, 10.0)),
            p("od_eit", 1.0, POS, (0.1, 2.0)),
            p("n_ref", 1.0, POS, (0.1, 1.0)),
        ],
        eval: postselected,
        grad: None,
    },
    ModelDef {
        name: "extinction_post_vs_nt",
        formula: "epsilon_post = N_t exp(-od_b0 (1 - N_t / n1)) / N_out(N_t)",
        x_name: "n_t",
        params: &[
            p("od_b0", 1.0, POS, (1.0, 8.0)),
            p("n1", 1.0, (1e-6, INF), (10.0, 50.0)),
            p("t0", 1.0, UNIT, (0.1, 0.9)),
            p("b", 1.0, BINS, (0.5, 5.0)),
        ],
        eval: post_nt,
        grad: None,
    },
    ModelDef {
        name: "extinction_total_vs_nt",
        formula: "epsilon = ((1 - p_s) N_out + p_s N_t exp(-OD_b) + ps_n0) / N_out",
        x_name: "n_t",
        params: &[
            p("p_s", 1.0, (1e-9, 1.0), (0.05, 0.9)),
            p("ps_n0", 0.01, POS, (0.0, 0.05)),
            p("od_b0", 1.0, POS, (1.0, 8.0)),
            p("n1", 1.0, (1e-6, INF), (10.0, 50.0)),
            p("t0", 1.0, UNIT, (0.1, 0.9)),
            p("b", 1.0, BINS, (0.5, 5.0)),
        ],
        eval: total_nt,
        grad: None,
    },
];

pub fn lookup(name: &str) -> Result<&'static ModelDef> {
    MODELS.iter().find(|m| m.name == name).ok_or_else(|| Error::UnknownModel {
        name: name.to_string(),
        available: available(),
    })
}

pub fn available() -> String {
    MODELS.iter().map(|m| m.name).collect::<Vec<_>>().join(", ")
}

/// Worst agreement between a model's Jacobian and a five-point stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCheck {
    /// Largest error divided by its tolerance; <= 1 passes.
    pub worst_ratio: f64,
    pub points: usize,
}

/// Compares `ModelDef::gradient` with an independent five-point stencil at
/// `points` random parameter vectors drawn from the typical ranges.
///
/// Errors are measured per unit relative parameter change, with tolerance
/// `rel` times the derivative, floored at 1e-4 of the model value.
pub fn jacobian_check(m: &ModelDef, points: usize, rel: f64, seed: u64) -> Result<JacobianCheck> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let theta: Vec<f64> = m
            .params
            .iter()
            .map(|p| p.typical.0 + (p.typical.1 - p.typical.0) * rng.random::<f64>())
            .collect();
        let x = typical_x(m, rng.random());
        let g = m.gradient(x, &theta)?;
        let f = m.eval(x, &theta)?.abs();
        for j in 0..theta.len() {
            let h = 1e-3 * theta[j].abs().max(m.params[j].scale);
            let at = |d: f64| {
                let mut t = theta.clone();
                t[j] += d;
                m.eval(x, &t)
            };
            let fd = (-at(2.0 * h)? + 8.0 * at(h)? - 8.0 * at(-h)? + at(-2.0 * h)?) / (12.0 * h);
            let s = theta[j].abs().max(m.params[j].scale);
            let tol = rel * (fd.abs() * s).max(1e-4 * f).max(f64::MIN_POSITIVE);
            worst = worst.max((g[j] - fd).abs() * s / tol);
        }
    }
    Ok(JacobianCheck { worst_ratio: worst, points })
}

/// A representative abscissa for the model, from u in [0, 1).
fn typical_x(m: &ModelDef, u: f64) -> f64 {
    match m.x_name {
        _ if m.name == "retrieval_decay" => u * 3e-6,
        "t_s" | "t_d_s" => u * 100e-6,
        "density_m3" => u * 3e18,
        "tau_s" => (u - 0.5) * 2e-6,
        "detuning_rad_s" => (u - 0.5) * 40.0 * MHZ,
        "n_t" => 0.2 + 8.0 * u,
        _ => 0.05 + 6.0 * u,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jacobians_match_finite_differences() {
        for (i, m) in MODELS.iter().enumerate() {
            let c = jacobian_check(m, 20, 1e-5, 2024 + i as u64).unwrap();
            assert!(c.worst_ratio <= 1.0, "{}: {}", m.name, c.worst_ratio);
        }
    }

    #[test]
    fn unknown_model_lists_available() {
        let e = lookup("nope").unwrap_err().to_string();
        assert!(e.contains("transmitted_mean") && e.contains("gaussian_dip"), "{e}");
    }

    #[test]
    fn typical_ranges_inside_bounds() {
        for m in MODELS {
            for p in m.params {
                assert!(p.bounds.0 <= p.typical.0 && p.typical.1 <= p.bounds.1, "{}.{}", m.name, p.name);
            }
        }
    }

    proptest! {
        #[test]
        fn transmitted_mean_never_exceeds_input(t0 in 0.0f64..1.0, b in 0.1f64..10.0, n in 0.0f64..50.0) {
            let v = lookup("transmitted_mean").unwrap().eval(n, &[t0, b]).unwrap();
            prop_assert!(v <= t0 * n + 1e-12);
            prop_assert!(v <= b * t0 + 1e-12);
        }

        #[test]
        fn blockade_decay_between_eps0_and_one(eps0 in 0.0f64..1.0, tau in 1e-6f64..1e-4, t in 0.0f64..1e-3) {
            let v = lookup("blockade_decay").unwrap().eval(t, &[eps0, tau]).unwrap();
            prop_assert!(v >= eps0 - 1e-15 && v <= 1.0 + 1e-15);
        }
    }
}
