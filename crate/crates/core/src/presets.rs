//! Named parameter sets: experiment inputs plus every model parameter.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{parse_toml, ConfigError, ExperimentConfig, FieldError, FieldReader};
use crate::eit::EitSpectrumParams;
use crate::error::{Error, Result};
use crate::storage_switch::{
    DecayParams, HeraldModel, HeraldParams, StorageMode, StorageParams, SwitchParams, TotalTransmission,
};
use crate::units::Dimension;

pub const BASELINE_NAME: &str = "paper-2014";
pub const BASELINE_TOML: &str = include_str!("../presets/paper-2014.toml");

/// Environment variable naming a directory of extra `<name>.toml` presets.
pub const PRESET_DIR_ENV: &str = "RYDSWITCH_PRESET_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub experiment: ExperimentConfig,
    pub models: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub eit: EitSpectrumParams,
    /// Resonant transmission and bin count of the self-blockaded target pulse.
    pub propagation_t0: f64,
    pub propagation_bins: f64,
    pub storage: StorageParams,
    pub storage_mode: StorageMode,
    pub storage_rapid: StorageParams,
    pub herald: HeraldParams,
    pub herald_bins: f64,
    pub eps_ideal: f64,
    pub n_post0: f64,
    pub switch: SwitchParams,
    pub ps_n0: f64,
    pub tau_pop_low: f64,
    pub tau_pop_high: f64,
    pub decay: DecayParams,
    pub eps0: f64,
    pub n_g: f64,
    pub n_t: f64,
    pub correlation_time: f64,
    pub pulse_duration: f64,
    pub reference: Reference,
}

/// Measured values reported next to model output, never asserted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub epsilon_total: f64,
    pub epsilon_total_err: f64,
    pub epsilon_post: f64,
    pub epsilon_post_err: f64,
}

impl ModelParams {
    /// Herald model: rapid-blockade N_b with its own bin count.
    pub fn herald_model(&self) -> HeraldModel {
        HeraldModel {
            params: self.herald,
            storage: StorageParams {
                bins: self.herald_bins,
                ..self.storage
            },
            mode: StorageMode::Rapid,
        }
    }

    /// Total-ensemble transmission referenced to the target operating point.
    pub fn total_transmission(&self) -> TotalTransmission {
        TotalTransmission {
            storage: self.storage,
            mode: self.storage_mode,
            reference: crate::propagation::transmitted_mean(self.n_t, self.propagation_bins, self.propagation_t0),
        }
    }

    pub fn decay_at(&self, tau_pop: f64) -> DecayParams {
        DecayParams { tau_pop, ..self.decay }
    }
}

impl Preset {
    pub fn baseline() -> Self {
        Self::from_toml_str(BASELINE_NAME, BASELINE_TOML).expect("built-in preset is valid")
    }

    pub fn from_toml_str(name: &str, text: &str) -> std::result::Result<Self, ConfigError> {
        let table = parse_toml(text)?;
        let experiment = ExperimentConfig::from_table(&table);
        let models = read_models(&table);
        match (experiment, models) {
            (Ok(experiment), Ok(models)) => Ok(Preset {
                name: name.to_string(),
                experiment,
                models,
            }),
            (Err(mut a), Err(b)) => {
                a.errors.extend(b.errors);
                Err(a)
            }
            (Err(e), _) | (_, Err(e)) => Err(e),
        }
    }

    /// Resolves a built-in name, `<dir>/<name>.toml`, or a file path, in that order.
    pub fn load(name_or_path: &str, dir: Option<&Path>) -> Result<Self> {
        if name_or_path == BASELINE_NAME {
            return Ok(Self::baseline());
        }
        let mut candidates: Vec<PathBuf> = Vec::new();
        if let Some(d) = dir {
            candidates.push(d.join(format!("{name_or_path}.toml")));
        }
        candidates.push(PathBuf::from(name_or_path));
        for path in candidates {
            if path.is_file() {
                let text = std::fs::read_to_string(&path)?;
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name_or_path);
                return Ok(Self::from_toml_str(name, &text)?);
            }
        }
        Err(Error::Config(ConfigError {
            errors: vec![FieldError::Invalid {
                field: "<preset>".into(),
                reason: format!("no preset `{name_or_path}` (built-in: {BASELINE_NAME})"),
            }],
        }))
    }
}

fn read_models(table: &toml::Table) -> std::result::Result<ModelParams, ConfigError> {
    use Dimension::*;
    let mut r = FieldReader::new(table);
    let od_eit_fit = r.quantity("eit_fit", "od_eit", Dimensionless);
    let eit = EitSpectrumParams {
        od: r.quantity("eit_fit", "od", Dimensionless),
        gamma: r.quantity("eit_fit", "gamma", AngularFrequency),
        delta0: r.quantity("eit_fit", "delta0", AngularFrequency),
        delta1: r.quantity("eit_fit", "delta1", AngularFrequency),
        t0: (-od_eit_fit).exp(),
        width: r.quantity("eit_fit", "width", AngularFrequency),
    };
    let storage = StorageParams {
        eta_sb: r.quantity("storage", "eta_sb", Dimensionless),
        bins: r.quantity("storage", "bins", Dimensionless),
        od: r.quantity("storage", "od", Dimensionless),
        od_eit: r.quantity("storage", "od_eit", Dimensionless),
    };
    let storage_mode = match table
        .get("storage")
        .and_then(|s| s.get("mode"))
        .and_then(|m| m.as_str())
    {
        Some("rapid") => StorageMode::Rapid,
        Some("full") | None => StorageMode::Full,
        Some(_) => {
            r.check(false, "storage", "mode", "must be `full` or `rapid`");
            StorageMode::Full
        }
    };
    let storage_rapid = StorageParams {
        eta_sb: r.quantity("storage_rapid", "eta_sb", Dimensionless),
        bins: r.quantity("storage_rapid", "bins", Dimensionless),
        ..storage
    };
    let herald = HeraldParams {
        eta_wr: r.quantity("herald", "eta_wr", Dimensionless),
        eta_det: r.quantity("herald", "eta_det", Dimensionless),
        p_h0: r.quantity("herald", "p_h0", Dimensionless),
    };
    let herald_bins = r.quantity("herald", "bins", Dimensionless);
    let propagation_t0 = r.quantity("propagation", "t0", Dimensionless);
    let propagation_bins = r.quantity("propagation", "bins", Dimensionless);
    let p_s = r.quantity("switch", "p_s", Dimensionless);
    let ps_n0 = r.quantity("switch", "ps_n0", Dimensionless);
    let switch = SwitchParams {
        od_b0: r.quantity("switch", "od_b0", Dimensionless),
        n1: r.quantity("switch", "n1", Dimensionless),
        p_s,
        n0: ps_n0 / p_s,
        t0: propagation_t0,
        bins: propagation_bins,
    };
    let tau_pop_low = r.quantity("decay", "tau_pop_low_density", Time);
    let decay = DecayParams {
        tau_pop: tau_pop_low,
        gamma0: r.quantity("decay", "gamma0", Rate),
        k_rho: r.quantity("decay", "k_rho", Dimensionless),
    };
    let models = ModelParams {
        eit,
        propagation_t0,
        propagation_bins,
        storage,
        storage_mode,
        storage_rapid,
        herald,
        herald_bins,
        eps_ideal: r.quantity("postselection", "eps_ideal", Dimensionless),
        n_post0: r.quantity("postselection", "n_post0", Dimensionless),
        switch,
        ps_n0,
        tau_pop_low,
        tau_pop_high: r.quantity("decay", "tau_pop_high_density", Time),
        decay,
        eps0: r.quantity("decay", "eps0", Dimensionless),
        n_g: r.quantity("operating_point", "n_g", Dimensionless),
        n_t: r.quantity("operating_point", "n_t", Dimensionless),
        correlation_time: r.quantity("operating_point", "correlation_time", Time),
        pulse_duration: r.quantity("operating_point", "pulse_duration", Time),
        reference: Reference {
            epsilon_total: r.quantity("reference", "epsilon_total", Dimensionless),
            epsilon_total_err: r.quantity("reference", "epsilon_total_err", Dimensionless),
            epsilon_post: r.quantity("reference", "epsilon_post", Dimensionless),
            epsilon_post_err: r.quantity("reference", "epsilon_post_err", Dimensionless),
        },
    };
    if !r.has_errors() {
        let unit = [
            ("storage", "eta_sb", models.storage.eta_sb),
            ("storage_rapid", "eta_sb", models.storage_rapid.eta_sb),
            ("herald", "eta_wr", models.herald.eta_wr),
            ("herald", "eta_det", models.herald.eta_det),
            ("herald", "p_h0", models.herald.p_h0),
            ("switch", "p_s", models.switch.p_s),
            ("propagation", "t0", models.propagation_t0),
        ];
        for (s, k, v) in unit {
            r.check((0.0..=1.0).contains(&v), s, k, "must lie in [0, 1]");
        }
        for (s, k, v) in [
            ("storage", "bins", models.storage.bins),
            ("storage_rapid", "bins", models.storage_rapid.bins),
            ("herald", "bins", models.herald_bins),
            ("propagation", "bins", models.propagation_bins),
            ("switch", "n1", models.switch.n1),
        ] {
            r.check(v > 0.0, s, k, "must be > 0");
        }
        r.check(models.switch.od_b0 >= 0.0, "switch", "od_b0", "must be >= 0");
        r.check(models.switch.p_s > 0.0, "switch", "p_s", "must be > 0 to resolve N_0 from p_s N_0");
    }
    r.finish()?;
    Ok(models)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_parses() {
        let p = Preset::baseline();
        assert_eq!(p.name, BASELINE_NAME);
        assert_eq!(p.models.storage.bins, 2.0);
        assert!((p.models.switch.n0 * p.models.switch.p_s - 0.014).abs() < 1e-15);
        assert!((p.models.eit.t0 - (-0.91f64).exp()).abs() < 1e-15);
        assert!((p.models.decay.gamma0 - 0.8e6).abs() < 1e-6);
        assert_eq!(p.models.tau_pop_high, 24e-6);
    }

    #[test]
    fn herald_model_uses_rapid_bins() {
        let m = Preset::baseline().models.herald_model();
        assert_eq!(m.mode, StorageMode::Rapid);
        assert_eq!(m.storage.bins, 2.0);
    }

    #[test]
    fn missing_model_sections_are_listed() {
        let text: String = BASELINE_TOML.split("# ---- model parameters ----").next().unwrap().into();
        let err = Preset::from_toml_str("x", &text).unwrap_err();
        assert!(err.missing_fields().contains(&"switch.od_b0"));
        assert!(err.missing_fields().len() > 20);
    }

    #[test]
    fn load_from_directory() {
        let dir = std::env::temp_dir().join(format!("rydswitch-preset-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("alt.toml"), BASELINE_TOML.replace("n_t = 1.7", "n_t = 3.0")).unwrap();
        let p = Preset::load("alt", Some(&dir)).unwrap();
        assert_eq!(p.name, "alt");
        assert_eq!(p.models.n_t, 3.0);
        assert!(Preset::load("nope", Some(&dir)).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
