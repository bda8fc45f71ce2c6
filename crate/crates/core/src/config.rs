//! Experiment configuration files.
//!
//! Files are TOML with flat sections. Every physical value carries an
//! explicit unit suffix (or is a bare SI number); see [`crate::units`].
//! Parsing never stops at the first problem: all missing fields and unit
//! errors are collected into one [`ConfigError`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, PartialEq)]
pub enum FieldError {
    Missing { field: String },
    Unit { field: String, message: String },
    Invalid { field: String, reason: String },
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::Missing { field } => write!(f, "{field}: missing required field"),
            FieldError::Unit { field, message } => write!(f, "{field}: {message}"),
            FieldError::Invalid { field, reason } => write!(f, "{field}: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub errors: Vec<FieldError>,
}

impl ConfigError {
    pub fn missing_fields(&self) -> Vec<&str> {
        self.errors
            .iter()
            .filter_map(|e| match e {
                FieldError::Missing { field } => Some(field.as_str()),
                _ => None,
            })
            .collect()
    }

    fn single(e: FieldError) -> Self {
        ConfigError { errors: vec![e] }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

/// Reads typed fields out of a TOML table, accumulating errors.
pub struct FieldReader<'a> {
    root: &'a toml::Table,
    errors: Vec<FieldError>,
}

impl<'a> FieldReader<'a> {
    pub fn new(root: &'a toml::Table) -> Self {
        FieldReader {
            root,
            errors: Vec::new(),
        }
    }

    fn lookup(&self, section: &str, key: &str) -> Option<&'a toml::Value> {
        self.root.get(section)?.as_table()?.get(key)
    }

    /// Required quantity. Returns NaN (and records an error) on failure.
    pub fn quantity(&mut self, section: &str, key: &str, dim: Dimension) -> f64 {
        match self.optional(section, key, dim) {
            Some(v) => v,
            None => {
                if self.lookup(section, key).is_none() {
                    self.errors.push(FieldError::Missing {
                        field: format!("{section}.{key}"),
                    });
                }
                f64::NAN
            }
        }
    }

    /// Optional quantity; unit errors are still recorded.
    pub fn optional(&mut self, section: &str, key: &str, dim: Dimension) -> Option<f64> {
        let field = format!("{section}.{key}");
        let value = self.lookup(section, key)?;
        let parsed = match value {
            toml::Value::Float(x) => Ok(*x),
            toml::Value::Integer(i) => Ok(*i as f64),
            toml::Value::String(s) => parse_quantity(s, dim).map_err(|e| e.to_string()),
            other => Err(format!("expected number or quantity string, got {}", other.type_str())),
        };
        match parsed {
            Ok(v) => Some(v),
            Err(message) => {
                self.errors.push(FieldError::Unit { field, message });
                None
            }
        }
    }

    pub fn check(&mut self, ok: bool, section: &str, key: &str, reason: &str) {
        if !ok {
            self.errors.push(FieldError::Invalid {
                field: format!("{section}.{key}"),
                reason: reason.to_string(),
            });
        }
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn finish(self) -> Result<(), ConfigError> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError {
                errors: self.errors,
            })
        }
    }
}

pub fn parse_toml(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>().map_err(|e| {
        ConfigError::single(FieldError::Invalid {
            field: "<file>".into(),
            reason: e.to_string(),
        })
    })
}

/// Raw physical inputs, SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub atom_number: f64,
    pub temperature: f64,
    /// Angular trap frequencies (x, y, z), rad/s.
    pub trap_freqs: [f64; 3],
    pub signal_wavelength: f64,
    pub control_wavelength: f64,
    pub signal_waist: f64,
    pub control_waist: f64,
    pub control_power_gate: f64,
    pub control_power_target: f64,
    /// Principal quantum number of the Rydberg state.
    pub principal_n: f64,
    /// Van der Waals coefficient, J m^6 (signed).
    pub c6: f64,
    /// Decay rate of the intermediate state, rad/s.
    pub gamma: f64,
    pub branching_gate: f64,
    pub branching_target: f64,
    /// Ground-state dynamic polarizability at the control wavelength, C m^2/V.
    pub polarizability: f64,
    /// Ground-Rydberg dephasing rate, 1/s.
    pub dephasing_rate: f64,
    pub detection_efficiency: f64,
    pub cycle_time: f64,
    /// Control on-times per cycle at target and gate power.
    pub control_on_time_target: f64,
    pub control_on_time_gate: f64,
    /// Measured effective optical depths (transverse averaged); inputs, not derived.
    pub od_gate: f64,
    pub od_target: f64,
    /// Homogeneous density used for the absorption length, as a fraction of peak.
    pub density_fraction: f64,
    /// Observed target pulse delay.
    pub target_delay: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table = parse_toml(text)?;
        Self::from_table(&table)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::single(FieldError::Invalid {
                field: path.display().to_string(),
                reason: e.to_string(),
            })
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_table(table: &toml::Table) -> Result<Self, ConfigError> {
        use Dimension::*;
        let mut r = FieldReader::new(table);
        let cfg = ExperimentConfig {
            atom_number: r.quantity("cloud", "atom_number", Count),
            temperature: r.quantity("cloud", "temperature", Temperature),
            trap_freqs: [
                r.quantity("cloud", "trap_freq_x", AngularFrequency),
                r.quantity("cloud", "trap_freq_y", AngularFrequency),
                r.quantity("cloud", "trap_freq_z", AngularFrequency),
            ],
            signal_wavelength: r.quantity("light", "signal_wavelength", Length),
            control_wavelength: r.quantity("light", "control_wavelength", Length),
            signal_waist: r.quantity("light", "signal_waist", Length),
            control_waist: r.quantity("light", "control_waist", Length),
            control_power_gate: r.quantity("light", "control_power_gate", Power),
            control_power_target: r.quantity("light", "control_power_target", Power),
            principal_n: r.quantity("atom", "principal_n", Count),
            c6: r.quantity("atom", "c6", C6),
            gamma: r.quantity("atom", "gamma", AngularFrequency),
            branching_gate: r.quantity("atom", "branching_gate", Dimensionless),
            branching_target: r.quantity("atom", "branching_target", Dimensionless),
            polarizability: r.quantity("atom", "polarizability", Polarizability),
            dephasing_rate: r.quantity("medium", "dephasing_rate", Rate),
            od_gate: r.quantity("medium", "od_gate", Dimensionless),
            od_target: r.quantity("medium", "od_target", Dimensionless),
            density_fraction: r.quantity("medium", "density_fraction", Dimensionless),
            detection_efficiency: r.quantity("detection", "detection_efficiency", Dimensionless),
            cycle_time: r.quantity("timing", "cycle_time", Time),
            control_on_time_target: r.quantity("timing", "control_on_time_target", Time),
            control_on_time_gate: r.quantity("timing", "control_on_time_gate", Time),
            target_delay: r.quantity("timing", "target_delay", Time),
        };
        if !r.has_errors() {
            cfg.validate_into(&mut r);
        }
        r.finish()?;
        Ok(cfg)
    }

    fn validate_into(&self, r: &mut FieldReader<'_>) {
        let positive = [
            ("cloud", "atom_number", self.atom_number),
            ("cloud", "temperature", self.temperature),
            ("cloud", "trap_freq_x", self.trap_freqs[0]),
            ("cloud", "trap_freq_y", self.trap_freqs[1]),
            ("cloud", "trap_freq_z", self.trap_freqs[2]),
            ("light", "signal_wavelength", self.signal_wavelength),
            ("light", "control_wavelength", self.control_wavelength),
            ("light", "signal_waist", self.signal_waist),
            ("light", "control_waist", self.control_waist),
            ("light", "control_power_gate", self.control_power_gate),
            ("light", "control_power_target", self.control_power_target),
            ("atom", "principal_n", self.principal_n),
            ("atom", "gamma", self.gamma),
            ("medium", "od_gate", self.od_gate),
            ("medium", "od_target", self.od_target),
            ("medium", "density_fraction", self.density_fraction),
            ("timing", "cycle_time", self.cycle_time),
        ];
        for (s, k, v) in positive {
            r.check(v > 0.0, s, k, "must be > 0");
        }
        for (k, v) in [
            ("branching_gate", self.branching_gate),
            ("branching_target", self.branching_target),
        ] {
            r.check(v > 0.0 && v <= 1.0, "atom", k, "must lie in (0, 1]");
        }
        r.check(
            self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0,
            "detection",
            "detection_efficiency",
            "must lie in (0, 1]",
        );
        r.check(self.dephasing_rate >= 0.0, "medium", "dephasing_rate", "must be >= 0");
        r.check(
            self.control_on_time_target >= 0.0 && self.control_on_time_gate >= 0.0,
            "timing",
            "control_on_time_target",
            "on-times must be >= 0",
        );
    }

    /// Fraction of the cycle-averaged dipole potential relative to its peak:
    /// full-power on-time plus the gate on-time weighted by the power ratio.
    pub fn duty_factor(&self) -> f64 {
        let ratio = self.control_power_gate / self.control_power_target;
        (self.control_on_time_target + self.control_on_time_gate * ratio) / self.cycle_time
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_lists_every_missing_field() {
        let err = ExperimentConfig::from_toml_str("").unwrap_err();
        let missing = err.missing_fields();
        assert_eq!(missing.len(), 26);
        assert!(missing.contains(&"cloud.temperature"));
        assert!(missing.contains(&"light.control_waist"));
        assert!(missing.contains(&"timing.target_delay"));
    }

    #[test]
    fn wrong_unit_names_the_field() {
        let text = crate::presets::BASELINE_TOML.replace("control_waist = \"12 um\"", "control_waist = \"12 mW\"");
        assert_ne!(text, crate::presets::BASELINE_TOML);
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert_eq!(err.errors.len(), 1);
        let msg = err.to_string();
        assert!(msg.contains("light.control_waist"), "{msg}");
        assert!(msg.contains("length"), "{msg}");
    }

    #[test]
    fn invalid_values_are_reported() {
        let text = crate::presets::BASELINE_TOML.replace("branching_target = 0.5", "branching_target = 1.5");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("atom.branching_target"));
    }

    #[test]
    fn duty_factor_of_baseline_cycle() {
        let cfg = ExperimentConfig::from_toml_str(crate::presets::BASELINE_TOML).unwrap();
        assert!((cfg.duty_factor() - 0.018).abs() < 1e-15);
    }
}
