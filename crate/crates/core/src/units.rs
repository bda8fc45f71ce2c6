//! Unit-suffixed quantities for configuration files.
//!
//! A config value is either a bare number, read as SI, or a string
//! `"<number> <unit>"`. Cyclic-frequency units (`Hz`, `kHz`, `MHz`) are
//! converted to angular frequency, so `"5.75 MHz"` means 2 pi x 5.75e6 rad/s.

use std::f64::consts::PI;
use std::fmt;

use crate::constants::CODATA_2018;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Dimensionless,
    Count,
    Length,
    Time,
    Temperature,
    AngularFrequency,
    Rate,
    Power,
    Density,
    C6,
    Polarizability,
    ElectricField,
}

impl Dimension {
    /// Accepted suffixes and their SI multipliers.
    fn units(self) -> &'static [(&'static str, f64)] {
        const TWO_PI: f64 = 2.0 * PI;
        match self {
            Dimension::Dimensionless | Dimension::Count => &[("", 1.0)],
            Dimension::Length => &[
                ("m", 1.0),
                ("cm", 1e-2),
                ("mm", 1e-3),
                ("um", 1e-6),
                ("μm", 1e-6),
                ("nm", 1e-9),
            ],
            Dimension::Time => &[
                ("s", 1.0),
                ("ms", 1e-3),
                ("us", 1e-6),
                ("μs", 1e-6),
                ("ns", 1e-9),
            ],
            Dimension::Temperature => &[
                ("K", 1.0),
                ("mK", 1e-3),
                ("uK", 1e-6),
                ("μK", 1e-6),
                ("nK", 1e-9),
            ],
            Dimension::AngularFrequency => &[
                ("rad/s", 1.0),
                ("Hz", TWO_PI),
                ("kHz", TWO_PI * 1e3),
                ("MHz", TWO_PI * 1e6),
            ],
            Dimension::Rate => &[
                ("1/s", 1.0),
                ("1/ms", 1e3),
                ("1/us", 1e6),
                ("1/μs", 1e6),
            ],
            Dimension::Power => &[("W", 1.0), ("mW", 1e-3), ("uW", 1e-6), ("μW", 1e-6)],
            Dimension::Density => &[("m^-3", 1.0), ("cm^-3", 1e6)],
            Dimension::C6 => &[("J m^6", 1.0), ("Eh a0^6", f64::NAN)],
            Dimension::Polarizability => &[("C m^2/V", 1.0), ("au", f64::NAN)],
            Dimension::ElectricField => &[("V/m", 1.0), ("kV/m", 1e3), ("MV/m", 1e6)],
        }
    }

    fn multiplier(self, unit: &str) -> Option<f64> {
        let (_, m) = self.units().iter().find(|(u, _)| *u == unit)?;
        if m.is_nan() {
            // atomic units depend on constants
            let c = CODATA_2018;
            return Some(match self {
                Dimension::C6 => c.c6_au(),
                Dimension::Polarizability => c.polarizability_au(),
                _ => unreachable!(),
            });
        }
        Some(*m)
    }

    pub fn accepted(self) -> String {
        self.units()
            .iter()
            .map(|(u, _)| if u.is_empty() { "<none>" } else { u })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dimension::Dimensionless => "dimensionless",
            Dimension::Count => "count",
            Dimension::Length => "length",
            Dimension::Time => "time",
            Dimension::Temperature => "temperature",
            Dimension::AngularFrequency => "angular frequency",
            Dimension::Rate => "rate",
            Dimension::Power => "power",
            Dimension::Density => "number density",
            Dimension::C6 => "van der Waals coefficient",
            Dimension::Polarizability => "polarizability",
            Dimension::ElectricField => "electric field",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantityError {
    Malformed(String),
    UnknownUnit { unit: String, dimension: Dimension },
}

impl fmt::Display for QuantityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantityError::Malformed(s) => write!(f, "cannot parse `{s}` as a quantity"),
            QuantityError::UnknownUnit { unit, dimension } => write!(
                f,
                "unit `{unit}` is not a {dimension} unit (accepted: {})",
                dimension.accepted()
            ),
        }
    }
}

/// Parses `"<number> <unit>"` into an SI value of the given dimension.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, QuantityError> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| QuantityError::Malformed(text.to_string()))?;
    let unit = unit.trim();
    let mult = dim
        .multiplier(unit)
        .ok_or_else(|| QuantityError::UnknownUnit {
            unit: unit.to_string(),
            dimension: dim,
        })?;
    Ok(value * mult)
}

/// Rounds `x` to `digits` significant figures.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - mag);
    (x * scale).round() / scale
}
