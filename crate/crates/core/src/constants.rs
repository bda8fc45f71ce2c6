//! Physical constants (CODATA 2018), SI units throughout.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Speed of light, m/s.
    pub c: f64,
    /// Vacuum permittivity, F/m.
    pub eps0: f64,
    /// Bohr radius, m.
    pub a0: f64,
    /// Elementary charge, C.
    pub e_charge: f64,
    /// Electron mass, kg.
    pub m_electron: f64,
    /// Mass of a 87Rb atom, kg.
    pub m_rb87: f64,
    /// Hartree energy, J.
    pub e_hartree: f64,
}

pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    k_b: 1.380_649e-23,
    c: 299_792_458.0,
    eps0: 8.854_187_812_8e-12,
    a0: 5.291_772_109_03e-11,
    e_charge: 1.602_176_634e-19,
    m_electron: 9.109_383_701_5e-31,
    // 86.909180531 u
    m_rb87: 86.909_180_531 * 1.660_539_066_60e-27,
    // hbar^2 / (m_e a0^2); agrees with the tabulated 4.3597447222071e-18 J to 1.2e-9
    e_hartree: 1.054_571_817e-34 * 1.054_571_817e-34
        / (9.109_383_701_5e-31 * 5.291_772_109_03e-11 * 5.291_772_109_03e-11),
};

impl Default for PhysicalConstants {
    fn default() -> Self {
        CODATA_2018
    }
}

impl PhysicalConstants {
    /// Hartree energy rebuilt from hbar, the electron mass and the Bohr radius.
    pub fn hartree_from_atomic_units(&self) -> f64 {
        self.hbar * self.hbar / (self.m_electron * self.a0 * self.a0)
    }

    /// Atomic unit of polarizability, 4 pi eps0 a0^3 in C m^2/V.
    pub fn polarizability_au(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.eps0 * self.a0.powi(3)
    }

    /// Atomic unit of the van der Waals coefficient, E_h a0^6 in J m^6.
    pub fn c6_au(&self) -> f64 {
        self.e_hartree * self.a0.powi(6)
    }

    /// Dipole moment unit e a0, in C m.
    pub fn dipole_au(&self) -> f64 {
        self.e_charge * self.a0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive() {
        let c = CODATA_2018;
        for v in [
            c.hbar,
            c.k_b,
            c.c,
            c.eps0,
            c.a0,
            c.e_charge,
            c.m_electron,
            c.m_rb87,
            c.e_hartree,
        ] {
            assert!(v > 0.0);
        }
    }

    #[test]
    fn hartree_consistent_with_atomic_units() {
        let c = CODATA_2018;
        let rel = (c.hartree_from_atomic_units() / c.e_hartree - 1.0).abs();
        assert!(rel < 1e-12, "relative mismatch {rel}");
    }
}
