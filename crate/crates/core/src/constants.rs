//! Physical constants and the trapped-species parameters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REDUCED_PLANCK: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;

/// Rb-87 atomic mass in kg.
pub const RB87_MASS: f64 = 1.443_160e-25;
/// Rb-87 s-wave scattering length, 98.98 Bohr radii.
pub const RB87_SCATTERING_LENGTH: f64 = 98.98 * BOHR_RADIUS;

pub const GAUSS: f64 = 1e-4;
pub const NANOKELVIN: f64 = 1e-9;

/// Species and fundamental constants used throughout the dynamics.
///
/// The magnetic moment converts field magnitude into potential energy,
/// `V = magnetic_moment * |B|`. The default is one Bohr magneton, which is
/// `g_F m_F mu_B` for the |F=2, m_F=2> state of Rb-87.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalConstants {
    pub atom_mass: f64,
    pub scattering_length: f64,
    pub atom_count: f64,
    pub reduced_planck: f64,
    pub boltzmann: f64,
    pub vacuum_permeability: f64,
    pub magnetic_moment: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::rb87()
    }
}

impl PhysicalConstants {
    /// Rb-87 with N = 1e5 condensed atoms.
    pub fn rb87() -> Self {
        Self {
            atom_mass: RB87_MASS,
            scattering_length: RB87_SCATTERING_LENGTH,
            atom_count: 1e5,
            reduced_planck: REDUCED_PLANCK,
            boltzmann: BOLTZMANN,
            vacuum_permeability: VACUUM_PERMEABILITY,
            magnetic_moment: BOHR_MAGNETON,
        }
    }

    pub fn with_atom_count(mut self, n: f64) -> Self {
        self.atom_count = n;
        self
    }

    /// g = 4 pi hbar^2 a_s / m
    pub fn interaction_strength(&self) -> f64 {
        4.0 * PI * self.reduced_planck * self.reduced_planck * self.scattering_length / self.atom_mass
    }

    pub fn to_nanokelvin(&self, energy: f64) -> f64 {
        energy / self.boltzmann / NANOKELVIN
    }

    pub fn from_nanokelvin(&self, nk: f64) -> f64 {
        nk * NANOKELVIN * self.boltzmann
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("atom_mass", self.atom_mass),
            ("scattering_length", self.scattering_length),
            ("atom_count", self.atom_count),
            ("reduced_planck", self.reduced_planck),
            ("boltzmann", self.boltzmann),
            ("vacuum_permeability", self.vacuum_permeability),
            ("magnetic_moment", self.magnetic_moment),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("constant `{name}` must be positive, got {value}")));
            }
        }
        Ok(())
    }
}
