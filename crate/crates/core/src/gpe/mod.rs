//! Independent check of the scaling model with the 3D Gross-Pitaevskii equation.

pub mod compare;
pub mod grid;
pub mod potential;
pub mod solver;

pub use compare::{compare_with_scaling, DeviationReport};
pub use grid::{fixed_order_sum, moments, Fft3, SimulationGrid, WaveField};
pub use potential::{chip_potential, ChipPotential, HarmonicPotential, Potential};
pub use solver::{EnergyParts, GpeSolver, GroundStateRun, MarginalRecord};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, GAUSS};
use crate::dynamics::{GroundStateSpec, StateHistory};
use crate::error::{Error, Result};
use crate::experiment::simulate_ramp;
use crate::oct::{initial_ground_state, ModelOptions};
use crate::ramp::{sta_ramp_with, ControlRamp, RampEndpoints};
use crate::trap::{CharacterizeOptions, ChipGeometry, MapSample, TrapMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialModel {
    /// harmonic trap following the scaling model's trap trajectory
    Harmonic,
    /// Biot-Savart field of the chip, cached over the ramp's bias range
    Chip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpeSettings {
    pub points: [usize; 3],
    /// s
    pub time_step: f64,
    /// box = transport path plus `margin` times the largest TF radius per axis
    pub margin: f64,
    pub record_every: usize,
    /// s
    pub hold_time: f64,
    pub ground_tolerance: f64,
    pub ground_max_steps: usize,
    pub cache_samples: usize,
    pub potential: PotentialModel,
    /// allowed |com - z_A| as a fraction of the transport distance
    pub com_tolerance: f64,
    /// allowed relative width deviation
    pub width_tolerance: f64,
}

impl Default for GpeSettings {
    fn default() -> Self {
        Self {
            points: [64; 3],
            time_step: 1e-6,
            margin: 4.0,
            record_every: 500,
            hold_time: 0.1,
            ground_tolerance: 1e-10,
            ground_max_steps: 100_000,
            cache_samples: 64,
            potential: PotentialModel::Chip,
            com_tolerance: 0.02,
            width_tolerance: 0.05,
        }
    }
}

impl GpeSettings {
    /// Settings for [`harmonic_scenario`]: harmonic potential, 10 us steps, 10 ms hold.
    pub fn harmonic_demo() -> Self {
        Self {
            time_step: 1e-5,
            hold_time: 0.01,
            record_every: 100,
            potential: PotentialModel::Harmonic,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.points.iter().enumerate() {
            if *n < 32 || !n.is_power_of_two() {
                return Err(Error::Config(format!("gpe points must be powers of two >= 32, axis {i} has {n}")));
            }
        }
        let positive =
            [("time_step", self.time_step), ("margin", self.margin), ("ground_tolerance", self.ground_tolerance)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("gpe.{name} must be positive, got {v}")));
            }
        }
        if !(self.hold_time >= 0.0) || !(self.com_tolerance >= 0.0) || !(self.width_tolerance >= 0.0) {
            return Err(Error::Config("gpe hold time and tolerances must be non-negative".into()));
        }
        if self.record_every == 0 || self.ground_max_steps == 0 || self.cache_samples < 2 {
            return Err(Error::Config("gpe record_every and ground_max_steps must be >= 1, cache_samples >= 2".into()));
        }
        Ok(())
    }
}

/// Full result of one GPE-vs-scaling comparison.
#[derive(Debug, Clone)]
pub struct Verification {
    pub grid: SimulationGrid,
    pub ground: GroundStateSpec,
    pub history: StateHistory,
    pub record: MarginalRecord,
    pub report: DeviationReport,
    /// |z0(t_f) - z0(0)| (m)
    pub transport_distance: f64,
    pub ground_state_energies: Vec<f64>,
}

impl Verification {
    pub fn com_fraction(&self) -> f64 {
        self.report.max_center_of_mass() / self.transport_distance
    }

    pub fn passes(&self, settings: &GpeSettings) -> bool {
        self.com_fraction() <= settings.com_tolerance
            && self.report.max_width().iter().all(|w| *w <= settings.width_tolerance)
    }
}

fn thomas_fermi_guess(grid: SimulationGrid, radii: [f64; 3], z0: f64) -> WaveField {
    WaveField::from_fn(grid, |x, y, z| {
        let s = 1.0 - (x / radii[0]).powi(2) - (y / radii[1]).powi(2) - ((z - z0) / radii[2]).powi(2);
        Complex64::new(s.max(0.0).sqrt() + 1e-4, 0.0)
    })
}

/// Runs the scaling model and the GPE on the same ramp and compares them.
pub fn verify_ramp(
    ramp: &ControlRamp,
    map: &TrapMap,
    geometry: Option<&ChipGeometry>,
    c: &PhysicalConstants,
    model: &ModelOptions,
    settings: &GpeSettings,
) -> Result<Verification> {
    settings.validate()?;
    let ground = initial_ground_state(map, ramp, c)?;
    let history = simulate_ramp(ramp, map, model, settings.hold_time)?;
    let z_start = history.traps[0].z0;
    let z_end = history.traps[history.transport_end].z0;
    // widest extent the scaling model predicts on each axis
    let reach: [f64; 3] =
        std::array::from_fn(|i| history.states.iter().map(|s| s.lambda()[i]).fold(1.0, f64::max) * ground.radii[i]);
    let grid = SimulationGrid::covering(z_start, z_end, reach, settings.margin, settings.points, settings.time_step);
    let solver = GpeSolver::new(grid, c)?;
    let potential: Box<dyn Potential> = match settings.potential {
        PotentialModel::Harmonic => Box::new(HarmonicPotential::from_history(grid, &history, c.atom_mass)),
        PotentialModel::Chip => {
            let geometry = geometry.ok_or_else(|| Error::Config("chip potential needs a chip geometry".into()))?;
            Box::new(ChipPotential::new(
                &grid,
                geometry,
                c,
                ramp,
                settings.cache_samples,
                &CharacterizeOptions::default(),
            )?)
        }
    };
    let guess = thomas_fermi_guess(grid, ground.radii, z_start);
    let gs =
        solver.ground_state(guess, potential.as_ref(), 0.0, settings.ground_tolerance, settings.ground_max_steps)?;
    let mut field = gs.field;
    let total = history.times[history.times.len() - 1];
    let steps = (total / settings.time_step).round() as usize;
    log::info!("GPE: {} points, {steps} steps of {:.2e} s", grid.len(), settings.time_step);
    let record = solver.propagate(&mut field, potential.as_ref(), 0.0, steps, settings.record_every)?;
    let report = compare_with_scaling(&record, &history, &ground)?;
    Ok(Verification {
        grid,
        ground,
        history,
        record,
        report,
        transport_distance: (z_end - z_start).abs(),
        ground_state_energies: gs.energies,
    })
}

/// Trap map whose position and frequencies vary linearly between two samples.
pub fn linear_map(start: MapSample, end: MapSample, samples: usize) -> Result<TrapMap> {
    if samples < 2 {
        return Err(Error::InvalidInput("linear map needs at least two samples".into()));
    }
    let v = (0..samples)
        .map(|k| {
            let f = k as f64 / (samples - 1) as f64;
            let mix = |a: f64, b: f64| a + f * (b - a);
            MapSample {
                bias_field: mix(start.bias_field, end.bias_field),
                minimum_distance: mix(start.minimum_distance, end.minimum_distance),
                omega: std::array::from_fn(|i| mix(start.omega[i], end.omega[i])),
                rotation_angle: mix(start.rotation_angle, end.rotation_angle),
            }
        })
        .collect();
    TrapMap::from_samples(v)
}

/// Reduced-scale harmonic scenario: 9 um transport in 30 ms between traps of
/// 2pi (30, 80, 80) Hz and 2pi (20, 50, 50) Hz, STA ramp.
pub fn harmonic_scenario() -> Result<(TrapMap, ControlRamp)> {
    let hz = |f: [f64; 3]| f.map(|x| 2.0 * std::f64::consts::PI * x);
    let start = MapSample {
        bias_field: 12.0 * GAUSS,
        minimum_distance: 0.500e-3,
        omega: hz([30.0, 80.0, 80.0]),
        rotation_angle: 0.0,
    };
    let end = MapSample {
        bias_field: 4.0 * GAUSS,
        minimum_distance: 0.512e-3,
        omega: hz([20.0, 50.0, 50.0]),
        rotation_angle: 0.0,
    };
    let map = linear_map(start, end, 33)?;
    let endpoints = RampEndpoints { bias_start: 11.0 * GAUSS, bias_end: 5.0 * GAUSS, u_start: 0.0, u_end: 1.0 };
    let ramp = sta_ramp_with(0.03, &map, 256, endpoints)?;
    Ok((map, ramp))
}
