//! Time-dependent external potentials on the grid.

use rayon::prelude::*;

use super::grid::SimulationGrid;
use crate::constants::PhysicalConstants;
use crate::dynamics::StateHistory;
use crate::error::{Error, Result};
use crate::ramp::{ControlRamp, TrapState};
use crate::trap::{characterize_trap, field_at, CharacterizeOptions, ChipGeometry, Vec3};

pub trait Potential: Send + Sync {
    /// V (J) on every grid point at time `t`.
    fn fill(&self, t: f64, out: &mut [f64]) -> Result<()>;
}

/// Separable harmonic trap centred on (0, 0, z0(t)).
#[derive(Debug, Clone)]
pub struct HarmonicPotential {
    grid: SimulationGrid,
    mass: f64,
    t0: f64,
    dt: f64,
    traps: Vec<TrapState>,
}

impl HarmonicPotential {
    pub fn static_trap(grid: SimulationGrid, trap: TrapState, mass: f64) -> Self {
        Self { grid, mass, t0: 0.0, dt: 1.0, traps: vec![trap] }
    }

    /// Follows the trap samples of a scaling-model run; the last one is held afterwards.
    pub fn from_history(grid: SimulationGrid, history: &StateHistory, mass: f64) -> Self {
        Self { grid, mass, t0: history.times[0], dt: history.dt(), traps: history.traps.clone() }
    }

    pub fn trap_at(&self, t: f64) -> TrapState {
        let n = self.traps.len();
        let s = ((t - self.t0) / self.dt).max(0.0);
        let k = s.floor() as usize;
        if k + 1 >= n {
            return self.traps[n - 1];
        }
        self.traps[k].lerp(&self.traps[k + 1], s - k as f64)
    }
}

impl Potential for HarmonicPotential {
    fn fill(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let trap = self.trap_at(t);
        let g = &self.grid;
        let half_m = 0.5 * self.mass;
        let vx: Vec<f64> = g.coordinates(0).iter().map(|x| half_m * trap.omega_sq[0] * x * x).collect();
        let vy: Vec<f64> = g.coordinates(1).iter().map(|y| half_m * trap.omega_sq[1] * y * y).collect();
        let vz: Vec<f64> = g.coordinates(2).iter().map(|z| half_m * trap.omega_sq[2] * (z - trap.z0).powi(2)).collect();
        let plane = g.points[1] * g.points[2];
        out.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
            for (j, y) in vy.iter().enumerate() {
                for (k, z) in vz.iter().enumerate() {
                    slab[j * vz.len() + k] = vx[i] + y + z;
                }
            }
        });
        Ok(())
    }
}

/// kappa (|B(r)| - |B_min|) of the Z-wire surrogate at one bias value.
pub fn chip_potential(
    grid: &SimulationGrid,
    geometry: &ChipGeometry,
    bias_field: f64,
    c: &PhysicalConstants,
    options: &CharacterizeOptions,
) -> Result<Vec<f64>> {
    let lowest = grid.coordinate(2, 0);
    if !(lowest > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "grid reaches z = {lowest:.3e} m, at or below the chip surface carrying the wires"
        )));
    }
    let trap = characterize_trap(geometry, c, bias_field, options)?;
    let floor = trap.field_at_minimum;
    let (xs, ys, zs) = (grid.coordinates(0), grid.coordinates(1), grid.coordinates(2));
    let plane = grid.points[1] * grid.points[2];
    let mut v = vec![0.0; grid.len()];
    v.par_chunks_mut(plane).enumerate().try_for_each(|(i, slab)| -> Result<()> {
        for (j, y) in ys.iter().enumerate() {
            for (k, z) in zs.iter().enumerate() {
                let b = field_at(&Vec3::new(xs[i], *y, *z), geometry, bias_field)?;
                slab[j * zs.len() + k] = c.magnetic_moment * (b.norm() - floor);
            }
        }
        Ok(())
    })?;
    Ok(v)
}

/// Chip potential under a ramp: fields cached at evenly spaced biases and
/// linearly interpolated in B.
#[derive(Debug, Clone)]
pub struct ChipPotential {
    biases: Vec<f64>,
    samples: Vec<Vec<f64>>,
    final_time: f64,
    ramp: ControlRamp,
}

impl ChipPotential {
    pub fn new(
        grid: &SimulationGrid,
        geometry: &ChipGeometry,
        c: &PhysicalConstants,
        ramp: &ControlRamp,
        sample_count: usize,
        options: &CharacterizeOptions,
    ) -> Result<Self> {
        if sample_count < 2 {
            return Err(Error::Config(format!("need at least two cached bias samples, got {sample_count}")));
        }
        let profile = ramp.bias_profile();
        let lo = profile.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let biases: Vec<f64> = if hi > lo {
            (0..sample_count).map(|k| lo + (hi - lo) * k as f64 / (sample_count - 1) as f64).collect()
        } else {
            vec![lo, lo]
        };
        let samples =
            biases.iter().map(|&b| chip_potential(grid, geometry, b, c, options)).collect::<Result<Vec<_>>>()?;
        Ok(Self { biases, samples, final_time: ramp.final_time(), ramp: ramp.clone() })
    }

    pub fn bias_at(&self, t: f64) -> f64 {
        let tf = self.final_time;
        let n = self.ramp.node_count();
        let s = (t.clamp(0.0, tf) / tf) * (n - 1) as f64;
        let k = (s.floor() as usize).min(n - 2);
        let f = s - k as f64;
        (1.0 - f) * self.ramp.bias_at_node(k) + f * self.ramp.bias_at_node(k + 1)
    }
}

impl Potential for ChipPotential {
    fn fill(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let b = self.bias_at(t);
        let (lo, hi) = (self.biases[0], self.biases[self.biases.len() - 1]);
        let s = if hi > lo { ((b - lo) / (hi - lo)).clamp(0.0, 1.0) * (self.biases.len() - 1) as f64 } else { 0.0 };
        let k = (s.floor() as usize).min(self.biases.len() - 2);
        let f = s - k as f64;
        let (a, c) = (&self.samples[k], &self.samples[k + 1]);
        out.par_iter_mut().zip(a.par_iter().zip(c.par_iter())).for_each(|(o, (a, c))| *o = (1.0 - f) * a + f * c);
        Ok(())
    }
}
