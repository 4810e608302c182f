//! Strang split-step propagation in real and imaginary time.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::grid::{fixed_order_sum, moments, Fft3, SimulationGrid, WaveField};
use super::potential::Potential;
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct GpeSolver {
    grid: SimulationGrid,
    fft: Fft3,
    /// hbar k^2 / 2m per grid point, FFT order (rad/s)
    kinetic: Vec<f64>,
    hbar: f64,
    /// g N (J m^3)
    coupling: f64,
}

/// Energy per particle split into its parts (J).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub potential: f64,
    pub interaction: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential + self.interaction
    }
}

impl GpeSolver {
    pub fn new(grid: SimulationGrid, c: &PhysicalConstants) -> Result<Self> {
        grid.validate()?;
        c.validate()?;
        let phase = grid.max_kinetic_phase(c.reduced_planck, c.atom_mass);
        if phase > std::f64::consts::PI {
            return Err(Error::Config(format!(
                "time step {:.3e} s too large for the grid: largest kinetic phase {phase:.2} rad exceeds pi",
                grid.time_step
            )));
        }
        let k = [grid.wavenumbers(0), grid.wavenumbers(1), grid.wavenumbers(2)];
        let scale = c.reduced_planck / (2.0 * c.atom_mass);
        let mut kinetic = vec![0.0; grid.len()];
        let plane = grid.points[1] * grid.points[2];
        kinetic.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
            for (j, ky) in k[1].iter().enumerate() {
                for (l, kz) in k[2].iter().enumerate() {
                    slab[j * k[2].len() + l] = scale * (k[0][i] * k[0][i] + ky * ky + kz * kz);
                }
            }
        });
        Ok(Self {
            grid,
            fft: Fft3::new(grid.points),
            kinetic,
            hbar: c.reduced_planck,
            coupling: c.interaction_strength() * c.atom_count,
        })
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    fn check_field(&self, field: &WaveField) -> Result<()> {
        if field.grid != self.grid {
            return Err(Error::InvalidInput("wave field lives on a different grid".into()));
        }
        Ok(())
    }

    pub fn energy(&self, field: &WaveField, potential: &[f64]) -> EnergyParts {
        let dv = self.grid.cell_volume();
        let mut k = field.psi.clone();
        self.fft.forward(&mut k);
        let n = k.len() as f64;
        let kinetic = self.hbar * fixed_order_sum(k.len(), |i| k[i].norm_sqr() * self.kinetic[i]) * dv / n;
        let pot = fixed_order_sum(k.len(), |i| field.psi[i].norm_sqr() * potential[i]);
        let int = fixed_order_sum(k.len(), |i| field.psi[i].norm_sqr().powi(2));
        EnergyParts { kinetic, potential: pot * dv, interaction: 0.5 * self.coupling * int * dv }
    }

    /// psi <- exp(-(V + gN|psi|^2) * factor / hbar) psi with factor = i dt/2 or tau/2.
    fn potential_half(&self, psi: &mut [Complex64], v: &[f64], factor: Complex64) {
        let (g, hbar) = (self.coupling, self.hbar);
        psi.par_iter_mut().zip(v).for_each(|(c, v)| {
            let e = v + g * c.norm_sqr();
            *c *= (-factor * (e / hbar)).exp();
        });
    }

    fn kinetic_full(&self, psi: &mut [Complex64], factor: Complex64) {
        self.fft.forward(psi);
        psi.par_iter_mut().zip(&self.kinetic).for_each(|(c, e)| *c *= (-factor * e).exp());
        self.fft.inverse(psi);
    }

    fn step(&self, psi: &mut [Complex64], v_now: &[f64], v_next: &[f64], factor: Complex64) {
        self.potential_half(psi, v_now, 0.5 * factor);
        self.kinetic_full(psi, factor);
        self.potential_half(psi, v_next, 0.5 * factor);
    }

    /// Imaginary-time relaxation in the potential at `t`; stops when the relative
    /// energy change per step drops below `tolerance`.
    pub fn ground_state(
        &self,
        initial: WaveField,
        potential: &dyn Potential,
        t: f64,
        tolerance: f64,
        max_steps: usize,
    ) -> Result<GroundStateRun> {
        self.check_field(&initial)?;
        let mut v = vec![0.0; self.grid.len()];
        potential.fill(t, &mut v)?;
        let mut field = initial;
        field.normalize();
        let factor = Complex64::new(self.grid.time_step, 0.0);
        let mut energies = vec![self.energy(&field, &v).total()];
        for _ in 0..max_steps {
            self.step(&mut field.psi, &v, &v, factor);
            field.normalize();
            let e = self.energy(&field, &v).total();
            let prev = *energies.last().unwrap_or(&e);
            energies.push(e);
            if ((e - prev) / e).abs() < tolerance {
                return Ok(GroundStateRun { field, energies });
            }
        }
        let tail: Vec<String> = energies.iter().rev().take(5).map(|e| format!("{e:.10e}")).collect();
        Err(Error::NotConverged(format!(
            "imaginary-time relaxation after {max_steps} steps; last energies (J): {}",
            tail.join(", ")
        )))
    }

    /// Real-time evolution from `t0` for `steps` steps, recording every `record_every`.
    pub fn propagate(
        &self,
        field: &mut WaveField,
        potential: &dyn Potential,
        t0: f64,
        steps: usize,
        record_every: usize,
    ) -> Result<MarginalRecord> {
        self.check_field(field)?;
        let dt = self.grid.time_step;
        let every = record_every.max(1);
        let mut record = MarginalRecord::new(&self.grid);
        record.push(t0, field);
        let mut v_now = vec![0.0; self.grid.len()];
        let mut v_next = vec![0.0; self.grid.len()];
        potential.fill(t0, &mut v_now)?;
        let factor = Complex64::new(0.0, dt);
        let norm0 = field.norm();
        for n in 1..=steps {
            let t = t0 + n as f64 * dt;
            potential.fill(t, &mut v_next)?;
            self.step(&mut field.psi, &v_now, &v_next, factor);
            std::mem::swap(&mut v_now, &mut v_next);
            let norm = field.norm();
            record.max_norm_drift = record.max_norm_drift.max((norm - norm0).abs());
            if (norm - norm0).abs() > 1e-6 {
                return Err(Error::NumericalInstability(format!(
                    "norm drifted from {norm0:.12} to {norm:.12} at t = {t:.6e} s (step {n})"
                )));
            }
            if n % every == 0 || n == steps {
                record.push(t, field);
            }
        }
        Ok(record)
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateRun {
    pub field: WaveField,
    /// energy per particle after every step (J)
    pub energies: Vec<f64>,
}

/// Marginal densities and their first two moments at the recorded times.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalRecord {
    pub coordinates: [Vec<f64>; 3],
    pub times: Vec<f64>,
    pub marginals: Vec<[Vec<f64>; 3]>,
    pub center_of_mass: Vec<[f64; 3]>,
    pub sigma: Vec<[f64; 3]>,
    /// largest |norm - initial norm| seen while propagating
    pub max_norm_drift: f64,
}

impl MarginalRecord {
    pub fn new(grid: &SimulationGrid) -> Self {
        Self {
            coordinates: [grid.coordinates(0), grid.coordinates(1), grid.coordinates(2)],
            times: vec![],
            marginals: vec![],
            center_of_mass: vec![],
            sigma: vec![],
            max_norm_drift: 0.0,
        }
    }

    pub fn push(&mut self, t: f64, field: &WaveField) {
        let m = field.marginals();
        let mut com = [0.0; 3];
        let mut sd = [0.0; 3];
        for axis in 0..3 {
            (com[axis], sd[axis]) = moments(&self.coordinates[axis], &m[axis]);
        }
        self.times.push(t);
        self.marginals.push(m);
        self.center_of_mass.push(com);
        self.sigma.push(sd);
    }

    /// `t,coordinate,density` for one axis, SI units.
    pub fn axis_csv(&self, axis: usize) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("t,coordinate,density\n");
        for (t, m) in self.times.iter().zip(&self.marginals) {
            for (x, d) in self.coordinates[axis].iter().zip(&m[axis]) {
                let _ = writeln!(out, "{t:e},{x:e},{d:e}");
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("t,com_x,com_y,com_z,sigma_x,sigma_y,sigma_z\n");
        for ((t, c), s) in self.times.iter().zip(&self.center_of_mass).zip(&self.sigma) {
            let _ = writeln!(out, "{t:e},{:e},{:e},{:e},{:e},{:e},{:e}", c[0], c[1], c[2], s[0], s[1], s[2]);
        }
        out
    }
}
