//! Spectral grid, wave function storage and the 3D FFT.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis order is (x, y, z); z is the chip normal and the transport direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationGrid {
    /// full box length per axis (m)
    pub extent: [f64; 3],
    /// box centre (m)
    pub center: [f64; 3],
    pub points: [usize; 3],
    /// s
    pub time_step: f64,
}

impl SimulationGrid {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            let n = self.points[i];
            if n < 32 || !n.is_power_of_two() {
                return Err(Error::Config(format!("grid points must be a power of two >= 32, axis {i} has {n}")));
            }
            if !(self.extent[i] > 0.0) || !self.extent[i].is_finite() || !self.center[i].is_finite() {
                return Err(Error::Config(format!("grid extent on axis {i} must be positive")));
            }
        }
        if !(self.time_step > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {}", self.time_step)));
        }
        Ok(())
    }

    /// Box that holds `[z_from, z_to]` plus `margin` times the largest radius on each axis.
    pub fn covering(z_from: f64, z_to: f64, radii: [f64; 3], margin: f64, points: [usize; 3], time_step: f64) -> Self {
        let (lo, hi) = (z_from.min(z_to), z_from.max(z_to));
        let extent = [margin * radii[0], margin * radii[1], hi - lo + margin * radii[2]];
        Self { extent, center: [0.0, 0.0, 0.5 * (lo + hi)], points, time_step }
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..3).map(|i| self.spacing(i)).product()
    }

    pub fn coordinate(&self, axis: usize, k: usize) -> f64 {
        self.center[axis] + (k as f64 - (self.points[axis] / 2) as f64) * self.spacing(axis)
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|k| self.coordinate(axis, k)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis];
        let dk = 2.0 * PI / self.extent[axis];
        (0..n).map(|j| if j < n / 2 { j as f64 * dk } else { (j as f64 - n as f64) * dk }).collect()
    }

    /// Largest kinetic phase hbar k^2 / 2m * dt over the grid.
    pub fn max_kinetic_phase(&self, hbar: f64, mass: f64) -> f64 {
        let k2: f64 = (0..3).map(|i| (PI / self.spacing(i)).powi(2)).sum();
        hbar * k2 / (2.0 * mass) * self.time_step
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.points[1] + j) * self.points[2] + k
    }
}

/// psi on the grid, normalized so that sum |psi|^2 dV = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    pub grid: SimulationGrid,
    pub psi: Vec<Complex64>,
}

impl WaveField {
    pub fn from_fn(grid: SimulationGrid, f: impl Fn(f64, f64, f64) -> Complex64 + Sync) -> Self {
        let xs = grid.coordinates(0);
        let ys = grid.coordinates(1);
        let zs = grid.coordinates(2);
        let plane = grid.points[1] * grid.points[2];
        let mut psi = vec![Complex64::new(0.0, 0.0); grid.len()];
        psi.par_chunks_mut(plane).enumerate().for_each(|(i, slab)| {
            for (j, y) in ys.iter().enumerate() {
                for (k, z) in zs.iter().enumerate() {
                    slab[j * zs.len() + k] = f(xs[i], *y, *z);
                }
            }
        });
        let mut w = Self { grid, psi };
        w.normalize();
        w
    }

    pub fn norm(&self) -> f64 {
        fixed_order_sum(self.psi.len(), |i| self.psi[i].norm_sqr()) * self.grid.cell_volume()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm().sqrt();
        self.psi.par_iter_mut().for_each(|c| *c *= s);
    }

    /// Marginal densities P_x, P_y, P_z (1/m), each integrating to the norm.
    pub fn marginals(&self) -> [Vec<f64>; 3] {
        let [nx, ny, nz] = self.grid.points;
        let mut p = [vec![0.0; nx], vec![0.0; ny], vec![0.0; nz]];
        for i in 0..nx {
            for j in 0..ny {
                let row = &self.psi[self.grid.index(i, j, 0)..self.grid.index(i, j, 0) + nz];
                for (k, c) in row.iter().enumerate() {
                    let d = c.norm_sqr();
                    p[0][i] += d;
                    p[1][j] += d;
                    p[2][k] += d;
                }
            }
        }
        let dv = self.grid.cell_volume();
        for (axis, m) in p.iter_mut().enumerate() {
            let s = dv / self.grid.spacing(axis);
            m.iter_mut().for_each(|v| *v *= s);
        }
        p
    }
}

/// Parallel sum whose rounding does not depend on the thread count or scheduling.
/// `f` is called with every index in `0..len`.
pub fn fixed_order_sum(len: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    const CHUNK: usize = 4096;
    let partial: Vec<f64> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(len)).map(&f).sum())
        .collect();
    partial.iter().sum()
}

/// Mean and standard deviation of a sampled density.
pub fn moments(coords: &[f64], density: &[f64]) -> (f64, f64) {
    let w: f64 = density.iter().sum();
    let mean = coords.iter().zip(density).map(|(x, d)| x * d).sum::<f64>() / w;
    let var = coords.iter().zip(density).map(|(x, d)| (x - mean).powi(2) * d).sum::<f64>() / w;
    (mean, var.sqrt())
}

/// Unnormalized forward and 1/N-normalized inverse 3D transforms.
pub struct Fft3 {
    points: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("points", &self.points).finish()
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

impl Fft3 {
    pub fn new(points: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = points.map(|n| planner.plan_fft_forward(n));
        let inverse = points.map(|n| planner.plan_fft_inverse(n));
        Self { points, forward, inverse }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let s = 1.0 / data.len() as f64;
        data.par_iter_mut().for_each(|c| *c *= s);
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let [nx, ny, nz] = self.points;
        // z lines are contiguous
        data.par_chunks_mut(ny * nz).for_each(|slab| plans[2].process(slab));
        // y: transpose each x slab to make y contiguous
        data.par_chunks_mut(ny * nz).for_each(|slab| {
            let mut t = vec![Complex64::default(); ny * nz];
            transpose(slab, &mut t, ny, nz);
            plans[1].process(&mut t);
            transpose(&t, slab, nz, ny);
        });
        // x: transpose the (nx, ny*nz) matrix
        let mut t = vec![Complex64::default(); data.len()];
        transpose(data, &mut t, nx, ny * nz);
        t.par_chunks_mut(nx).for_each(|line| plans[0].process(line));
        transpose(&t, data, ny * nz, nx);
    }
}
