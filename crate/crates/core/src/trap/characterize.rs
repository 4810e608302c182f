//! Trap minimum, curvature and eigen-frequencies at a fixed bias field.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::field::{field_magnitude_unchecked, wire_field_at, ChipGeometry, Vec3};
use crate::constants::{PhysicalConstants, GAUSS};
use crate::error::{Error, Result};

/// Geometry of the harmonic approximation around the field minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapCharacterization {
    /// Bias field magnitude (T).
    pub bias_field: f64,
    /// Height of the minimum above the chip (m).
    pub minimum_distance: f64,
    /// Full position of the minimum (m).
    pub minimum_position: [f64; 3],
    /// |B| at the minimum (T).
    pub field_at_minimum: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    /// Angle of the weak eigen-axis x from the wire axis, in (-pi/2, pi/2].
    pub rotation_angle: f64,
    /// Potential-energy Hessian at the minimum (J/m^2), chip coordinates.
    pub hessian: [[f64; 3]; 3],
}

impl TrapCharacterization {
    pub fn omega(&self) -> [f64; 3] {
        [self.omega_x, self.omega_y, self.omega_z]
    }

    pub fn omega_sq(&self) -> [f64; 3] {
        [self.omega_x.powi(2), self.omega_y.powi(2), self.omega_z.powi(2)]
    }

    /// Potential Hessian rebuilt from frequencies and rotation angle
    /// (in-plane block plus zz; the x-z and y-z couplings are not represented).
    pub fn reconstructed_hessian(&self, atom_mass: f64) -> [[f64; 3]; 3] {
        let (s, c) = self.rotation_angle.sin_cos();
        let kx = atom_mass * self.omega_x.powi(2);
        let ky = atom_mass * self.omega_y.powi(2);
        let kz = atom_mass * self.omega_z.powi(2);
        [
            [kx * c * c + ky * s * s, (kx - ky) * s * c, 0.0],
            [(kx - ky) * s * c, kx * s * s + ky * c * c, 0.0],
            [0.0, 0.0, kz],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizeOptions {
    /// Central-difference step for the Hessian (m).
    pub hessian_step: f64,
    /// Central-difference step for the gradient in the Newton refinement (m).
    pub gradient_step: f64,
    /// Search window along the chip normal (m).
    pub search_min: f64,
    pub search_max: f64,
}

impl Default for CharacterizeOptions {
    fn default() -> Self {
        Self { hessian_step: 1e-7, gradient_step: 1e-7, search_min: 20e-6, search_max: 50e-3 }
    }
}

const SCAN_POINTS: usize = 400;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the |B| minimum along the normal through the chip centre.
pub fn minimum_along_normal(geometry: &ChipGeometry, bias_field: f64, options: &CharacterizeOptions) -> Result<f64> {
    let f = |z: f64| field_magnitude_unchecked(&Vec3::new(0.0, 0.0, z), geometry, bias_field);
    let (lo, hi) = (options.search_min.ln(), options.search_max.ln());
    let zs: Vec<f64> = (0..SCAN_POINTS).map(|i| (lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64).exp()).collect();
    let values: Vec<f64> = zs.iter().map(|&z| f(z)).collect();
    let (k, _) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty scan");
    if k == 0 || k == SCAN_POINTS - 1 {
        return Err(Error::TrapNotFound { bias_gauss: bias_field / GAUSS });
    }
    let (mut a, mut b) = (zs[k - 1], zs[k + 1]);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > 1e-13 * (a + b) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    Ok(0.5 * (a + b))
}

fn gradient(f: &dyn Fn(&Vec3) -> f64, p: &Vec3, h: f64) -> Vec3 {
    let mut g = Vec3::zeros();
    for i in 0..3 {
        let mut e = Vec3::zeros();
        e[i] = h;
        g[i] = (f(&(p + e)) - f(&(p - e))) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian of a scalar field.
pub fn finite_difference_hessian(f: &dyn Fn(&Vec3) -> f64, p: &Vec3, h: f64) -> Matrix3<f64> {
    let mut hess = Matrix3::zeros();
    let f0 = f(p);
    for i in 0..3 {
        let mut ei = Vec3::zeros();
        ei[i] = h;
        hess[(i, i)] = (f(&(p + ei)) - 2.0 * f0 + f(&(p - ei))) / (h * h);
        for j in (i + 1)..3 {
            let mut ej = Vec3::zeros();
            ej[j] = h;
            let v = (f(&(p + ei + ej)) - f(&(p + ei - ej)) - f(&(p - ei + ej)) + f(&(p - ei - ej))) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Locates the 3D field-magnitude minimum: bracketed search along the normal,
/// then Newton iterations on the finite-difference gradient.
pub fn locate_trap_minimum(geometry: &ChipGeometry, bias_field: f64, options: &CharacterizeOptions) -> Result<Vec3> {
    geometry.validate()?;
    let z = minimum_along_normal(geometry, bias_field, options)?;
    let f = |p: &Vec3| field_magnitude_unchecked(p, geometry, bias_field);
    let mut p = Vec3::new(0.0, 0.0, z);
    for _ in 0..60 {
        let g = gradient(&f, &p, options.gradient_step);
        let h = finite_difference_hessian(&f, &p, options.hessian_step);
        let Some(step) = h.lu().solve(&(-g)) else {
            return Err(Error::TrapNotFound { bias_gauss: bias_field / GAUSS });
        };
        // keep Newton steps local to the bracketed minimum
        let max_step = 0.1 * p.z;
        let step = if step.norm() > max_step { step * (max_step / step.norm()) } else { step };
        p += step;
        if !(p.z > 0.0) || !p.iter().all(|x| x.is_finite()) {
            return Err(Error::TrapNotFound { bias_gauss: bias_field / GAUSS });
        }
        if step.norm() < 1e-13 {
            break;
        }
    }
    Ok(p)
}

/// Characterizes the trap at one bias value.
pub fn characterize_trap(
    geometry: &ChipGeometry,
    constants: &PhysicalConstants,
    bias_field: f64,
    options: &CharacterizeOptions,
) -> Result<TrapCharacterization> {
    let p = locate_trap_minimum(geometry, bias_field, options)?;
    // the wire check turns a probe on a filament into a proper error
    wire_field_at(&p, geometry)?;
    let kappa = constants.magnetic_moment;
    let f = |q: &Vec3| kappa * field_magnitude_unchecked(q, geometry, bias_field);
    let hess = finite_difference_hessian(&f, &p, options.hessian_step);

    let full = SymmetricEigen::new(hess);
    let mut ev = [full.eigenvalues[0], full.eigenvalues[1], full.eigenvalues[2]];
    ev.sort_by(f64::total_cmp);
    if ev.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::UnstableTrap { bias_gauss: bias_field / GAUSS, eigenvalues: ev });
    }

    let plane = Matrix2::new(hess[(0, 0)], hess[(0, 1)], hess[(1, 0)], hess[(1, 1)]);
    let eig = SymmetricEigen::new(plane);
    let (weak, strong) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let v = eig.eigenvectors.column(weak);
    let mut angle = v[1].atan2(v[0]);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    } else if angle > std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    }
    let hzz = hess[(2, 2)];
    let m = constants.atom_mass;
    let mut hessian = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            hessian[i][j] = hess[(i, j)];
        }
    }
    Ok(TrapCharacterization {
        bias_field,
        minimum_distance: p.z,
        minimum_position: [p.x, p.y, p.z],
        field_at_minimum: field_magnitude_unchecked(&p, geometry, bias_field),
        omega_x: (eig.eigenvalues[weak] / m).sqrt(),
        omega_y: (eig.eigenvalues[strong] / m).sqrt(),
        omega_z: (hzz / m).sqrt(),
        rotation_angle: angle,
        hessian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::VACUUM_PERMEABILITY;
    use std::f64::consts::PI;

    fn hz(omega: f64) -> f64 {
        omega / (2.0 * PI)
    }

    #[test]
    fn endpoint_anchors_within_tolerance() {
        let g = ChipGeometry::default();
        let c = PhysicalConstants::rb87();
        let opts = CharacterizeOptions::default();
        let start = characterize_trap(&g, &c, 21.5 * GAUSS, &opts).unwrap();
        let end = characterize_trap(&g, &c, 4.5 * GAUSS, &opts).unwrap();
        let within = |x: f64, target: f64| (x / target - 1.0).abs() < 0.2;
        assert!(within(start.minimum_distance, 0.45e-3), "{start:?}");
        assert!(
            within(hz(start.omega_x), 15.0) && within(hz(start.omega_y), 616.0) && within(hz(start.omega_z), 616.0)
        );
        assert!(within(end.minimum_distance, 1.65e-3), "{end:?}");
        assert!(within(hz(end.omega_x), 10.0) && within(hz(end.omega_y), 32.0) && within(hz(end.omega_z), 32.0));
    }

    #[test]
    fn frequencies_reconstruct_hessian() {
        let g = ChipGeometry::default();
        let c = PhysicalConstants::rb87();
        for b in [4.5, 8.0, 13.0, 21.5] {
            let t = characterize_trap(&g, &c, b * GAUSS, &CharacterizeOptions::default()).unwrap();
            let r = t.reconstructed_hessian(c.atom_mass);
            let norm: f64 = t.hessian.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            let mut diff = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    if (i == 2) != (j == 2) {
                        continue; // x-z, y-z couplings are not part of the reconstruction
                    }
                    diff += (r[i][j] - t.hessian[i][j]).powi(2);
                }
            }
            assert!(diff.sqrt() / norm < 1e-6, "B = {b} G: {}", diff.sqrt() / norm);
            // the ignored couplings are negligible
            let off = (t.hessian[0][2].powi(2) + t.hessian[1][2].powi(2)).sqrt();
            assert!(off / norm < 1e-4, "B = {b} G: x-z/y-z coupling {}", off / norm);
        }
    }

    #[test]
    fn infinite_wire_balance() {
        // long central segment: z0 -> mu0 I / (2 pi B)
        let g = ChipGeometry { central_segment_length: 4.0, leg_length: 4.0, ..ChipGeometry::default() };
        let b = 21.5 * GAUSS;
        let p = locate_trap_minimum(&g, b, &CharacterizeOptions::default()).unwrap();
        let expected = VACUUM_PERMEABILITY * 5.0 / (2.0 * PI * b);
        assert!((expected - 0.465e-3).abs() < 1e-6);
        assert!((p.z / expected - 1.0).abs() < 0.01, "{} vs {}", p.z, expected);
    }

    #[test]
    fn no_minimum_without_bias() {
        let g = ChipGeometry::default();
        let c = PhysicalConstants::rb87();
        let err = characterize_trap(&g, &c, 0.0, &CharacterizeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::TrapNotFound { .. }), "{err}");
    }

    #[test]
    fn monotone_over_operating_range() {
        let g = ChipGeometry::default();
        let c = PhysicalConstants::rb87();
        let opts = CharacterizeOptions::default();
        let traps: Vec<_> =
            (0..=17).map(|k| characterize_trap(&g, &c, (4.5 + k as f64) * GAUSS, &opts).unwrap()).collect();
        for w in traps.windows(2) {
            assert!(w[1].minimum_distance < w[0].minimum_distance);
            assert!(w[1].omega_y > w[0].omega_y);
            assert!(w[1].omega_z > w[0].omega_z);
        }
    }
}
