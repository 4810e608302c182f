//! Costate: transversality conditions, backward integration and the control gradient.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::cost::CostWeights;
use crate::constants::PhysicalConstants;
use crate::dynamics::{CondensateState, GroundStateSpec, StateHistory};
use crate::error::{Error, Result};
use crate::ramp::{TrapState, TrapTrajectory};

/// `p_1 .. p_8`, conjugate to the state components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointState(pub [f64; 8]);

impl AdjointState {
    pub fn zero() -> Self {
        Self([0.0; 8])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |a, p| a.max(p.abs()))
    }
}

/// p_n(t_f) = -l1 dE_cl/dx_n - l2 dE_qu/dx_n
pub fn terminal_adjoint(
    state: &CondensateState,
    trap: &TrapState,
    ground: &GroundStateSpec,
    weights: &CostWeights,
    c: &PhysicalConstants,
) -> AdjointState {
    let x = &state.0;
    let m = c.atom_mass;
    let (l1, l2) = (weights.lambda1, weights.lambda2);
    let mut p = [0.0; 8];
    p[0] = -l1 * m * trap.omega_sq[2] * (x[0] - trap.z0);
    p[1] = -l1 * m * (x[1] - trap.z0_dot);
    if l2 != 0.0 {
        let r0 = ground.radii;
        let r: [f64; 3] = std::array::from_fn(|i| r0[i] * x[2 + 2 * i]);
        let vol = r[0] * r[1] * r[2];
        let gn = 15.0 * c.interaction_strength() * c.atom_count / (28.0 * PI);
        for i in 0..3 {
            let rd = r0[i] * x[3 + 2 * i];
            p[2 + 2 * i] = -l2 * (m / 7.0 * trap.omega_sq[i] * r0[i] * r[i] - gn * r0[i] / (r[i] * vol));
            p[3 + 2 * i] = -l2 * m / 7.0 * r0[i] * rd;
        }
    }
    AdjointState(p)
}

/// dp/dt; `k = l3 m / t_f`.
#[inline]
fn adjoint_rhs(p: &[f64; 8], x: &[f64; 8], trap: &TrapState, w0: &[f64; 3], k: f64) -> [f64; 8] {
    let w = &trap.omega_sq;
    let (l1, l2, l3) = (x[2], x[4], x[6]);
    let prod = l1 * l2 * l3;
    // second derivatives of the scaling accelerations
    let axx = w[0] + 2.0 * w0[0] / (l1 * l1 * prod);
    let ayy = w[1] + 2.0 * w0[1] / (l2 * l2 * prod);
    let azz = w[2] + 2.0 * w0[2] / (l3 * l3 * prod);
    let (xy, xz, yz) = (prod * l1 * l2, prod * l1 * l3, prod * l2 * l3);
    let axy = w0[0] / xy;
    let axz = w0[0] / xz;
    let ayx = w0[1] / xy;
    let ayz = w0[1] / yz;
    let azx = w0[2] / xz;
    let azy = w0[2] / yz;
    [
        w[2] * (p[1] + k * (x[0] - trap.z0)),
        -p[0] + k * (x[1] - trap.z0_dot),
        p[3] * axx + p[5] * ayx + p[7] * azx,
        -p[2],
        p[3] * axy + p[5] * ayy + p[7] * azy,
        -p[4],
        p[3] * axz + p[5] * ayz + p[7] * azz,
        -p[6],
    ]
}

/// Integrates the costate from t_f back to 0 on the history grid (RK4, state
/// and trap linearly interpolated at half steps). Returns one entry per
/// transport node, index-aligned with the history.
pub fn integrate_adjoint_backward(
    history: &StateHistory,
    ground: &GroundStateSpec,
    weights: &CostWeights,
    c: &PhysicalConstants,
) -> Result<Vec<AdjointState>> {
    let end = history.transport_end;
    let dt = history.dt();
    let tf = history.final_time();
    let k = weights.lambda3 * c.atom_mass / tf;
    let w0 = &history.omega0_sq;
    let mut out = vec![AdjointState::zero(); end + 1];
    let mut p = terminal_adjoint(history.final_state(), history.final_trap(), ground, weights, c).0;
    out[end] = AdjointState(p);
    let lerp8 = |a: &[f64; 8], b: &[f64; 8]| -> [f64; 8] { std::array::from_fn(|i| 0.5 * (a[i] + b[i])) };
    for n in (0..end).rev() {
        let (xa, xb) = (&history.states[n + 1].0, &history.states[n].0);
        let (ta, tb) = (&history.traps[n + 1], &history.traps[n]);
        let xm = lerp8(xa, xb);
        let tm = ta.lerp(tb, 0.5);
        let h = -dt;
        let add = |s: &[f64; 8], d: &[f64; 8], f: f64| -> [f64; 8] { std::array::from_fn(|i| s[i] + f * d[i]) };
        let k1 = adjoint_rhs(&p, xa, ta, w0, k);
        let k2 = adjoint_rhs(&add(&p, &k1, 0.5 * h), &xm, &tm, w0, k);
        let k3 = adjoint_rhs(&add(&p, &k2, 0.5 * h), &xm, &tm, w0, k);
        let k4 = adjoint_rhs(&add(&p, &k3, h), xb, tb, w0, k);
        p = std::array::from_fn(|i| p[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergingAdjoint { time: history.times[n] });
        }
        out[n] = AdjointState(p);
    }
    Ok(out)
}

/// dH/dB at one node (the trap velocity is treated as independent of u).
pub fn hamiltonian_bias_derivative(
    state: &CondensateState,
    adjoint: &AdjointState,
    trajectory: &TrapTrajectory,
    node: usize,
    weights: &CostWeights,
    c: &PhysicalConstants,
) -> f64 {
    let x = &state.0;
    let p = &adjoint.0;
    let tf = trajectory.final_time();
    let dz = x[0] - trajectory.z0[node];
    let w = &trajectory.omega_sq[node];
    let dw = &trajectory.domega_sq_db[node];
    let dz0 = trajectory.dz0_db[node];
    let newton = p[1] * (-dw[2] * dz + w[2] * dz0);
    let scaling = -p[3] * dw[0] * x[2] - p[5] * dw[1] * x[4] - p[7] * dw[2] * x[6];
    let running = -weights.lambda3 * c.atom_mass / (2.0 * tf) * (dw[2] * dz * dz - 2.0 * w[2] * dz * dz0);
    newton + scaling + running
}

/// dH/du on every trajectory node (J/s per unit u).
pub fn control_gradient(
    history: &StateHistory,
    adjoint: &[AdjointState],
    trajectory: &TrapTrajectory,
    weights: &CostWeights,
    c: &PhysicalConstants,
) -> Result<Vec<f64>> {
    if adjoint.len() != trajectory.len() || history.transport_end + 1 != trajectory.len() {
        return Err(Error::InvalidInput("state, adjoint and trajectory grids are not aligned".into()));
    }
    Ok((0..trajectory.len())
        .map(|j| {
            trajectory.db_du[j]
                * hamiltonian_bias_derivative(&history.states[j], &adjoint[j], trajectory, j, weights, c)
        })
        .collect())
}

/// Projects a fine-grid density onto ramp nodes: the trapezoid-weighted
/// average against each node's hat function. Returns the averaged density
/// and the hat weights `W_k` (so that dC/du_k = -W_k G_k).
pub fn project_to_nodes(fine: &[f64], substeps: usize, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let s = substeps.max(1);
    let m = fine.len() - 1;
    let nodes = m / s + 1;
    let mut g = vec![0.0; nodes];
    let mut w = vec![0.0; nodes];
    for (j, v) in fine.iter().enumerate() {
        let wt = if j == 0 || j == m { 0.5 * dt } else { dt };
        let k = j / s;
        let r = j % s;
        if r == 0 {
            g[k] += wt * v;
            w[k] += wt;
        } else {
            let f = r as f64 / s as f64;
            g[k] += wt * (1.0 - f) * v;
            w[k] += wt * (1.0 - f);
            g[k + 1] += wt * f * v;
            w[k + 1] += wt * f;
        }
    }
    for (gk, wk) in g.iter_mut().zip(&w) {
        *gk /= wk;
    }
    (g, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{classical_energy, quantum_energy, tf_ground_state_for};

    fn rb() -> PhysicalConstants {
        PhysicalConstants::rb87()
    }

    fn final_trap() -> TrapState {
        let w = [10.0, 32.0, 32.0].map(|f: f64| (2.0 * PI * f).powi(2));
        TrapState { z0: 1.65e-3, z0_dot: 0.0, omega_sq: w }
    }

    #[test]
    fn terminal_adjoint_vanishes_in_ground_state() {
        let c = rb();
        let trap = final_trap();
        let initial = tf_ground_state_for([15.0, 616.0, 616.0].map(|f: f64| 2.0 * PI * f), &c);
        let fin = tf_ground_state_for(trap.omega_sq.map(f64::sqrt), &c);
        let mut s = CondensateState::at_rest(trap.z0);
        for i in 0..3 {
            s.0[2 + 2 * i] = fin.radii[i] / initial.radii[i];
        }
        let p = terminal_adjoint(&s, &trap, &initial, &CostWeights::convergence_study(), &c);
        // natural scale of each component: the size of one of its two terms
        let scale = CostWeights::convergence_study().lambda2 * c.atom_mass / 7.0
            * trap.omega_sq[0]
            * initial.radii[0]
            * fin.radii[0];
        assert!(p.max_abs() < 1e-9 * scale, "{:?}", p);
    }

    #[test]
    fn terminal_velocity_component() {
        let c = rb();
        let mut s = CondensateState::at_rest(1.65e-3);
        s.0[1] = 2e-5;
        let w = CostWeights { lambda1: 1.0, lambda2: 0.0, lambda3: 0.3 };
        let g = tf_ground_state_for([15.0, 616.0, 616.0].map(|f: f64| 2.0 * PI * f), &c);
        let p = terminal_adjoint(&s, &final_trap(), &g, &w, &c);
        assert_eq!(p.0[1], -c.atom_mass * 2e-5);
        assert!(p.0[2..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn terminal_adjoint_matches_finite_differences() {
        let c = rb();
        let trap = final_trap();
        let g = tf_ground_state_for([15.0, 616.0, 616.0].map(|f: f64| 2.0 * PI * f), &c);
        let w = CostWeights { lambda1: 1.0, lambda2: 3.3, lambda3: 0.0 };
        let s = CondensateState([1.65e-3 + 3e-6, 4e-5, 2.9, 40.0, 0.31, -3.0, 0.33, 2.5]);
        // the two energies are differenced separately so the large classical
        // term does not swamp the small size derivatives in roundoff
        let p = terminal_adjoint(&s, &trap, &g, &w, &c);
        for n in 0..8 {
            let h = 1e-2 * s.0[n].abs();
            let diff = |e: &dyn Fn(&CondensateState) -> f64| {
                let at = |k: f64| {
                    let mut a = s;
                    a.0[n] += k * h;
                    e(&a)
                };
                (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
            };
            let fd = -(w.lambda1 * diff(&|a| classical_energy(a, &trap, &c))
                + w.lambda2 * diff(&|a| quantum_energy(a, &trap, &g, &c).unwrap()));
            assert!((p.0[n] / fd - 1.0).abs() < 1e-6, "p{}: {} vs {fd}", n + 1, p.0[n]);
        }
    }

    #[test]
    fn projection_preserves_constants_and_weights() {
        let fine = vec![2.5; 4 * 10 + 1];
        let (g, w) = project_to_nodes(&fine, 4, 0.1);
        assert!(g.iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert!((w.iter().sum::<f64>() - 4.0).abs() < 1e-12);
        assert!((w[0] - 0.2).abs() < 1e-14 && (w[3] - 0.4).abs() < 1e-14);
        let (g1, _) = project_to_nodes(&[1.0, 2.0, 3.0], 1, 0.5);
        assert_eq!(g1, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn adjoint_rhs_matches_hamiltonian_derivative() {
        // dp/dt = -dH/dx with H = p.f(x) - l3 E_cl / t_f, checked by differencing H
        let c = rb();
        let trap = TrapState { z0: 1.0e-3, z0_dot: 3e-3, omega_sq: [4e3, 9e4, 8e4] };
        let w0 = [9e3, 1.4e7, 1.5e7];
        let x = [1.002e-3, 5e-3, 1.3, 20.0, 0.7, -4.0, 0.8, 3.0];
        let p = [1.1e-27, -3e-30, 2e-31, 5e-33, -7e-32, 1e-33, 4e-32, -2e-33];
        let (l3, tf) = (0.2, 0.15);
        let k = l3 * c.atom_mass / tf;
        let h_of = |x: &[f64; 8]| {
            let s = CondensateState(*x);
            let f = crate::dynamics::derivative(&s, &trap, &w0, 0.0).unwrap();
            (0..8).map(|i| p[i] * f[i]).sum::<f64>() - l3 / tf * classical_energy(&s, &trap, &c)
        };
        let d = adjoint_rhs(&p, &x, &trap, &w0, k);
        for n in 0..8 {
            let h = 1e-3 * x[n].abs();
            let at = |k: f64| {
                let mut a = x;
                a[n] += k * h;
                h_of(&a)
            };
            let fd = -(-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h);
            assert!((d[n] - fd).abs() <= 1e-6 * fd.abs().max(1e-40), "n={n}: {} vs {fd}", d[n]);
        }
    }
}
