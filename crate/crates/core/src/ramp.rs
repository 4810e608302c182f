//! Discretized control u(t), the smoothstep bias map, trap trajectories and
//! the baseline ramps (linear and shortcut-to-adiabaticity).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::GAUSS;
use crate::error::{Error, Result};
use crate::trap::TrapMap;

/// Endpoint conventions shared by every ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampEndpoints {
    /// B_i (T)
    pub bias_start: f64,
    /// B_f (T)
    pub bias_end: f64,
    pub u_start: f64,
    pub u_end: f64,
}

impl Default for RampEndpoints {
    fn default() -> Self {
        Self { bias_start: 21.5 * GAUSS, bias_end: 4.5 * GAUSS, u_start: 0.0, u_end: 1.0 }
    }
}

impl RampEndpoints {
    pub fn validate(&self) -> Result<()> {
        if !(self.bias_start > 0.0 && self.bias_end > 0.0) {
            return Err(Error::InvalidInput("endpoint bias fields must be positive".into()));
        }
        if !(self.u_start.is_finite() && self.u_end.is_finite()) || self.u_start == self.u_end {
            return Err(Error::InvalidInput("u_start and u_end must be finite and distinct".into()));
        }
        Ok(())
    }
}

/// Control values on the uniform grid `t_k = k t_f / (n - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRamp {
    final_time: f64,
    u_values: Vec<f64>,
    endpoints: RampEndpoints,
}

impl ControlRamp {
    /// The first and last control values must equal `u_start` and `u_end`.
    pub fn new(final_time: f64, u_values: Vec<f64>, endpoints: RampEndpoints) -> Result<Self> {
        endpoints.validate()?;
        if !(final_time > 0.0 && final_time.is_finite()) {
            return Err(Error::InvalidInput(format!("final time must be positive, got {final_time}")));
        }
        if u_values.len() < 2 {
            return Err(Error::InvalidInput("a ramp needs at least two nodes".into()));
        }
        if u_values.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidInput("non-finite control value".into()));
        }
        if u_values[0] != endpoints.u_start || u_values[u_values.len() - 1] != endpoints.u_end {
            return Err(Error::InvalidInput(format!(
                "ramp endpoints ({}, {}) differ from u_start = {}, u_end = {}",
                u_values[0],
                u_values[u_values.len() - 1],
                endpoints.u_start,
                endpoints.u_end
            )));
        }
        Ok(Self { final_time, u_values, endpoints })
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn node_count(&self) -> usize {
        self.u_values.len()
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u_values
    }

    pub fn endpoints(&self) -> &RampEndpoints {
        &self.endpoints
    }

    pub fn dt(&self) -> f64 {
        self.final_time / (self.u_values.len() - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.u_values.len() {
            self.final_time
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.node_count()).map(|k| self.time(k)).collect()
    }

    pub fn bias_at_node(&self, k: usize) -> f64 {
        smoothstep_bias(self.u_values[k], self)
    }

    pub fn bias_profile(&self) -> Vec<f64> {
        self.u_values.iter().map(|&u| smoothstep_bias(u, self)).collect()
    }

    /// `u_k += step_k` on every node. The endpoint steps are expected to be
    /// exactly zero; anything else is an error rather than a silent edit.
    pub fn apply_step(&mut self, step: &[f64]) -> Result<()> {
        if step.len() != self.u_values.len() {
            return Err(Error::InvalidInput(format!(
                "step has {} entries, ramp has {} nodes",
                step.len(),
                self.u_values.len()
            )));
        }
        let last = step.len() - 1;
        if step[0] != 0.0 || step[last] != 0.0 {
            return Err(Error::InvalidInput("control step must vanish at both endpoints".into()));
        }
        for (u, d) in self.u_values.iter_mut().zip(step) {
            *u += d;
        }
        Ok(())
    }

    /// Linear resampling onto `node_count` uniform nodes.
    pub fn resampled(&self, node_count: usize) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::InvalidInput("a ramp needs at least two nodes".into()));
        }
        let n_old = self.u_values.len();
        let mut u: Vec<f64> = (0..node_count)
            .map(|k| {
                let x = k as f64 * (n_old - 1) as f64 / (node_count - 1) as f64;
                let i = (x.floor() as usize).min(n_old - 2);
                let f = x - i as f64;
                self.u_values[i] * (1.0 - f) + self.u_values[i + 1] * f
            })
            .collect();
        u[0] = self.endpoints.u_start;
        u[node_count - 1] = self.endpoints.u_end;
        Self::new(self.final_time, u, self.endpoints)
    }

    /// Two-column text form with the endpoint data in header comments.
    pub fn to_text(&self) -> String {
        let e = &self.endpoints;
        let mut out = String::new();
        out.push_str("# bec-transport control ramp\n");
        let _ = writeln!(out, "# t_f = {:e}", self.final_time);
        let _ = writeln!(out, "# u_0 = {:e}", e.u_start);
        let _ = writeln!(out, "# u_f = {:e}", e.u_end);
        let _ = writeln!(out, "# B_i_gauss = {:e}", e.bias_start / GAUSS);
        let _ = writeln!(out, "# B_f_gauss = {:e}", e.bias_end / GAUSS);
        out.push_str("# t_seconds  u_value\n");
        for k in 0..self.node_count() {
            let _ = writeln!(out, "{:e}  {:e}", self.time(k), self.u_values[k]);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Parses the ramp text format. Header keys that are missing fall back to
/// the grid itself (t_f, u_0, u_f) or to `defaults` (bias endpoints).
pub fn parse_ramp(text: &str, source: &Path, defaults: &RampEndpoints) -> Result<ControlRamp> {
    let err = |line: usize, message: String| Error::Parse { path: source.to_path_buf(), line, message };
    let mut header = std::collections::HashMap::new();
    let mut rows: Vec<(f64, f64, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                let value: f64 =
                    v.trim().parse().map_err(|_| err(line_no, format!("cannot parse header value `{}`", v.trim())))?;
                header.insert(k.trim().to_string(), value);
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(err(line_no, format!("expected 2 columns, found {}", cols.len())));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| err(line_no, format!("cannot parse `{s}` as a number")));
        let (t, u) = (parse(cols[0])?, parse(cols[1])?);
        if !(t.is_finite() && u.is_finite()) {
            return Err(err(line_no, "non-finite value".into()));
        }
        rows.push((t, u, line_no));
    }
    if rows.len() < 2 {
        return Err(err(text.lines().count().max(1), "ramp needs at least two rows".into()));
    }
    if rows[0].0 != 0.0 {
        return Err(err(rows[0].2, "time column must start at 0".into()));
    }
    let final_time = header.get("t_f").copied().unwrap_or(rows[rows.len() - 1].0);
    let n = rows.len();
    let dt = final_time / (n - 1) as f64;
    for (k, &(t, _, line)) in rows.iter().enumerate() {
        if (t - k as f64 * dt).abs() > 1e-6 * dt {
            return Err(err(line, format!("time grid not uniform: expected t = {:e}", k as f64 * dt)));
        }
    }
    let endpoints = RampEndpoints {
        bias_start: header.get("B_i_gauss").map(|b| b * GAUSS).unwrap_or(defaults.bias_start),
        bias_end: header.get("B_f_gauss").map(|b| b * GAUSS).unwrap_or(defaults.bias_end),
        u_start: header.get("u_0").copied().unwrap_or(rows[0].1),
        u_end: header.get("u_f").copied().unwrap_or(rows[n - 1].1),
    };
    let u = rows.iter().map(|r| r.1).collect();
    ControlRamp::new(final_time, u, endpoints).map_err(|e| err(0, e.to_string()))
}

pub fn load_ramp(path: &Path, defaults: &RampEndpoints) -> Result<ControlRamp> {
    let text = std::fs::read_to_string(path)?;
    parse_ramp(&text, path, defaults)
}

/// 10 s^3 - 15 s^4 + 6 s^5
pub fn smoothstep(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// 30 s^2 (1 - s)^2
pub fn smoothstep_slope(s: f64) -> f64 {
    let q = s * (1.0 - s);
    30.0 * q * q
}

fn normalized_control(u: f64, e: &RampEndpoints) -> f64 {
    (u - e.u_start) / (e.u_end - e.u_start)
}

/// B(u) for the ramp's endpoints; `u` outside [u_0, u_f] is evaluated as is.
pub fn smoothstep_bias(u: f64, ramp: &ControlRamp) -> f64 {
    bias_for_control(u, &ramp.endpoints)
}

pub fn bias_for_control(u: f64, e: &RampEndpoints) -> f64 {
    e.bias_start + (e.bias_end - e.bias_start) * smoothstep(normalized_control(u, e))
}

/// dB/du
pub fn bias_slope_for_control(u: f64, e: &RampEndpoints) -> f64 {
    (e.bias_end - e.bias_start) * smoothstep_slope(normalized_control(u, e)) / (e.u_end - e.u_start)
}

/// Inverse of [`bias_for_control`]. The quintic is monotone on the whole
/// real line, so any bias has exactly one preimage.
pub fn control_for_bias(bias: f64, e: &RampEndpoints) -> f64 {
    if bias == e.bias_start {
        return e.u_start;
    }
    if bias == e.bias_end {
        return e.u_end;
    }
    let target = (bias - e.bias_start) / (e.bias_end - e.bias_start);
    let (mut lo, mut hi) = (-1.0f64, 2.0f64);
    while smoothstep(lo) > target {
        lo *= 2.0;
    }
    while smoothstep(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if smoothstep(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    e.u_start + 0.5 * (lo + hi) * (e.u_end - e.u_start)
}

/// Trap position and curvatures at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapState {
    pub z0: f64,
    pub z0_dot: f64,
    pub omega_sq: [f64; 3],
}

impl TrapState {
    pub fn lerp(&self, other: &Self, f: f64) -> Self {
        let l = |a: f64, b: f64| a + (b - a) * f;
        Self {
            z0: l(self.z0, other.z0),
            z0_dot: l(self.z0_dot, other.z0_dot),
            omega_sq: [0, 1, 2].map(|i| l(self.omega_sq[i], other.omega_sq[i])),
        }
    }
}

/// Trap quantities on a uniform time grid, `substeps` points per ramp interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapTrajectory {
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub bias: Vec<f64>,
    pub z0: Vec<f64>,
    pub z0_dot: Vec<f64>,
    pub omega_sq: Vec<[f64; 3]>,
    pub db_du: Vec<f64>,
    pub dz0_db: Vec<f64>,
    pub domega_sq_db: Vec<[f64; 3]>,
    pub rotation: Vec<f64>,
    pub substeps: usize,
}

impl TrapTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn final_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn state(&self, i: usize) -> TrapState {
        TrapState { z0: self.z0[i], z0_dot: self.z0_dot[i], omega_sq: self.omega_sq[i] }
    }

    /// Replaces the trap velocity, e.g. to hold it fixed while perturbing u.
    pub fn with_z0_dot(mut self, z0_dot: &[f64]) -> Result<Self> {
        if z0_dot.len() != self.len() {
            return Err(Error::InvalidInput("z0_dot length does not match the trajectory".into()));
        }
        self.z0_dot.copy_from_slice(z0_dot);
        Ok(self)
    }
}

/// Numerical time derivative on a uniform grid: second-order central
/// differences inside, fourth-order one-sided five-point stencils at the ends.
pub fn time_derivative(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    if n == 2 {
        let s = (f[1] - f[0]) / dt;
        return vec![s, s];
    }
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * dt);
    }
    if n >= 5 {
        // (-25, 48, -36, 16, -3) / 12, written on differences so constants give exactly 0
        let fwd = |a: f64, b: f64, c: f64, e: f64, g: f64| {
            (48.0 * (b - a) - 36.0 * (c - a) + 16.0 * (e - a) - 3.0 * (g - a)) / (12.0 * dt)
        };
        d[0] = fwd(f[0], f[1], f[2], f[3], f[4]);
        d[n - 1] = -fwd(f[n - 1], f[n - 2], f[n - 3], f[n - 4], f[n - 5]);
    } else {
        d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
        d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dt);
    }
    d
}

/// Control values on the refined grid (linear between ramp nodes).
pub fn refined_controls(ramp: &ControlRamp, substeps: usize) -> Vec<f64> {
    let s = substeps.max(1);
    let u = ramp.u_values();
    let mut out = Vec::with_capacity((u.len() - 1) * s + 1);
    for k in 0..u.len() - 1 {
        for j in 0..s {
            let f = j as f64 / s as f64;
            out.push(u[k] + (u[k + 1] - u[k]) * f);
        }
    }
    out.push(u[u.len() - 1]);
    out
}

pub fn ramp_to_trajectory(ramp: &ControlRamp, map: &TrapMap) -> Result<TrapTrajectory> {
    ramp_to_trajectory_refined(ramp, map, 1)
}

/// Evaluates the trap along the ramp on a grid refined by `substeps`.
pub fn ramp_to_trajectory_refined(ramp: &ControlRamp, map: &TrapMap, substeps: usize) -> Result<TrapTrajectory> {
    let substeps = substeps.max(1);
    let u = refined_controls(ramp, substeps);
    let n = u.len();
    let dt = ramp.final_time() / (n - 1) as f64;
    let e = ramp.endpoints();
    let mut t = Trajectories::with_capacity(n);
    for (i, &ui) in u.iter().enumerate() {
        let time = if i + 1 == n { ramp.final_time() } else { i as f64 * dt };
        let b = bias_for_control(ui, e);
        if !b.is_finite() || !map.contains(b) {
            let (lo, hi) = map.bias_range();
            return Err(Error::OutOfRange {
                bias_gauss: b / GAUSS,
                min_gauss: lo / GAUSS,
                max_gauss: hi / GAUSS,
                node: Some(i),
                time: Some(time),
            });
        }
        let p = map.eval_unchecked(b);
        t.times.push(time);
        t.bias.push(b);
        t.z0.push(p.z0);
        t.omega_sq.push(p.omega_sq);
        t.db_du.push(bias_slope_for_control(ui, e));
        t.dz0_db.push(p.dz0_db);
        t.domega_sq_db.push(p.domega_sq_db);
        t.rotation.push(p.rotation_angle);
    }
    let z0_dot = time_derivative(&t.z0, dt);
    Ok(TrapTrajectory {
        times: t.times,
        u,
        bias: t.bias,
        z0: t.z0,
        z0_dot,
        omega_sq: t.omega_sq,
        db_du: t.db_du,
        dz0_db: t.dz0_db,
        domega_sq_db: t.domega_sq_db,
        rotation: t.rotation,
        substeps,
    })
}

struct Trajectories {
    times: Vec<f64>,
    bias: Vec<f64>,
    z0: Vec<f64>,
    omega_sq: Vec<[f64; 3]>,
    db_du: Vec<f64>,
    dz0_db: Vec<f64>,
    domega_sq_db: Vec<[f64; 3]>,
    rotation: Vec<f64>,
}

impl Trajectories {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            bias: Vec::with_capacity(n),
            z0: Vec::with_capacity(n),
            omega_sq: Vec::with_capacity(n),
            db_du: Vec::with_capacity(n),
            dz0_db: Vec::with_capacity(n),
            domega_sq_db: Vec::with_capacity(n),
            rotation: Vec::with_capacity(n),
        }
    }
}

/// u_k = t_k / t_f with the default endpoints.
pub fn linear_ramp(final_time: f64, node_count: usize) -> Result<ControlRamp> {
    linear_ramp_with(final_time, node_count, RampEndpoints::default())
}

pub fn linear_ramp_with(final_time: f64, node_count: usize, endpoints: RampEndpoints) -> Result<ControlRamp> {
    if node_count < 2 {
        return Err(Error::InvalidInput("a ramp needs at least two nodes".into()));
    }
    let (u0, uf) = (endpoints.u_start, endpoints.u_end);
    let mut u: Vec<f64> = (0..node_count).map(|k| u0 + (uf - u0) * k as f64 / (node_count - 1) as f64).collect();
    u[node_count - 1] = uf;
    ControlRamp::new(final_time, u, endpoints)
}

// degree-11 smoothstep: first five derivatives vanish at both ends
const STA_COEFFS: [f64; 6] = [462.0, -1980.0, 3465.0, -3080.0, 1386.0, -252.0];

/// Target profile P(tau) on [0, 1] and its first two derivatives in tau.
pub fn sta_profile(tau: f64) -> (f64, f64, f64) {
    let (mut p, mut dp, mut ddp) = (0.0, 0.0, 0.0);
    for (j, c) in STA_COEFFS.iter().enumerate() {
        let k = (6 + j) as i32;
        let kf = k as f64;
        p += c * tau.powi(k);
        dp += c * kf * tau.powi(k - 1);
        ddp += c * kf * (kf - 1.0) * tau.powi(k - 2);
    }
    (p, dp, ddp)
}

/// Reverse-engineered transport: the atoms follow a degree-11 polynomial
/// between the two trap minima, and at each node the bias is chosen so that
/// `z0(B) - z_A'' / omega_z^2(B) = z_A`.
pub fn sta_ramp(final_time: f64, map: &TrapMap, node_count: usize) -> Result<ControlRamp> {
    sta_ramp_with(final_time, map, node_count, RampEndpoints::default())
}

pub fn sta_ramp_with(
    final_time: f64,
    map: &TrapMap,
    node_count: usize,
    endpoints: RampEndpoints,
) -> Result<ControlRamp> {
    endpoints.validate()?;
    if !(final_time > 0.0) {
        return Err(Error::InvalidInput(format!("final time must be positive, got {final_time}")));
    }
    if node_count < 2 {
        return Err(Error::InvalidInput("a ramp needs at least two nodes".into()));
    }
    let z_start = map.eval(endpoints.bias_start)?.z0;
    let z_end = map.eval(endpoints.bias_end)?.z0;
    let (lo, hi) = map.bias_range();
    const SCAN: usize = 512;
    let scan: Vec<f64> = (0..=SCAN).map(|j| lo + (hi - lo) * j as f64 / SCAN as f64).collect();
    let mut u = vec![0.0; node_count];
    let mut previous = endpoints.bias_start;
    for k in 0..node_count {
        if k == 0 {
            u[k] = endpoints.u_start;
            continue;
        }
        if k + 1 == node_count {
            u[k] = endpoints.u_end;
            continue;
        }
        let tau = k as f64 / (node_count - 1) as f64;
        let (p, _, ddp) = sta_profile(tau);
        let z_a = z_start + (z_end - z_start) * p;
        let acc = (z_end - z_start) * ddp / (final_time * final_time);
        let f = |b: f64| {
            let q = map.eval_unchecked(b);
            q.z0 - acc / q.omega_sq[2] - z_a
        };
        let values: Vec<f64> = scan.iter().map(|&b| f(b)).collect();
        let mut best: Option<(f64, f64, f64)> = None;
        for j in 0..SCAN {
            let (fa, fb) = (values[j], values[j + 1]);
            if fa == 0.0 || fa.signum() != fb.signum() {
                let d = (0.5 * (scan[j] + scan[j + 1]) - previous).abs();
                if best.is_none_or(|b| d < b.2) {
                    best = Some((scan[j], scan[j + 1], d));
                }
            }
        }
        let (mut a, mut b, _) = best.ok_or(Error::InfeasibleSta { node: k, time: tau * final_time })?;
        let mut fa = f(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m == a || m == b {
                break;
            }
            let fm = f(m);
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        previous = 0.5 * (a + b);
        u[k] = control_for_bias(previous, &endpoints);
    }
    ControlRamp::new(final_time, u, endpoints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap::{parse_tabulated_map, MapSample};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Smooth synthetic map: z0 and omega^2 are low-order functions of B.
    pub(crate) fn synthetic_map() -> TrapMap {
        let samples = (0..200)
            .map(|k| {
                let b = (4.0 + 19.0 * k as f64 / 199.0) * GAUSS;
                let x = b / GAUSS;
                MapSample {
                    bias_field: b,
                    minimum_distance: 1e-3 * 7.4 / (x + 0.0),
                    omega: [2.0 * PI * (8.0 + 0.33 * x), 2.0 * PI * 1.33 * x * x, 2.0 * PI * 1.33 * x * x],
                    rotation_angle: 0.0,
                }
            })
            .collect();
        TrapMap::from_samples(samples).unwrap()
    }

    #[test]
    fn smoothstep_endpoints_and_midpoint() {
        let r = linear_ramp(0.15, 3).unwrap();
        assert_eq!(r.u_values(), &[0.0, 0.5, 1.0]);
        assert!((smoothstep_bias(0.0, &r) / GAUSS - 21.5).abs() < 1e-12);
        assert!((smoothstep_bias(1.0, &r) / GAUSS - 4.5).abs() < 1e-12);
        assert!((smoothstep_bias(0.5, &r) / GAUSS - 13.0).abs() < 1e-12);
        assert!((r.bias_at_node(1) / GAUSS - 13.0).abs() < 1e-12);
        assert_eq!(smoothstep_slope(0.0), 0.0);
        assert_eq!(smoothstep_slope(1.0), 0.0);
    }

    #[test]
    fn control_inverse() {
        let e = RampEndpoints::default();
        for u in [-0.2, 0.1, 0.5, 0.77, 1.1] {
            let b = bias_for_control(u, &e);
            assert!((control_for_bias(b, &e) - u).abs() < 1e-9, "{u}");
        }
        // the quintic is flat at the ends, so only the bias round trip is tight there
        for u in [0.0, 1e-3, 0.999, 1.0] {
            let b = bias_for_control(u, &e);
            assert!((bias_for_control(control_for_bias(b, &e), &e) - b).abs() < 1e-12 * b);
        }
        assert_eq!(control_for_bias(e.bias_end, &e), 1.0);
    }

    proptest! {
        #[test]
        fn smoothstep_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(smoothstep(lo) <= smoothstep(hi));
            prop_assert!(smoothstep_slope(a) >= 0.0);
        }

        #[test]
        fn slope_matches_difference(u in -0.3f64..1.3) {
            let e = RampEndpoints::default();
            let h = 1e-6;
            let fd = (bias_for_control(u + h, &e) - bias_for_control(u - h, &e)) / (2.0 * h);
            let d = bias_slope_for_control(u, &e);
            prop_assert!((fd - d).abs() <= 1e-7 * (e.bias_start - e.bias_end).abs());
        }
    }

    #[test]
    fn constant_ramp_is_static() {
        let e = RampEndpoints { bias_start: 12.0 * GAUSS, bias_end: 12.0 * GAUSS, ..Default::default() };
        let r = linear_ramp_with(0.1, 64, e).unwrap();
        let t = ramp_to_trajectory(&r, &synthetic_map()).unwrap();
        assert!(t.z0_dot.iter().all(|v| *v == 0.0));
        assert!(t.z0.iter().all(|z| *z == t.z0[0]));
    }

    #[test]
    fn endpoint_velocity_vanishes() {
        let map = synthetic_map();
        for ramp in [linear_ramp(0.15, 2048).unwrap(), sta_ramp(0.15, &map, 2048).unwrap()] {
            let t = ramp_to_trajectory(&ramp, &map).unwrap();
            let peak = t.z0_dot.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let n = t.len() - 1;
            assert!(t.z0_dot[0].abs() < 1e-9 * peak, "{}", t.z0_dot[0] / peak);
            assert!(t.z0_dot[n].abs() < 1e-9 * peak, "{}", t.z0_dot[n] / peak);
        }
    }

    #[test]
    fn stored_velocity_is_the_stencil() {
        let map = synthetic_map();
        let t = ramp_to_trajectory(&linear_ramp(0.15, 300).unwrap(), &map).unwrap();
        assert_eq!(time_derivative(&t.z0, t.dt()), t.z0_dot);
    }

    #[test]
    fn frequency_rates_vanish_at_ends() {
        let map = synthetic_map();
        let t = ramp_to_trajectory(&linear_ramp(0.15, 2048).unwrap(), &map).unwrap();
        for i in 0..3 {
            let w: Vec<f64> = t.omega_sq.iter().map(|w| w[i]).collect();
            let d = time_derivative(&w, t.dt());
            let peak = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(d[0].abs() < 1e-9 * peak && d[d.len() - 1].abs() < 1e-9 * peak);
        }
    }

    #[test]
    fn linear_ramp_composition() {
        let map = synthetic_map();
        let r = linear_ramp(0.15, 257).unwrap();
        let t = ramp_to_trajectory_refined(&r, &map, 3).unwrap();
        for (i, &time) in t.times.iter().enumerate() {
            let b = bias_for_control(time / 0.15, r.endpoints());
            let direct = map.eval(b).unwrap();
            assert!((t.z0[i] / direct.z0 - 1.0).abs() < 1e-12);
            assert!((t.omega_sq[i][1] / direct.omega_sq[1] - 1.0).abs() < 1e-12);
        }
        assert!((t.bias[t.len() / 2] / GAUSS - 13.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_names_node() {
        let map = synthetic_map();
        let e = RampEndpoints { bias_start: 30.0 * GAUSS, ..Default::default() };
        let r = linear_ramp_with(0.15, 64, e).unwrap();
        match ramp_to_trajectory(&r, &map) {
            Err(Error::OutOfRange { node: Some(0), time: Some(t), .. }) => assert_eq!(t, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sta_profile_is_flat_at_ends() {
        let h = 1e-4;
        let (p0, d0, dd0) = sta_profile(0.0);
        let (p1, d1, dd1) = sta_profile(1.0);
        assert_eq!(p0, 0.0);
        assert!((p1 - 1.0).abs() < 1e-12);
        assert!(d0.abs() < 1e-12 && d1.abs() < 1e-9 && dd0.abs() < 1e-12 && dd1.abs() < 1e-8);
        // jerk by differencing the acceleration
        let j1 = (sta_profile(1.0).2 - sta_profile(1.0 - h).2) / h;
        assert!(j1.abs() < 1e-6);
        assert!((sta_profile(0.5).0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adiabatic_sta_follows_trap() {
        let map = synthetic_map();
        let r = sta_ramp(10.0, &map, 512).unwrap();
        let t = ramp_to_trajectory(&r, &map).unwrap();
        let (z_i, z_f) = (t.z0[0], t.z0[t.len() - 1]);
        for (k, &z0) in t.z0.iter().enumerate() {
            let z_a = z_i + (z_f - z_i) * sta_profile(k as f64 / (t.len() - 1) as f64).0;
            assert!((z_a - z0).abs() < 0.1e-6);
        }
    }

    #[test]
    fn sta_feasibility_monotone_in_duration() {
        let map = synthetic_map();
        let durations = [0.005, 0.01, 0.02, 0.04, 0.08, 0.16];
        let ok: Vec<bool> = durations.iter().map(|&tf| sta_ramp(tf, &map, 128).is_ok()).collect();
        for w in ok.windows(2) {
            assert!(!w[0] || w[1], "{ok:?}");
        }
        assert!(ok[ok.len() - 1]);
    }

    #[test]
    fn ramp_text_round_trip_and_resample() {
        let map = synthetic_map();
        let r = sta_ramp(0.15, &map, 100).unwrap();
        let back = parse_ramp(&r.to_text(), Path::new("r"), &RampEndpoints::default()).unwrap();
        assert_eq!(back.node_count(), 100);
        for (a, b) in back.u_values().iter().zip(r.u_values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let fine = back.resampled(397).unwrap();
        assert_eq!(fine.u_values()[0], 0.0);
        assert_eq!(fine.u_values()[396], 1.0);
        let bare = "0 0\n0.1 0.5\n0.2 1\n";
        let p = parse_ramp(bare, Path::new("bare"), &RampEndpoints::default()).unwrap();
        assert_eq!(p.final_time(), 0.2);
        let bad = "0 0\n0.1 x\n";
        assert!(matches!(
            parse_ramp(bad, Path::new("b"), &RampEndpoints::default()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn endpoint_steps_rejected() {
        let mut r = linear_ramp(0.1, 4).unwrap();
        assert!(r.apply_step(&[0.1, 0.0, 0.0, 0.0]).is_err());
        r.apply_step(&[0.0, 0.01, -0.01, 0.0]).unwrap();
        assert_eq!(r.u_values()[0], 0.0);
    }

    #[test]
    fn tabulated_map_composes() {
        let m = parse_tabulated_map(&crate::trap::map::endpoint_anchor_table(), Path::new("a")).unwrap();
        let t = ramp_to_trajectory(&linear_ramp(0.15, 65).unwrap(), &m).unwrap();
        assert!((t.z0[0] - 0.45e-3).abs() < 1e-15);
        assert!((t.z0[64] - 1.65e-3).abs() < 1e-15);
    }
}
