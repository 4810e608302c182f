//! Steps i-v: forward run, costate, gradient, first-order update.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adjoint::{control_gradient, integrate_adjoint_backward, project_to_nodes, terminal_adjoint, AdjointState};
use super::cost::{total_cost, CostBreakdown, CostWeights};
use crate::constants::{PhysicalConstants, NANOKELVIN};
use crate::dynamics::{
    integrate_forward, CondensateState, GroundStateSpec, IntegrationOptions, Integrator, StateHistory,
};
use crate::error::{Error, Result};
use crate::ramp::{ramp_to_trajectory_refined, ControlRamp, TrapTrajectory};
use crate::trap::TrapMap;

/// Ground state of the ramp's initial trap.
pub fn initial_ground_state(map: &TrapMap, ramp: &ControlRamp, c: &PhysicalConstants) -> Result<GroundStateSpec> {
    let p = map.eval(ramp.endpoints().bias_start)?;
    Ok(crate::dynamics::tf_ground_state_for(p.omega_sq.map(f64::sqrt), c))
}

/// Forward model shared by the optimizer and the checks.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub trajectory: TrapTrajectory,
    pub history: StateHistory,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// fine integration steps per ramp interval
    pub substeps: usize,
    pub method: Integrator,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self { substeps: 4, method: Integrator::Verlet }
    }
}

pub fn evaluate_ramp(
    ramp: &ControlRamp,
    map: &TrapMap,
    ground: &GroundStateSpec,
    weights: &CostWeights,
    c: &PhysicalConstants,
    model: &ModelOptions,
) -> Result<Evaluation> {
    let trajectory = ramp_to_trajectory_refined(ramp, map, model.substeps)?;
    evaluate_trajectory(trajectory, ground, weights, c, model)
}

pub fn evaluate_trajectory(
    trajectory: TrapTrajectory,
    ground: &GroundStateSpec,
    weights: &CostWeights,
    c: &PhysicalConstants,
    model: &ModelOptions,
) -> Result<Evaluation> {
    let initial = CondensateState::at_rest(trajectory.z0[0]);
    let history =
        integrate_forward(&trajectory, initial, &IntegrationOptions { method: model.method, hold_time: 0.0 })?;
    let cost = total_cost(&history, ground, weights, c)?;
    Ok(Evaluation { trajectory, history, cost })
}

/// Gradient density on the ramp nodes in nK/s per unit u, with the hat
/// weights `W_k` (s) such that dC/du_k = -W_k G_k (in nK).
#[derive(Debug, Clone)]
pub struct NodeGradient {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub adjoint: Vec<AdjointState>,
}

impl NodeGradient {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, g| a.max(g.abs()))
    }

    /// -sum_k W_k G_k d_k: predicted derivative of C_tot (nK) along `direction`.
    pub fn directional_derivative(&self, direction: &[f64]) -> f64 {
        -self.values.iter().zip(&self.weights).zip(direction).map(|((g, w), d)| g * w * d).sum::<f64>()
    }
}

pub fn node_gradient(
    eval: &Evaluation,
    ground: &GroundStateSpec,
    weights: &CostWeights,
    c: &PhysicalConstants,
) -> Result<NodeGradient> {
    let adjoint = integrate_adjoint_backward(&eval.history, ground, weights, c)?;
    let fine = control_gradient(&eval.history, &adjoint, &eval.trajectory, weights, c)?;
    let scale = 1.0 / (c.boltzmann * NANOKELVIN);
    let fine: Vec<f64> = fine.iter().map(|g| g * scale).collect();
    let (mut values, w) = project_to_nodes(&fine, eval.trajectory.substeps, eval.trajectory.dt());
    // the endpoint controls are fixed, not optimization variables
    let last = values.len() - 1;
    values[0] = 0.0;
    values[last] = 0.0;
    Ok(NodeGradient { values, weights: w, adjoint })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    MaxIterations,
    Stagnation,
    TargetReached,
    Stationary,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MaxIterations => "maximum iterations",
            Self::Stagnation => "cost stagnation",
            Self::TargetReached => "target reached",
            Self::Stationary => "stationary point",
        })
    }
}

/// Stop once all set targets hold simultaneously (nK).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Targets {
    pub final_classical: Option<f64>,
    pub final_quantum: Option<f64>,
    pub total: Option<f64>,
}

impl Targets {
    fn any(&self) -> bool {
        self.final_classical.is_some() || self.final_quantum.is_some() || self.total.is_some()
    }

    fn met(&self, c: &CostBreakdown) -> bool {
        self.any()
            && self.final_classical.is_none_or(|t| c.final_classical <= t)
            && self.final_quantum.is_none_or(|t| c.final_quantum <= t)
            && self.total.is_none_or(|t| c.total <= t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    /// step size, u per (nK/s)
    pub epsilon: f64,
    pub max_iterations: usize,
    pub stagnation_window: usize,
    pub stagnation_tolerance: f64,
    /// nK/s
    pub gradient_tolerance: f64,
    pub max_backtracks: usize,
    /// every iteration is recorded up to here, then on a logarithmic schedule
    pub dense_record_until: usize,
    pub targets: Targets,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iterations: 10_000,
            stagnation_window: 10_000,
            stagnation_tolerance: 1e-8,
            gradient_tolerance: 1e-12,
            max_backtracks: 20,
            dense_record_until: 1000,
            targets: Targets::default(),
        }
    }
}

/// Energies in nK.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub final_classical: f64,
    pub final_quantum: f64,
    pub mean_classical: f64,
    pub total: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub ramp: ControlRamp,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    pub iterations: usize,
    pub epsilon: f64,
    /// breakdown of the returned ramp, nK
    pub cost: CostBreakdown,
    pub initial_terminal_adjoint: AdjointState,
    pub final_terminal_adjoint: AdjointState,
    pub final_gradient_norm: f64,
}

impl OptimizationResult {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iter,E_cl_tf_nK,E_qu_tf_nK,mean_E_cl_nK,C_tot\n");
        for r in &self.history {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                r.iteration, r.final_classical, r.final_quantum, r.mean_classical, r.total
            );
        }
        out
    }

    pub fn write_history(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.history_csv())?;
        Ok(())
    }
}

fn log_scheduled(iteration: usize, dense_until: usize) -> bool {
    if iteration <= dense_until {
        return true;
    }
    // 100 records per decade
    let bucket = |i: usize| (100.0 * (i as f64).log10()).floor();
    bucket(iteration) != bucket(iteration - 1)
}

/// Repeated first-order updates `u <- u + eps dH/du`.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    initial: &ControlRamp,
    map: &TrapMap,
    ground: &GroundStateSpec,
    weights: &CostWeights,
    c: &PhysicalConstants,
    model: &ModelOptions,
    options: &OptimizeOptions,
    mut progress: impl FnMut(&IterationRecord),
) -> Result<OptimizationResult> {
    weights.validate()?;
    if !(options.epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", options.epsilon)));
    }
    let record = |it: usize, cost: &CostBreakdown, eps: f64| {
        let n = cost.in_nanokelvin(c);
        IterationRecord {
            iteration: it,
            final_classical: n.final_classical,
            final_quantum: n.final_quantum,
            mean_classical: n.mean_classical,
            total: n.total,
            epsilon: eps,
        }
    };
    let mut ramp = initial.clone();
    let mut eval = evaluate_ramp(&ramp, map, ground, weights, c, model)?;
    let initial_terminal_adjoint =
        terminal_adjoint(eval.history.final_state(), eval.history.final_trap(), ground, weights, c);
    let mut history = vec![record(0, &eval.cost, options.epsilon)];
    progress(&history[0]);
    let mut window: VecDeque<f64> = VecDeque::new();
    window.push_back(eval.cost.total);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut grad_norm = f64::NAN;
    if options.targets.met(&eval.cost.in_nanokelvin(c)) {
        termination = Termination::TargetReached;
    } else {
        for it in 1..=options.max_iterations {
            let grad = node_gradient(&eval, ground, weights, c)?;
            grad_norm = grad.max_abs();
            if grad_norm < options.gradient_tolerance {
                termination = Termination::Stationary;
                break;
            }
            let mut eps = options.epsilon;
            let mut accepted = None;
            for _ in 0..=options.max_backtracks {
                let mut trial = ramp.clone();
                let step: Vec<f64> = grad.values.iter().map(|g| eps * g).collect();
                trial.apply_step(&step)?;
                match evaluate_ramp(&trial, map, ground, weights, c, model) {
                    Ok(e) => {
                        accepted = Some((trial, e));
                        break;
                    }
                    Err(err @ (Error::OutOfRange { .. } | Error::Collapse { .. })) => {
                        log::debug!("iteration {it}: {err}; halving epsilon {eps:e}");
                        eps *= 0.5
                    }
                    Err(e) => return Err(e),
                }
            }
            let Some((trial, e)) = accepted else {
                return Err(Error::NotConverged(format!(
                    "iteration {it}: every step down to epsilon = {eps:e} leaves the map range or collapses"
                )));
            };
            ramp = trial;
            eval = e;
            iterations = it;
            let rec = record(it, &eval.cost, eps);
            if log_scheduled(it, options.dense_record_until) {
                history.push(rec);
                progress(&rec);
            }
            if options.targets.met(&eval.cost.in_nanokelvin(c)) {
                termination = Termination::TargetReached;
                break;
            }
            window.push_back(eval.cost.total);
            if window.len() > options.stagnation_window {
                let old = window.pop_front().unwrap_or(f64::NAN);
                if ((eval.cost.total - old) / old).abs() < options.stagnation_tolerance {
                    termination = Termination::Stagnation;
                    break;
                }
            }
        }
    }
    if history.last().map(|r| r.iteration) != Some(iterations) {
        history.push(record(iterations, &eval.cost, options.epsilon));
    }
    let final_terminal_adjoint =
        terminal_adjoint(eval.history.final_state(), eval.history.final_trap(), ground, weights, c);
    Ok(OptimizationResult {
        ramp,
        history,
        termination,
        iterations,
        epsilon: options.epsilon,
        cost: eval.cost.in_nanokelvin(c),
        initial_terminal_adjoint,
        final_terminal_adjoint,
        final_gradient_norm: grad_norm,
    })
}

/// Adjoint prediction against central differences of the cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionalCheck {
    /// -sum W_k G_k d_k (nK per unit step)
    pub adjoint: f64,
    /// central difference with the trap velocity held at its baseline values
    pub finite_difference: f64,
    /// central difference with the trap velocity recomputed from the perturbed ramp
    pub finite_difference_full: f64,
    pub relative_error: f64,
    /// part of the full derivative that comes from the trap velocity's u dependence
    pub z0_dot_residual: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn directional_check(
    ramp: &ControlRamp,
    direction: &[f64],
    h: f64,
    map: &TrapMap,
    ground: &GroundStateSpec,
    weights: &CostWeights,
    c: &PhysicalConstants,
    model: &ModelOptions,
) -> Result<DirectionalCheck> {
    let n = ramp.node_count();
    if direction.len() != n || direction[0] != 0.0 || direction[n - 1] != 0.0 {
        return Err(Error::InvalidInput("direction must match the ramp and vanish at both ends".into()));
    }
    let base = evaluate_ramp(ramp, map, ground, weights, c, model)?;
    let grad = node_gradient(&base, ground, weights, c)?;
    let adjoint = grad.directional_derivative(direction);
    let shifted = |sign: f64| -> Result<(f64, f64)> {
        let mut r = ramp.clone();
        r.apply_step(&direction.iter().map(|d| sign * h * d).collect::<Vec<_>>())?;
        let traj = ramp_to_trajectory_refined(&r, map, model.substeps)?;
        let full = evaluate_trajectory(traj.clone(), ground, weights, c, model)?.cost.total;
        let frozen =
            evaluate_trajectory(traj.with_z0_dot(&base.trajectory.z0_dot)?, ground, weights, c, model)?.cost.total;
        Ok((c.to_nanokelvin(frozen), c.to_nanokelvin(full)))
    };
    let (fp, fullp) = shifted(1.0)?;
    let (fm, fullm) = shifted(-1.0)?;
    let finite_difference = (fp - fm) / (2.0 * h);
    let finite_difference_full = (fullp - fullm) / (2.0 * h);
    Ok(DirectionalCheck {
        adjoint,
        finite_difference,
        finite_difference_full,
        relative_error: (adjoint - finite_difference).abs() / finite_difference.abs().max(f64::MIN_POSITIVE),
        z0_dot_residual: finite_difference_full - finite_difference,
    })
}

/// Smooth random direction vanishing at both ends: a few sine modes.
pub fn random_direction(node_count: usize, modes: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let amps: Vec<f64> = (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut d: Vec<f64> = (0..node_count)
        .map(|k| {
            let x = k as f64 / (node_count - 1) as f64;
            amps.iter().enumerate().map(|(j, a)| a * (std::f64::consts::PI * (j + 1) as f64 * x).sin()).sum()
        })
        .collect();
    d[0] = 0.0;
    d[node_count - 1] = 0.0;
    d
}

/// `base` plus a smooth random perturbation whose largest excursion is `amplitude` in u.
pub fn perturbed_ramp(
    base: &ControlRamp,
    amplitude: f64,
    modes: usize,
    rng: &mut impl rand::Rng,
) -> Result<ControlRamp> {
    let mut d = random_direction(base.node_count(), modes, rng);
    let peak = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if peak > 0.0 {
        d.iter_mut().for_each(|x| *x *= amplitude / peak);
    }
    let mut r = base.clone();
    r.apply_step(&d)?;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheckRow {
    pub ramp: usize,
    pub direction: usize,
    pub weights: CostWeights,
    pub check: DirectionalCheck,
}

/// Directional checks on `ramps` random ramps around `base`, `directions` random
/// directions each, for every weight set.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    base: &ControlRamp,
    map: &TrapMap,
    c: &PhysicalConstants,
    model: &ModelOptions,
    weights: &[CostWeights],
    ramps: usize,
    directions: usize,
    amplitude: f64,
    h: f64,
    rng: &mut impl rand::Rng,
) -> Result<Vec<GradientCheckRow>> {
    let ground = initial_ground_state(map, base, c)?;
    let mut rows = Vec::with_capacity(ramps * directions * weights.len());
    for i in 0..ramps {
        let ramp = perturbed_ramp(base, amplitude, 4, rng)?;
        for j in 0..directions {
            let d = random_direction(ramp.node_count(), 6, rng);
            for w in weights {
                let check = directional_check(&ramp, &d, h, map, &ground, w, c, model)?;
                rows.push(GradientCheckRow { ramp: i, direction: j, weights: *w, check });
            }
        }
    }
    Ok(rows)
}

pub fn gradient_check_csv(rows: &[GradientCheckRow]) -> String {
    let mut out = String::from(
        "ramp,direction,lambda1,lambda2,lambda3,adjoint_nK,finite_difference_nK,relative_error,z0_dot_residual_nK\n",
    );
    for r in rows {
        let (w, k) = (&r.weights, &r.check);
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.ramp,
            r.direction,
            w.lambda1,
            w.lambda2,
            w.lambda3,
            k.adjoint,
            k.finite_difference,
            k.relative_error,
            k.z0_dot_residual
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::GAUSS;
    use crate::ramp::{linear_ramp, linear_ramp_with, RampEndpoints};
    use crate::trap::MapSample;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn smooth_map() -> TrapMap {
        let samples = (0..200)
            .map(|k| {
                let x = 4.0 + 19.0 * k as f64 / 199.0;
                MapSample {
                    bias_field: x * GAUSS,
                    minimum_distance: 7.4e-3 / x,
                    omega: [2.0 * PI * (8.0 + 0.33 * x), 2.0 * PI * 1.33 * x * x, 2.0 * PI * 1.3 * x * x],
                    rotation_angle: 0.0,
                }
            })
            .collect();
        TrapMap::from_samples(samples).unwrap()
    }

    #[test]
    fn static_equilibrium_has_zero_cost_and_gradient() {
        let map = smooth_map();
        let c = PhysicalConstants::rb87();
        let e = RampEndpoints { bias_start: 10.0 * GAUSS, bias_end: 10.0 * GAUSS, ..Default::default() };
        let ramp = linear_ramp_with(0.05, 64, e).unwrap();
        let ground = initial_ground_state(&map, &ramp, &c).unwrap();
        let w = CostWeights { lambda1: 1.0, lambda2: 0.0, lambda3: 0.0 };
        let model = ModelOptions::default();
        let eval = evaluate_ramp(&ramp, &map, &ground, &w, &c, &model).unwrap();
        assert_eq!(eval.cost.total, 0.0);
        let res = optimize(&ramp, &map, &ground, &w, &c, &model, &OptimizeOptions::default(), |_| {}).unwrap();
        assert_eq!(res.termination, Termination::Stationary);
        assert_eq!(res.iterations, 0);
        assert!(res.final_gradient_norm < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_adjoint() {
        let map = smooth_map();
        let c = PhysicalConstants::rb87();
        let ramp = linear_ramp(0.05, 64).unwrap();
        let ground = initial_ground_state(&map, &ramp, &c).unwrap();
        let w = CostWeights { lambda1: 0.0, lambda2: 0.0, lambda3: 0.0 };
        let eval = evaluate_ramp(&ramp, &map, &ground, &w, &c, &ModelOptions::default()).unwrap();
        let g = node_gradient(&eval, &ground, &w, &c).unwrap();
        assert!(g.adjoint.iter().all(|p| p.max_abs() == 0.0));
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_vanishes_at_endpoints_and_keeps_them() {
        let map = smooth_map();
        let c = PhysicalConstants::rb87();
        let ramp = linear_ramp(0.05, 128).unwrap();
        let ground = initial_ground_state(&map, &ramp, &c).unwrap();
        let w = CostWeights::quantum();
        let model = ModelOptions { substeps: 8, ..Default::default() };
        let eval = evaluate_ramp(&ramp, &map, &ground, &w, &c, &model).unwrap();
        let g = node_gradient(&eval, &ground, &w, &c).unwrap();
        let fine = control_gradient(&eval.history, &g.adjoint, &eval.trajectory, &w, &c).unwrap();
        assert_eq!(fine[0], 0.0);
        assert_eq!(fine[fine.len() - 1], 0.0);
        let opts = OptimizeOptions { epsilon: 1e-9, max_iterations: 5, ..Default::default() };
        let res = optimize(&ramp, &map, &ground, &w, &c, &model, &opts, |_| {}).unwrap();
        assert_eq!(res.ramp.u_values()[0].to_bits(), 0f64.to_bits());
        assert_eq!(res.ramp.u_values()[127].to_bits(), 1f64.to_bits());
    }

    #[test]
    fn adjoint_matches_cost_differences() {
        let map = smooth_map();
        let c = PhysicalConstants::rb87();
        let ramp = linear_ramp(0.06, 97).unwrap();
        let ground = initial_ground_state(&map, &ramp, &c).unwrap();
        let model = ModelOptions { substeps: 16, ..Default::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for w in
            [CostWeights::classical(), CostWeights::quantum(), CostWeights { lambda1: 1.0, lambda2: 0.0, lambda3: 2.0 }]
        {
            let d = random_direction(97, 5, &mut rng);
            let chk = directional_check(&ramp, &d, 1e-6, &map, &ground, &w, &c, &model).unwrap();
            assert!(chk.relative_error < 1e-3, "{w:?}: {chk:?}");
        }
    }

    #[test]
    fn log_schedule_is_sparse() {
        let recorded = (1..=100_000).filter(|&i| log_scheduled(i, 1000)).count();
        assert!(recorded < 1000 + 250, "{recorded}");
        assert!((1001..1030).any(|i| log_scheduled(i, 1000)));
        assert!((1..=1000).all(|i| log_scheduled(i, 1000)));
    }
}
