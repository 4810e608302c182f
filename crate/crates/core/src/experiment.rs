//! Baseline and optimized ramps for one transport duration, and sweeps over durations.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::dynamics::{integrate_forward, CondensateState, GroundStateSpec, IntegrationOptions, StateHistory};
use crate::error::{Error, Result};
use crate::metrics::{transport_metrics, TransportMetrics};
use crate::oct::{initial_ground_state, optimize, CostWeights, ModelOptions, OptimizationResult, OptimizeOptions};
use crate::ramp::{linear_ramp_with, ramp_to_trajectory_refined, sta_ramp_with, ControlRamp, RampEndpoints};
use crate::trap::TrapMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sta")]
    Sta,
    #[serde(rename = "cl-oct")]
    ClOct,
    #[serde(rename = "qu-oct")]
    QuOct,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sta, Method::ClOct, Method::QuOct];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sta => "sta",
            Self::ClOct => "cl-oct",
            Self::QuOct => "qu-oct",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sta" => Ok(Self::Sta),
            "cl-oct" | "cl" => Ok(Self::ClOct),
            "qu-oct" | "qu" => Ok(Self::QuOct),
            other => Err(Error::InvalidInput(format!("unknown method `{other}` (expected sta, cl-oct or qu-oct)"))),
        }
    }
}

/// Starting ramp for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialRamp {
    /// STA when it exists for the duration, linear otherwise
    Auto,
    Sta,
    Linear,
}

impl FromStr for InitialRamp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "sta" => Ok(Self::Sta),
            "linear" => Ok(Self::Linear),
            other => Err(Error::InvalidInput(format!("unknown initial ramp `{other}` (expected auto, sta or linear)"))),
        }
    }
}

/// One gradient-descent run with fixed weights and step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OctStage {
    pub weights: CostWeights,
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl OctStage {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub node_count: usize,
    pub endpoints: RampEndpoints,
    pub model: ModelOptions,
    /// static observation window after t_f (s)
    pub hold_time: f64,
    pub initial: InitialRamp,
    pub classical: OctStage,
    pub quantum: OctStage,
    /// heavy-size-weight stage run before `quantum`
    pub quantum_warm_start: Option<OctStage>,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            node_count: 2048,
            endpoints: RampEndpoints::default(),
            model: ModelOptions::default(),
            hold_time: 0.1,
            initial: InitialRamp::Auto,
            classical: OctStage { weights: CostWeights::classical(), epsilon: 1e-12, max_iterations: 2000 },
            quantum: OctStage { weights: CostWeights::quantum(), epsilon: 1e-12, max_iterations: 2000 },
            quantum_warm_start: Some(OctStage {
                weights: CostWeights::convergence_study(),
                epsilon: 1e-13,
                max_iterations: 2000,
            }),
        }
    }
}

impl MethodSettings {
    pub fn validate(&self) -> Result<()> {
        if self.node_count < 2 {
            return Err(Error::Config(format!("node_count must be >= 2, got {}", self.node_count)));
        }
        if self.model.substeps == 0 {
            return Err(Error::Config("substeps must be >= 1".into()));
        }
        if !(self.hold_time >= 0.0) {
            return Err(Error::Config(format!("hold time must be >= 0, got {}", self.hold_time)));
        }
        self.endpoints.validate()?;
        self.classical.validate()?;
        self.quantum.validate()?;
        if let Some(s) = &self.quantum_warm_start {
            s.validate()?;
        }
        Ok(())
    }
}

pub fn initial_ramp(final_time: f64, map: &TrapMap, settings: &MethodSettings) -> Result<ControlRamp> {
    let (n, e) = (settings.node_count, settings.endpoints);
    match settings.initial {
        InitialRamp::Sta => sta_ramp_with(final_time, map, n, e),
        InitialRamp::Linear => linear_ramp_with(final_time, n, e),
        InitialRamp::Auto => match sta_ramp_with(final_time, map, n, e) {
            Ok(r) => Ok(r),
            Err(Error::InfeasibleSta { .. }) => {
                log::info!("STA infeasible at t_f = {final_time} s, starting from the linear ramp");
                linear_ramp_with(final_time, n, e)
            }
            Err(err) => Err(err),
        },
    }
}

/// The ramp of a method together with its forward run including the hold.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub ramp: ControlRamp,
    pub ground: GroundStateSpec,
    pub history: StateHistory,
    pub metrics: TransportMetrics,
    /// one entry per optimization stage
    pub optimization: Vec<OptimizationResult>,
}

/// Forward run of `ramp` from rest in the initial ground state, with the hold appended.
pub fn simulate_ramp(ramp: &ControlRamp, map: &TrapMap, model: &ModelOptions, hold_time: f64) -> Result<StateHistory> {
    let traj = ramp_to_trajectory_refined(ramp, map, model.substeps)?;
    integrate_forward(
        &traj,
        CondensateState::at_rest(traj.z0[0]),
        &IntegrationOptions { method: model.method, hold_time },
    )
}

pub fn run_stages(
    initial: &ControlRamp,
    stages: &[OctStage],
    map: &TrapMap,
    ground: &GroundStateSpec,
    c: &PhysicalConstants,
    model: &ModelOptions,
    template: &OptimizeOptions,
) -> Result<Vec<OptimizationResult>> {
    let mut ramp = initial.clone();
    let mut out = Vec::with_capacity(stages.len());
    for (k, stage) in stages.iter().enumerate() {
        let opts = OptimizeOptions { epsilon: stage.epsilon, max_iterations: stage.max_iterations, ..*template };
        let r = optimize(&ramp, map, ground, &stage.weights, c, model, &opts, |rec| {
            log::trace!("stage {k} iteration {}: C_tot = {:e} nK", rec.iteration, rec.total)
        })?;
        log::info!("stage {k}: {} after {} iterations, C_tot = {:.6e} nK", r.termination, r.iterations, r.cost.total);
        ramp = r.ramp.clone();
        out.push(r);
    }
    Ok(out)
}

pub fn run_method(
    method: Method,
    final_time: f64,
    map: &TrapMap,
    c: &PhysicalConstants,
    settings: &MethodSettings,
) -> Result<MethodOutcome> {
    settings.validate()?;
    let start = match method {
        Method::Sta => sta_ramp_with(final_time, map, settings.node_count, settings.endpoints)?,
        _ => initial_ramp(final_time, map, settings)?,
    };
    let ground = initial_ground_state(map, &start, c)?;
    let stages: Vec<OctStage> = match method {
        Method::Sta => vec![],
        Method::ClOct => vec![settings.classical],
        Method::QuOct => settings.quantum_warm_start.into_iter().chain([settings.quantum]).collect(),
    };
    let optimization = run_stages(&start, &stages, map, &ground, c, &settings.model, &OptimizeOptions::default())?;
    let ramp = optimization.last().map_or(start, |r| r.ramp.clone());
    let history = simulate_ramp(&ramp, map, &settings.model, settings.hold_time)?;
    let metrics = transport_metrics(&history, &ground, c);
    Ok(MethodOutcome { method, ramp, ground, history, metrics, optimization })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub final_time: f64,
    pub method: Method,
    pub metrics: Option<TransportMetrics>,
    pub error: Option<String>,
}

/// All (duration, method) points; a failing point is recorded and the rest continue.
pub fn sweep(
    durations: &[f64],
    methods: &[Method],
    map: &TrapMap,
    c: &PhysicalConstants,
    settings: &MethodSettings,
    threads: usize,
) -> Result<Vec<SweepRow>> {
    settings.validate()?;
    let points: Vec<(f64, Method)> = durations.iter().flat_map(|&t| methods.iter().map(move |&m| (t, m))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|&(final_time, method)| match run_method(method, final_time, map, c, settings) {
                Ok(o) => SweepRow { final_time, method, metrics: Some(o.metrics), error: None },
                Err(e) => {
                    log::warn!("sweep point t_f = {final_time} s, {method}: {e}");
                    SweepRow { final_time, method, metrics: None, error: Some(e.to_string()) }
                }
            })
            .collect()
    }))
}

/// Energies in nK, offsets in um and um/ms.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "t_f_ms,method,mean_E_cl_nK,max_offset_um,max_velocity_offset_um_per_ms,res_x_um,res_y_um,res_z_um,error\n",
    );
    for r in rows {
        match &r.metrics {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{},{},{:e},{:e},{:e},{:e},{:e},{:e},",
                    r.final_time * 1e3,
                    r.method,
                    m.mean_classical,
                    m.max_offset * 1e6,
                    m.max_velocity_offset * 1e3,
                    m.residual_amplitude[0] * 1e6,
                    m.residual_amplitude[1] * 1e6,
                    m.residual_amplitude[2] * 1e6
                );
            }
            None => {
                let msg = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
                let _ = writeln!(out, "{},{},,,,,,,{msg}", r.final_time * 1e3, r.method);
            }
        }
    }
    out
}
