//! Experiment configuration file (TOML).
//!
//! Every table is optional and falls back to the reference parameters:
//! t_f = 150 ms, N = 1e5, 5 A wire current, 21.5 G -> 4.5 G.
//! Human-facing units are used where the field name says so (`_ms`, `_gauss`),
//! SI everywhere else.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{PhysicalConstants, GAUSS};
use crate::dynamics::Integrator;
use crate::error::{Error, Result};
use crate::experiment::{InitialRamp, Method, MethodSettings, OctStage};
use crate::gpe::GpeSettings;
use crate::oct::{CostWeights, ModelOptions};
use crate::ramp::RampEndpoints;
use crate::trap::{CharacterizeOptions, ChipGeometry};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// worker threads for sweeps and grid operations; 0 = all cores
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub constants: PhysicalConstants,
    #[serde(default)]
    pub trap: TrapConfig,
    #[serde(default)]
    pub ramp: RampConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub gpe: GpeConfig,
    #[serde(default)]
    pub gradient_check: GradientCheckConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            output_dir: default_output_dir(),
            seed: 0,
            threads: 0,
            constants: PhysicalConstants::default(),
            trap: TrapConfig::default(),
            ramp: RampConfig::default(),
            optimize: OptimizeConfig::default(),
            sweep: SweepConfig::default(),
            gpe: GpeConfig::default(),
            gradient_check: GradientCheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrapSource {
    /// Biot-Savart Z-wire model sampled over the bias range
    Surrogate,
    /// bias -> trap table read from `trap.table`
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapConfig {
    pub source: TrapSource,
    pub table: Option<PathBuf>,
    pub geometry: ChipGeometry,
    /// refit the geometry to the endpoint traps before sampling the map
    pub calibrate: bool,
    pub calibration_sweeps: usize,
    pub bias_min_gauss: f64,
    pub bias_max_gauss: f64,
    pub samples: usize,
    pub characterize: CharacterizeOptions,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self {
            source: TrapSource::Surrogate,
            table: None,
            geometry: ChipGeometry::default(),
            calibrate: false,
            calibration_sweeps: 40,
            bias_min_gauss: 4.0,
            bias_max_gauss: 23.0,
            samples: 256,
            characterize: CharacterizeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampConfig {
    pub final_time_ms: f64,
    pub node_count: usize,
    pub bias_start_gauss: f64,
    pub bias_end_gauss: f64,
    /// fine integration steps per ramp interval
    pub substeps: usize,
    pub integrator: Integrator,
    pub hold_time_ms: f64,
    pub initial: InitialRamp,
    /// ramp file; overrides `initial` for `optimize` and is the input of `simulate`
    pub file: Option<PathBuf>,
}

impl Default for RampConfig {
    fn default() -> Self {
        Self {
            final_time_ms: 150.0,
            node_count: 2048,
            bias_start_gauss: 21.5,
            bias_end_gauss: 4.5,
            substeps: 4,
            integrator: Integrator::Verlet,
            hold_time_ms: 100.0,
            initial: InitialRamp::Auto,
            file: None,
        }
    }
}

impl RampConfig {
    pub fn final_time(&self) -> f64 {
        self.final_time_ms * 1e-3
    }

    pub fn endpoints(&self) -> RampEndpoints {
        RampEndpoints {
            bias_start: self.bias_start_gauss * GAUSS,
            bias_end: self.bias_end_gauss * GAUSS,
            ..RampEndpoints::default()
        }
    }

    pub fn model(&self) -> ModelOptions {
        ModelOptions { substeps: self.substeps, method: self.integrator }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// qu-OCT weights; cl-OCT uses them with lambda2 = 0
    pub weights: CostWeights,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// heavy size-weight stage run before qu-OCT; `max_iterations = 0` skips it
    pub warm_start: OctStage,
    /// step sizes tried by `optimize --scan-epsilon`
    pub epsilon_scan: Vec<f64>,
    pub scan_iterations: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let m = MethodSettings::default();
        Self {
            weights: m.quantum.weights,
            epsilon: m.quantum.epsilon,
            max_iterations: m.quantum.max_iterations,
            warm_start: m.quantum_warm_start.unwrap_or(OctStage {
                weights: CostWeights::convergence_study(),
                epsilon: 1e-13,
                max_iterations: 0,
            }),
            epsilon_scan: vec![1e-14, 3e-14, 1e-13, 3e-13, 1e-12, 3e-12, 1e-11, 1e-10],
            scan_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub start_ms: f64,
    pub stop_ms: f64,
    pub step_ms: f64,
    pub methods: Vec<Method>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { start_ms: 100.0, stop_ms: 200.0, step_ms: 10.0, methods: Method::ALL.to_vec() }
    }
}

impl SweepConfig {
    /// Durations in s, `stop_ms` included when the step lands on it.
    pub fn durations(&self) -> Vec<f64> {
        let n = ((self.stop_ms - self.start_ms) / self.step_ms + 1e-9).floor() as usize;
        (0..=n).map(|k| (self.start_ms + k as f64 * self.step_ms) * 1e-3).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpeScenario {
    /// reduced-scale harmonic transport built in (no map or ramp needed)
    HarmonicDemo,
    /// the configured trap map and ramp (`ramp.file`, or the STA ramp)
    Configured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpeConfig {
    pub scenario: GpeScenario,
    pub solver: GpeSettings,
}

impl Default for GpeConfig {
    fn default() -> Self {
        Self { scenario: GpeScenario::HarmonicDemo, solver: GpeSettings::harmonic_demo() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientCheckConfig {
    pub ramps: usize,
    pub directions: usize,
    /// largest excursion of the random ramp perturbation in u
    pub amplitude: f64,
    /// finite-difference step in u
    pub step: f64,
    /// coarse ramps make the forward discretization error visible above the tolerance
    pub node_count: usize,
    pub tolerance: f64,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        Self { ramps: 10, directions: 3, amplitude: 0.02, step: 1e-6, node_count: 2048, tolerance: 1e-3 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, source: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Parse { path: source.to_path_buf(), line, message: e.message().to_string() }
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if i64::try_from(self.seed).is_err() {
            return Err(Error::Config(format!("seed {} does not fit a TOML integer (max {})", self.seed, i64::MAX)));
        }
        self.constants.validate()?;
        let t = &self.trap;
        match t.source {
            TrapSource::Table => match &t.table {
                None => return Err(Error::Config("trap.source = \"table\" needs trap.table".into())),
                Some(p) if !p.is_file() => {
                    return Err(Error::Config(format!("trap table {} does not exist", p.display())))
                }
                _ => {}
            },
            TrapSource::Surrogate => {
                t.geometry.validate()?;
                if !(t.bias_min_gauss > 0.0 && t.bias_max_gauss > t.bias_min_gauss) {
                    return Err(Error::Config(format!(
                        "trap bias range [{}, {}] G must be positive and non-empty",
                        t.bias_min_gauss, t.bias_max_gauss
                    )));
                }
                if t.samples < 4 {
                    return Err(Error::Config(format!("trap.samples must be >= 4, got {}", t.samples)));
                }
            }
        }
        let r = &self.ramp;
        if !(r.final_time_ms > 0.0 && r.final_time_ms.is_finite()) {
            return Err(Error::Config(format!("ramp.final_time_ms must be positive, got {}", r.final_time_ms)));
        }
        if let Some(p) = &r.file {
            if !p.is_file() {
                return Err(Error::Config(format!("ramp file {} does not exist", p.display())));
            }
        }
        self.method_settings().validate()?;
        let o = &self.optimize;
        if o.epsilon_scan.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("optimize.epsilon_scan entries must be positive".into()));
        }
        let s = &self.sweep;
        if !(s.start_ms > 0.0 && s.stop_ms >= s.start_ms && s.step_ms > 0.0) || s.methods.is_empty() {
            return Err(Error::Config(format!(
                "sweep range {}..{} step {} ms with {} methods is empty or invalid",
                s.start_ms,
                s.stop_ms,
                s.step_ms,
                s.methods.len()
            )));
        }
        self.gpe.solver.validate()?;
        let g = &self.gradient_check;
        if g.ramps == 0 || g.directions == 0 || g.node_count < 3 || !(g.step > 0.0) || !(g.amplitude >= 0.0) {
            return Err(Error::Config("gradient_check needs ramps, directions >= 1, node_count >= 3, step > 0".into()));
        }
        Ok(())
    }

    /// Settings shared by the STA, cl-OCT and qu-OCT runs.
    pub fn method_settings(&self) -> MethodSettings {
        let o = &self.optimize;
        let classical = CostWeights { lambda2: 0.0, ..o.weights };
        MethodSettings {
            node_count: self.ramp.node_count,
            endpoints: self.ramp.endpoints(),
            model: self.ramp.model(),
            hold_time: self.ramp.hold_time_ms * 1e-3,
            initial: self.ramp.initial,
            classical: OctStage { weights: classical, epsilon: o.epsilon, max_iterations: o.max_iterations },
            quantum: OctStage { weights: o.weights, epsilon: o.epsilon, max_iterations: o.max_iterations },
            quantum_warm_start: (o.warm_start.max_iterations > 0).then_some(o.warm_start),
        }
    }
}
