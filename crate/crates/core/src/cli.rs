//! Command-line front end. Every command validates the whole configuration
//! before it computes anything and writes its results as CSV/text files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, GpeScenario, TrapSource};
use crate::constants::GAUSS;
use crate::error::{Error, Result};
use crate::experiment::{
    initial_ramp, run_method, run_stages, simulate_ramp, sweep, sweep_csv, InitialRamp, Method, OctStage,
};
use crate::gpe::{harmonic_scenario, verify_ramp, Verification};
use crate::metrics::{transport_metrics, TransportMetrics};
use crate::oct::{
    gradient_check, gradient_check_csv, initial_ground_state, optimize, CostWeights, OptimizationResult,
    OptimizeOptions,
};
use crate::ramp::{linear_ramp_with, load_ramp, sta_ramp_with, ControlRamp};
use crate::trap::{
    build_trap_map, calibrate_geometry, compare_map_with_anchors, endpoint_anchors, load_tabulated_map,
    AnchorComparison, ChipGeometry, TrapMap,
};

#[derive(Debug, Parser)]
#[command(name = "bec-transport", version, about = "Design and check fast atom-chip BEC transport ramps")]
pub struct Cli {
    /// TOML experiment file; built-in defaults when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output directory (overrides `output_dir`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// seed for random ramps and directions (overrides `seed`)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// worker threads, 0 = all cores (overrides `threads`)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// more log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the bias -> trap map and compare its endpoints with the reference traps
    Characterize(CharacterizeArgs),
    /// Optimize a ramp with cl-OCT or qu-OCT
    Optimize(OptimizeArgs),
    /// Integrate one ramp with the hold and report the transport metrics
    Simulate(SimulateArgs),
    /// STA, cl-OCT and qu-OCT over a range of transport durations
    Sweep,
    /// Compare the scaling model with a 3D Gross-Pitaevskii run
    GpeVerify(GpeVerifyArgs),
    /// Adjoint gradient against finite differences on random ramps
    GradientCheck,
    /// Print the effective configuration as TOML
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    /// also characterize the map at this bias (G)
    #[arg(long)]
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptMode {
    ClOct,
    QuOct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Linear,
    Sta,
    File,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_enum, default_value = "qu-oct")]
    pub mode: OptMode,
    /// starting ramp; `file` reads `--ramp` or `ramp.file`
    #[arg(long, value_enum)]
    pub init: Option<InitKind>,
    #[arg(long)]
    pub ramp: Option<PathBuf>,
    /// run a short optimization for every `optimize.epsilon_scan` value instead
    #[arg(long)]
    pub scan_epsilon: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// ramp file; otherwise `ramp.file`, otherwise the baseline from `--method`
    #[arg(long)]
    pub ramp: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sta")]
    pub method: Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Sta,
    Linear,
}

#[derive(Debug, Args)]
pub struct GpeVerifyArgs {
    /// ramp file for the configured scenario
    #[arg(long)]
    pub ramp: Option<PathBuf>,
}

/// Parses the arguments, runs the command and returns the process exit code.
pub fn run_from_args() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Effective configuration: file (or defaults) with the command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::Optimize(a) => {
            if let Some(p) = &a.ramp {
                cfg.ramp.file = Some(p.clone());
            }
        }
        Command::Simulate(a) => {
            if let Some(p) = &a.ramp {
                cfg.ramp.file = Some(p.clone());
            }
        }
        Command::GpeVerify(a) => {
            if let Some(p) = &a.ramp {
                cfg.ramp.file = Some(p.clone());
                cfg.gpe.scenario = GpeScenario::Configured;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command; `Ok` carries the exit code (0, or 1 for a failed check).
pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = resolve_config(cli)?;
    if cfg.threads > 0 {
        // a second call in the same process keeps the first pool, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml()?);
        return Ok(0);
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::Characterize(a) => cmd_characterize(&cfg, &out, a),
        Command::Optimize(a) => cmd_optimize(&cfg, &out, a),
        Command::Simulate(a) => cmd_simulate(&cfg, &out, a),
        Command::Sweep => cmd_sweep(&cfg, &out),
        Command::GpeVerify(_) => cmd_gpe_verify(&cfg, &out),
        Command::GradientCheck => cmd_gradient_check(&cfg, &out),
        Command::ShowConfig => unreachable!(),
    }
}

/// Geometry after the optional calibration.
pub fn effective_geometry(cfg: &ExperimentConfig) -> Result<ChipGeometry> {
    let t = &cfg.trap;
    if !t.calibrate {
        return Ok(t.geometry);
    }
    let report =
        calibrate_geometry(&t.geometry, &cfg.constants, &endpoint_anchors(), &t.characterize, t.calibration_sweeps)?;
    log::info!(
        "calibrated geometry after {} sweeps, objective {:.3e}: {:?}",
        report.sweeps,
        report.objective,
        report.geometry
    );
    Ok(report.geometry)
}

pub fn build_map(cfg: &ExperimentConfig) -> Result<TrapMap> {
    let t = &cfg.trap;
    match t.source {
        TrapSource::Table => {
            let path = t.table.as_ref().ok_or_else(|| Error::Config("trap.table missing".into()))?;
            load_tabulated_map(path)
        }
        TrapSource::Surrogate => build_trap_map(
            &effective_geometry(cfg)?,
            &cfg.constants,
            (t.bias_min_gauss * GAUSS, t.bias_max_gauss * GAUSS),
            t.samples,
            &t.characterize,
        ),
    }
}

fn anchor_report(rows: &[AnchorComparison]) -> String {
    let mut s = String::from(
        "B_gauss,z0_mm,ref_z0_mm,fx_Hz,ref_fx_Hz,fy_Hz,ref_fy_Hz,fz_Hz,ref_fz_Hz,err_z0,err_fx,err_fy,err_fz\n",
    );
    for r in rows {
        let (a, e) = (&r.anchor, &r.relative_errors);
        let _ = writeln!(
            s,
            "{},{:.6},{},{:.6},{},{:.6},{},{:.6},{},{:.6e},{:.6e},{:.6e},{:.6e}",
            a.bias_field / GAUSS,
            r.minimum_distance * 1e3,
            a.minimum_distance * 1e3,
            r.frequency_hz[0],
            a.frequency_hz[0],
            r.frequency_hz[1],
            a.frequency_hz[1],
            r.frequency_hz[2],
            a.frequency_hz[2],
            e[0],
            e[1],
            e[2],
            e[3]
        );
    }
    s
}

fn cmd_characterize(cfg: &ExperimentConfig, out: &Path, args: &CharacterizeArgs) -> Result<i32> {
    let map = build_map(cfg)?;
    map.write_table(&out.join("trap_map.txt"))?;
    let rows = compare_map_with_anchors(&map, &endpoint_anchors())?;
    let report = anchor_report(&rows);
    fs::write(out.join("endpoints.csv"), &report)?;
    let (lo, hi) = map.bias_range();
    println!("map: {} samples over [{:.4}, {:.4}] G", map.samples().len(), lo / GAUSS, hi / GAUSS);
    for r in &rows {
        let e = r.relative_errors;
        println!(
            "B = {:5.2} G: z0 {:.4} mm ({:+.2}%), f = ({:.2}, {:.2}, {:.2}) Hz ({:+.2}%, {:+.2}%, {:+.2}%)",
            r.anchor.bias_field / GAUSS,
            r.minimum_distance * 1e3,
            100.0 * e[0],
            r.frequency_hz[0],
            r.frequency_hz[1],
            r.frequency_hz[2],
            100.0 * e[1],
            100.0 * e[2],
            100.0 * e[3]
        );
    }
    if let Some(b) = args.bias {
        let p = map.eval(b * GAUSS)?;
        let f = p.omega_sq.map(|w2| w2.sqrt() / (2.0 * std::f64::consts::PI));
        println!("B = {b} G: z0 {:.6} mm, f = ({:.4}, {:.4}, {:.4}) Hz", p.z0 * 1e3, f[0], f[1], f[2]);
    }
    Ok(0)
}

/// Starting ramp for `optimize`: file (resampled to `node_count` when needed) or a baseline.
fn starting_ramp(cfg: &ExperimentConfig, map: &TrapMap, init: Option<InitKind>) -> Result<ControlRamp> {
    let n = cfg.ramp.node_count;
    let e = cfg.ramp.endpoints();
    let tf = cfg.ramp.final_time();
    let init = init.unwrap_or(if cfg.ramp.file.is_some() { InitKind::File } else { InitKind::Sta });
    match init {
        InitKind::File => {
            let path =
                cfg.ramp.file.as_ref().ok_or_else(|| Error::Config("--init file needs --ramp or ramp.file".into()))?;
            if !path.is_file() {
                return Err(Error::Config(format!("ramp file {} does not exist", path.display())));
            }
            let r = load_ramp(path, &e)?;
            if r.node_count() != n {
                log::warn!("ramp file has {} nodes, resampling to node_count = {n}", r.node_count());
                eprintln!("notice: resampled ramp from {} to {n} nodes", r.node_count());
                return r.resampled(n);
            }
            Ok(r)
        }
        InitKind::Linear => linear_ramp_with(tf, n, e),
        InitKind::Sta => match cfg.ramp.initial {
            InitialRamp::Linear => linear_ramp_with(tf, n, e),
            InitialRamp::Sta => sta_ramp_with(tf, map, n, e),
            InitialRamp::Auto => initial_ramp(tf, map, &cfg.method_settings()),
        },
    }
}

fn metrics_report(m: &TransportMetrics) -> String {
    format!(
        "mean_E_cl_nK = {:e}\nmax_offset_um = {:e}\nmax_velocity_offset_um_per_ms = {:e}\nresidual_um = [{:e}, {:e}, {:e}]\n",
        m.mean_classical,
        m.max_offset * 1e6,
        m.max_velocity_offset * 1e3,
        m.residual_amplitude[0] * 1e6,
        m.residual_amplitude[1] * 1e6,
        m.residual_amplitude[2] * 1e6
    )
}

fn convergence_csv(stages: &[OptimizationResult]) -> String {
    let mut s = String::from("stage,iter,E_cl_tf_nK,E_qu_tf_nK,mean_E_cl_nK,C_tot\n");
    for (k, r) in stages.iter().enumerate() {
        for h in &r.history {
            let _ = writeln!(
                s,
                "{k},{},{:e},{:e},{:e},{:e}",
                h.iteration, h.final_classical, h.final_quantum, h.mean_classical, h.total
            );
        }
    }
    s
}

fn cmd_optimize(cfg: &ExperimentConfig, out: &Path, args: &OptimizeArgs) -> Result<i32> {
    let map = build_map(cfg)?;
    let start = starting_ramp(cfg, &map, args.init)?;
    let c = &cfg.constants;
    let settings = cfg.method_settings();
    let ground = initial_ground_state(&map, &start, c)?;
    if args.mode == OptMode::ClOct && cfg.optimize.weights.lambda2 != 0.0 {
        log::warn!("cl-oct ignores lambda2 = {} from the configuration and uses 0", cfg.optimize.weights.lambda2);
        eprintln!("warning: cl-oct forces lambda2 = 0 (config has {})", cfg.optimize.weights.lambda2);
    }
    let final_stage = match args.mode {
        OptMode::ClOct => settings.classical,
        OptMode::QuOct => settings.quantum,
    };
    if args.scan_epsilon {
        return scan_epsilon(cfg, out, &map, &start, &ground, final_stage.weights);
    }
    let stages: Vec<OctStage> = match args.mode {
        OptMode::ClOct => vec![settings.classical],
        OptMode::QuOct => settings.quantum_warm_start.into_iter().chain([settings.quantum]).collect(),
    };
    let results = run_stages(&start, &stages, &map, &ground, c, &settings.model, &OptimizeOptions::default())?;
    let last = results.last().expect("at least one stage");
    last.ramp.write(&out.join("ramp.txt"))?;
    fs::write(out.join("convergence.csv"), convergence_csv(&results))?;
    let history = simulate_ramp(&last.ramp, &map, &settings.model, settings.hold_time)?;
    history.write_csv(&out.join("history.csv"), &ground, c)?;
    let m = transport_metrics(&history, &ground, c);
    let mut report = format!(
        "mode = {}\ntermination = {}\niterations = {}\nE_cl_tf_nK = {:e}\nE_qu_tf_nK = {:e}\nC_tot = {:e}\n",
        if args.mode == OptMode::ClOct { "cl-oct" } else { "qu-oct" },
        last.termination,
        results.iter().map(|r| r.iterations).sum::<usize>(),
        last.cost.final_classical,
        last.cost.final_quantum,
        last.cost.total
    );
    report.push_str(&metrics_report(&m));
    fs::write(out.join("summary.txt"), &report)?;
    print!("{report}");
    Ok(0)
}

fn scan_epsilon(
    cfg: &ExperimentConfig,
    out: &Path,
    map: &TrapMap,
    start: &ControlRamp,
    ground: &crate::dynamics::GroundStateSpec,
    weights: CostWeights,
) -> Result<i32> {
    let model = cfg.ramp.model();
    let mut s = String::from("epsilon,iterations,termination,C_tot_start,C_tot_end,error\n");
    for &eps in &cfg.optimize.epsilon_scan {
        let opts = OptimizeOptions { epsilon: eps, max_iterations: cfg.optimize.scan_iterations, ..Default::default() };
        match optimize(start, map, ground, &weights, &cfg.constants, &model, &opts, |_| {}) {
            Ok(r) => {
                let first = r.history.first().map_or(f64::NAN, |h| h.total);
                let _ = writeln!(s, "{eps:e},{},{},{first:e},{:e},", r.iterations, r.termination, r.cost.total);
            }
            Err(e) => {
                let _ = writeln!(s, "{eps:e},,,,,{}", e.to_string().replace([',', '\n'], ";"));
            }
        }
    }
    fs::write(out.join("epsilon_scan.csv"), &s)?;
    print!("{s}");
    Ok(0)
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, args: &SimulateArgs) -> Result<i32> {
    let map = build_map(cfg)?;
    let init = match (&cfg.ramp.file, args.method) {
        (Some(_), _) => InitKind::File,
        (None, Baseline::Sta) => InitKind::Sta,
        (None, Baseline::Linear) => InitKind::Linear,
    };
    let mut strict = cfg.clone();
    if init == InitKind::Sta {
        strict.ramp.initial = InitialRamp::Sta;
    }
    let ramp = starting_ramp(&strict, &map, Some(init))?;
    let c = &cfg.constants;
    let ground = initial_ground_state(&map, &ramp, c)?;
    let settings = cfg.method_settings();
    let history = simulate_ramp(&ramp, &map, &settings.model, settings.hold_time)?;
    history.write_csv(&out.join("history.csv"), &ground, c)?;
    ramp.write(&out.join("ramp.txt"))?;
    let report = metrics_report(&transport_metrics(&history, &ground, c));
    fs::write(out.join("summary.txt"), &report)?;
    print!("{report}");
    Ok(0)
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let map = build_map(cfg)?;
    let durations = cfg.sweep.durations();
    let threads = if cfg.threads == 0 { rayon::current_num_threads() } else { cfg.threads };
    let rows = sweep(&durations, &cfg.sweep.methods, &map, &cfg.constants, &cfg.method_settings(), threads)?;
    let csv = sweep_csv(&rows);
    fs::write(out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} sweep points failed, see the error column", rows.len());
    }
    Ok(0)
}

/// Map, ramp and optional chip geometry of the configured GPE scenario.
fn gpe_inputs(cfg: &ExperimentConfig) -> Result<(TrapMap, ControlRamp, Option<ChipGeometry>)> {
    match cfg.gpe.scenario {
        GpeScenario::HarmonicDemo => {
            let (map, ramp) = harmonic_scenario()?;
            Ok((map, ramp, None))
        }
        GpeScenario::Configured => {
            let map = build_map(cfg)?;
            let ramp = match &cfg.ramp.file {
                Some(p) => {
                    if !p.is_file() {
                        return Err(Error::Config(format!("ramp file {} does not exist", p.display())));
                    }
                    load_ramp(p, &cfg.ramp.endpoints())?
                }
                None => sta_ramp_with(cfg.ramp.final_time(), &map, cfg.ramp.node_count, cfg.ramp.endpoints())?,
            };
            let geometry = match cfg.trap.source {
                TrapSource::Surrogate => Some(effective_geometry(cfg)?),
                TrapSource::Table => None,
            };
            Ok((map, ramp, geometry))
        }
    }
}

pub fn write_verification(v: &Verification, out: &Path) -> Result<()> {
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        fs::write(out.join(format!("marginal_{name}.csv")), v.record.axis_csv(axis))?;
    }
    fs::write(out.join("gpe_summary.csv"), v.record.summary_csv())?;
    fs::write(out.join("deviation.csv"), v.report.to_csv())?;
    Ok(())
}

fn cmd_gpe_verify(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let (map, ramp, geometry) = gpe_inputs(cfg)?;
    let settings = &cfg.gpe.solver;
    let v = verify_ramp(&ramp, &map, geometry.as_ref(), &cfg.constants, &cfg.ramp.model(), settings)?;
    write_verification(&v, out)?;
    let w = v.report.max_width();
    let passed = v.passes(settings);
    let report = format!(
        "transport_distance_um = {:e}\nmax_com_deviation_um = {:e}\ncom_fraction = {:e} (threshold {:e})\nmax_width_deviation = [{:e}, {:e}, {:e}] (threshold {:e})\nmax_norm_drift = {:e}\npassed = {passed}\n",
        v.transport_distance * 1e6,
        v.report.max_center_of_mass() * 1e6,
        v.com_fraction(),
        settings.com_tolerance,
        w[0],
        w[1],
        w[2],
        settings.width_tolerance,
        v.record.max_norm_drift
    );
    fs::write(out.join("gpe_report.txt"), &report)?;
    print!("{report}");
    Ok(if passed { 0 } else { 1 })
}

fn cmd_gradient_check(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let map = build_map(cfg)?;
    let g = &cfg.gradient_check;
    let base = sta_ramp_with(cfg.ramp.final_time(), &map, g.node_count, cfg.ramp.endpoints())?;
    let o = &cfg.optimize;
    let weights = [CostWeights { lambda2: 0.0, ..o.weights }, o.weights, o.warm_start.weights];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = gradient_check(
        &base,
        &map,
        &cfg.constants,
        &cfg.ramp.model(),
        &weights,
        g.ramps,
        g.directions,
        g.amplitude,
        g.step,
        &mut rng,
    )?;
    let csv = gradient_check_csv(&rows);
    fs::write(out.join("gradient_check.csv"), &csv)?;
    let worst = rows.iter().map(|r| r.check.relative_error).fold(0.0f64, f64::max);
    let passed = worst <= g.tolerance;
    println!("{} checks, worst relative error {worst:.3e} (tolerance {:.1e})", rows.len(), g.tolerance);
    Ok(if passed { 0 } else { 1 })
}

/// Runs `method` for the configured duration; shared by tests and tools.
pub fn run_configured_method(
    cfg: &ExperimentConfig,
    map: &TrapMap,
    method: Method,
) -> Result<crate::experiment::MethodOutcome> {
    run_method(method, cfg.ramp.final_time(), map, &cfg.constants, &cfg.method_settings())
}
