//! emsim — batch front end for the electromagnetically consistent
//! communication models: plane-wave-spectrum sampling (`pws`), multiport
//! RIS channels (`channel`), coupling-aware load optimization
//! (`optimize`), near-field eigenmode analysis (`modes`), and the
//! combined report tables (`report`).
//!
//! Outputs are CSV tables plus JSON envelopes; every file embeds the
//! resolved configuration and the library version so runs are
//! reproducible and diff-able. Exit codes: 0 success, 2 configuration
//! error, 3 numerical failure, 4 precondition violation.

use clap::{Parser, Subcommand};
use emcore::holo_modes::{
    coupling_operator, eigenmodes, nedof_count, nedof_estimate_2d, transition_indices,
    NeDoFReport,
};
use emcore::io::{
    channel_to_csv, field_to_csv, spectrum_to_csv, to_json_pretty, ChannelEnvelope,
    FieldEnvelope, ScenarioFile,
};
use emcore::metasurface::{build_blocks, gamma_from_loads, ImpedanceBlocks, NetworkScenario};
use emcore::multiport::{
    assemble_with_environment, channel_ct, channel_impedance, channel_scattering, z_to_s,
};
use emcore::ris_optim::{
    evaluate_loads, optimize_loads, ModelFidelity, Objective, OptimizationProblem,
};
use emcore::wavefield::{propagate, sampling_spacing, spectrum_of, FieldGrid};
use emcore::{CMat, EmError};
use num_complex::Complex64;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Batch electromagnetic link analysis. The `EMSIM_WORKERS` environment
/// variable bounds the worker pool used by `report` sweeps (default 1).
#[derive(Parser, Debug)]
#[command(name = "emsim", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario JSON file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// NeDoF counting threshold override for `modes`/`report`.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Evanescent-decay threshold override for `pws`.
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Neumann series order override for `optimize`.
    #[arg(long, global = true)]
    neumann_order: Option<usize>,
    /// Quadrature points per wavelength override for `modes`/`report`.
    #[arg(long, global = true)]
    grid_per_lambda: Option<usize>,
    /// Run seed, recorded in every output envelope.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Sample, split, and propagate a plane-wave spectrum.
    Pws,
    /// Compute the channel in all three formulations.
    Channel,
    /// Optimize the RIS reactive loads.
    Optimize,
    /// Solve the aperture-to-aperture eigenproblem.
    Modes,
    /// Regenerate the eigenvalue table and the gain-vs-interdistance sweep.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Pws => "pws",
            Command::Channel => "channel",
            Command::Optimize => "optimize",
            Command::Modes => "modes",
            Command::Report => "report",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("emsim: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 configuration error, 3 numerical failure, 4 precondition violation.
fn exit_code(err: &EmError) -> u8 {
    match err {
        EmError::Config(_) | EmError::Json(_) | EmError::Io(_) => 2,
        EmError::Singular { .. } => 3,
        EmError::InvalidInput(_) | EmError::Overlap(_) | EmError::OutOfBand { .. } => 4,
    }
}

/// The resolved run parameters embedded in every output (no silent
/// defaults: what you see here is exactly what the run used).
#[derive(Debug, Clone, Serialize)]
struct ResolvedConfig {
    command: &'static str,
    scenario: String,
    seed: u64,
    workers: usize,
    epsilon: Option<f64>,
    eta: Option<f64>,
    neumann_order: Option<usize>,
    grid_per_lambda: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Envelope<T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: ResolvedConfig,
    #[serde(flatten)]
    payload: T,
}

fn workers() -> usize {
    std::env::var("EMSIM_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .map(|n| n.clamp(1, 16))
        .unwrap_or(1)
}

struct Run {
    file: ScenarioFile,
    out: PathBuf,
    config: ResolvedConfig,
}

fn run(cli: &Cli) -> Result<(), EmError> {
    let scenario_path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| EmError::Config("--scenario PATH is required".into()))?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| EmError::Config("--out DIR is required".into()))?
        .clone();
    if let Some(eps) = cli.epsilon {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(EmError::Config("--epsilon must lie in (0, 1)".into()));
        }
    }
    if let Some(eta) = cli.eta {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(EmError::Config("--eta must lie in (0, 1)".into()));
        }
    }
    if let Some(g) = cli.grid_per_lambda {
        if g < 4 {
            return Err(EmError::Config("--grid-per-lambda must be at least 4".into()));
        }
    }
    let file = ScenarioFile::from_path(scenario_path)?;
    std::fs::create_dir_all(&out)?;
    let config = ResolvedConfig {
        command: cli.command.name(),
        scenario: scenario_path.display().to_string(),
        seed: cli.seed,
        workers: workers(),
        epsilon: cli.epsilon,
        eta: cli.eta,
        neumann_order: cli.neumann_order,
        grid_per_lambda: cli.grid_per_lambda,
    };
    let run = Run { file, out, config };
    match cli.command {
        Command::Pws => run_pws(&run),
        Command::Channel => run_channel(&run),
        Command::Optimize => run_optimize(&run),
        Command::Modes => run_modes(&run),
        Command::Report => run_report(&run),
    }
}

impl Run {
    fn write(&self, name: &str, content: &str) -> Result<(), EmError> {
        std::fs::write(self.out.join(name), content)?;
        Ok(())
    }

    /// CSV with a provenance header: tool version plus the resolved
    /// config as one compact JSON comment line.
    fn write_csv(&self, name: &str, body: &str) -> Result<(), EmError> {
        let config = serde_json::to_string(&self.config)?;
        self.write(name, &format!("# emsim v{VERSION}\n# config: {config}\n{body}"))
    }

    fn write_json<T: Serialize>(&self, name: &str, payload: T) -> Result<(), EmError> {
        let envelope = Envelope {
            tool: "emsim",
            version: VERSION,
            config: self.config.clone(),
            payload,
        };
        self.write(name, &to_json_pretty(&envelope)?)
    }
}

// ---------------------------------------------------------------- pws

#[derive(Serialize)]
struct PwsPayload {
    source: FieldEnvelope,
    propagated: FieldEnvelope,
    dx: f64,
    dy: f64,
    eta: f64,
    propagating_power: f64,
    evanescent_power: f64,
}

fn run_pws(run: &Run) -> Result<(), EmError> {
    let pws = run
        .file
        .pws
        .as_ref()
        .ok_or_else(|| EmError::Config("scenario has no `pws` section".into()))?;
    let lambda = run.file.wavelength;
    let kappa = 2.0 * std::f64::consts::PI / lambda;
    let eta = run.config.eta.unwrap_or(pws.eta);
    let (auto_dx, auto_dy) = if pws.dx.is_none() || pws.dy.is_none() {
        sampling_spacing(pws.propagate_dz.abs().max(lambda * 1e-6), eta, kappa)?
    } else {
        (0.0, 0.0)
    };
    let dx = pws.dx.unwrap_or(auto_dx);
    let dy = pws.dy.unwrap_or(auto_dy);
    let (cx, cy) = ((pws.nx - 1) as f64 * dx / 2.0, (pws.ny - 1) as f64 * dy / 2.0);
    let sigma2 = 2.0 * pws.sigma * pws.sigma;
    let source = FieldGrid::from_fn(pws.plane_z, dx, dy, pws.nx, pws.ny, lambda, |x, y| {
        Complex64::new((-((x - cx).powi(2) + (y - cy).powi(2)) / sigma2).exp(), 0.0)
    }, |_, _| Complex64::default())?;
    let spectrum = spectrum_of(&source)?;
    let (propagating, evanescent) = spectrum.power_split();
    let propagated = propagate(&spectrum, pws.propagate_dz)?;

    run.write_csv("source_field.csv", &field_to_csv(&source))?;
    run.write_csv("propagated_field.csv", &field_to_csv(&propagated))?;
    run.write_json("pws.json", PwsPayload {
        source: FieldEnvelope::of(&source),
        propagated: FieldEnvelope::of(&propagated),
        dx,
        dy,
        eta,
        propagating_power: propagating,
        evanescent_power: evanescent,
    })
}

// ------------------------------------------------------------ channel

/// Effective {T,S,R} blocks with the environment folded in, the RIS
/// load matrix from the scenario's element loads, and that elimination's
/// coupling correction magnitude.
fn effective_blocks(
    network: &NetworkScenario,
) -> Result<(ImpedanceBlocks, CMat, f64), EmError> {
    let blocks = build_blocks(network)?;
    let loads: Vec<Complex64> = network
        .ris_elements()
        .iter()
        .map(|e| e.load.unwrap_or_default())
        .collect();
    let ns = loads.len();
    let z_s = CMat::from_fn(ns, ns, |i, j| if i == j { loads[i] } else { Complex64::default() });
    if blocks.n_env() == 0 {
        return Ok((blocks, z_s, 0.0));
    }
    let env = assemble_with_environment(&blocks, &z_s, network.z0)?;
    let z_sos_norm = env.z_sos.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    Ok((env.effective, z_s, z_sos_norm))
}

#[derive(Serialize)]
struct ChannelPayload {
    impedance: ChannelEnvelope,
    scattering: ChannelEnvelope,
    comm_theory: ChannelEnvelope,
    max_rel_deviation_s_vs_z: f64,
    env_coupling_correction: f64,
    flags: Vec<String>,
}

fn run_channel(run: &Run) -> Result<(), EmError> {
    let network = run.file.to_network()?;
    let (blocks, z_s, z_sos_norm) = effective_blocks(&network)?;
    let z0 = network.z0;
    let h_z = channel_impedance(&blocks, &z_s, z0)?;
    let s = z_to_s(&blocks, z0)?;
    let gamma = gamma_from_loads(&z_s, z0)?;
    let h_s = channel_scattering(&s, &gamma)?;
    let h_ct = channel_ct(&s.s_rt, &s.s_rs, &s.s_st, &gamma, "scenario S-blocks")?;

    let mut flags = Vec::new();
    let z_rt_norm = blocks.z_rt.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let gamma_norm = gamma.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let h_s_norm = h_s.h.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if z_rt_norm <= 1e-14 && gamma_norm <= 1e-14 && h_s_norm > 0.0 {
        flags.push("structural scattering".to_string());
    }

    run.write_csv("channel_z.csv", &channel_to_csv(&h_z))?;
    run.write_csv("channel_s.csv", &channel_to_csv(&h_s))?;
    run.write_csv("channel_ct.csv", &channel_to_csv(&h_ct))?;
    run.write_json("channel.json", ChannelPayload {
        impedance: ChannelEnvelope::of(&h_z),
        scattering: ChannelEnvelope::of(&h_s),
        comm_theory: ChannelEnvelope::of(&h_ct),
        max_rel_deviation_s_vs_z: emcore::max_rel_diff(&h_s.h, &h_z.h),
        env_coupling_correction: z_sos_norm,
        flags,
    })
}

// ----------------------------------------------------------- optimize

#[derive(Serialize)]
struct OptimizePayload {
    objective: String,
    model: String,
    x_min: f64,
    x_max: f64,
    budget: usize,
    neumann_order: Option<usize>,
    reactances: Vec<f64>,
    gain: f64,
    evaluations: usize,
    /// Coupling-unaware solution scored on the coupled model.
    unaware_gain_on_coupled: f64,
    gain_advantage: f64,
}

fn optimize_problem(
    run: &Run,
    network: &NetworkScenario,
    blocks: &ImpedanceBlocks,
) -> Result<(OptimizationProblem, usize), EmError> {
    let opt = run
        .file
        .optimize
        .as_ref()
        .ok_or_else(|| EmError::Config("scenario has no `optimize` section".into()))?;
    let mut problem =
        OptimizationProblem::new(blocks.clone(), network.z0, opt.objective()?);
    problem.model = opt.model()?;
    if let Some(x) = opt.x_min {
        problem.x_min = x;
    }
    if let Some(x) = opt.x_max {
        problem.x_max = x;
    }
    problem.neumann_order = run.config.neumann_order.or(opt.neumann_order);
    Ok((problem, opt.budget))
}

fn run_optimize(run: &Run) -> Result<(), EmError> {
    let network = run.file.to_network()?;
    let (blocks, _, _) = effective_blocks(&network)?;
    let (problem, budget) = optimize_problem(run, &network, &blocks)?;
    let result = optimize_loads(&problem, budget)?;

    // Score the coupling-unaware optimum on the same (full-fidelity)
    // model for the aware-vs-unaware comparison.
    let mut unaware_problem = problem.clone();
    unaware_problem.model = ModelFidelity::Uncoupled;
    unaware_problem.neumann_order = None;
    let unaware = optimize_loads(&unaware_problem, budget)?;
    let mut coupled_eval = problem.clone();
    coupled_eval.model = ModelFidelity::Coupled;
    coupled_eval.neumann_order = None;
    let unaware_on_coupled = evaluate_loads(&coupled_eval, &unaware.reactances)?;
    let gain = evaluate_loads(&coupled_eval, &result.reactances)?;

    let mut trace_csv = String::from("step, objective\n");
    for (i, g) in result.trace.iter().enumerate() {
        trace_csv.push_str(&format!("{i}, {g}\n"));
    }
    run.write_csv("trace.csv", &trace_csv)?;
    run.write_json("optimize.json", OptimizePayload {
        objective: match problem.objective {
            Objective::SumGain => "sum-gain".into(),
            Objective::SisoGain => "siso".into(),
        },
        model: match problem.model {
            ModelFidelity::Coupled => "coupled".into(),
            ModelFidelity::Uncoupled => "uncoupled".into(),
        },
        x_min: problem.x_min,
        x_max: problem.x_max,
        budget,
        neumann_order: problem.neumann_order,
        reactances: result.reactances,
        gain,
        evaluations: result.evaluations,
        unaware_gain_on_coupled: unaware_on_coupled,
        gain_advantage: if unaware_on_coupled > 0.0 {
            gain / unaware_on_coupled - 1.0
        } else {
            f64::INFINITY
        },
    })
}

// -------------------------------------------------------------- modes

struct HoloSolve {
    mu: Vec<f64>,
    report: NeDoFReport,
}

fn solve_holo(run: &Run) -> Result<HoloSolve, EmError> {
    let holo = run
        .file
        .holo
        .as_ref()
        .ok_or_else(|| EmError::Config("scenario has no `holo` section".into()))?;
    let lambda = run.file.wavelength;
    let mut tx_dto = holo.tx.clone();
    let mut rx_dto = holo.rx.clone();
    if let Some(per_lambda) = run.config.grid_per_lambda {
        let resolve = |len: f64| ((len / lambda * per_lambda as f64).ceil() as usize).max(4);
        tx_dto.nx = resolve(tx_dto.lx);
        tx_dto.ny = resolve(tx_dto.ly);
        rx_dto.nx = resolve(rx_dto.lx);
        rx_dto.ny = resolve(rx_dto.ly);
    }
    let tx = tx_dto.to_surface()?;
    let rx = rx_dto.to_surface()?;
    let epsilon = run.config.epsilon.unwrap_or(holo.epsilon);
    let op = coupling_operator(&tx, &rx, lambda)?;
    let modes = eigenmodes(&op)?;
    let count = nedof_count(&modes, epsilon)?;
    let d0 = (rx.center - tx.center).norm();
    let est = nedof_estimate_2d(tx.area(), rx.area(), lambda, d0, 1.0)?;
    let report = NeDoFReport {
        count,
        epsilon,
        n1: None,
        n2: Some(est.n2),
        w_g: Some(est.w_g),
        transition: transition_indices(&modes.mu),
        landau_valid: Some(est.landau_valid),
    };
    Ok(HoloSolve { mu: modes.mu, report })
}

fn run_modes(run: &Run) -> Result<(), EmError> {
    let solved = solve_holo(run)?;
    run.write_csv("spectrum.csv", &spectrum_to_csv(&solved.mu))?;
    run.write_json("nedof.json", &solved.report)
}

// ------------------------------------------------------------- report

fn run_report(run: &Run) -> Result<(), EmError> {
    // Eigenvalue table (m, μ_m/μ_1, inside-N2 marker).
    if run.file.holo.is_some() {
        let solved = solve_holo(run)?;
        let n2 = solved.report.n2.unwrap_or(0.0);
        let mu1 = solved.mu.first().copied().unwrap_or(0.0);
        let mut table = String::from("m, mu_ratio, within_n2\n");
        for (m, &mu) in solved.mu.iter().enumerate() {
            let ratio = if mu1 > 0.0 { mu / mu1 } else { 0.0 };
            let marker = if (m + 1) as f64 <= n2 { 1 } else { 0 };
            table.push_str(&format!("{}, {}, {}\n", m + 1, ratio, marker));
        }
        run.write_csv("report_modes.csv", &table)?;
        run.write_json("report_nedof.json", &solved.report)?;
    }

    // Gain-vs-interdistance sweep at fixed RIS aperture:
    // δ ∈ {λ/2, λ/4, λ/8}, element count = aperture/δ per axis.
    if run.file.ris.is_some() {
        let network = run.file.to_network()?;
        let ris = network.ris.clone().expect("checked above");
        let lambda = network.wavelength;
        let aperture_x = ris.cols as f64 * ris.spacing;
        let aperture_y = ris.rows as f64 * ris.spacing;
        let budget = run.file.optimize.as_ref().map(|o| o.budget).unwrap_or(4_000);

        let deltas = [lambda / 2.0, lambda / 4.0, lambda / 8.0];
        let mut results: Vec<Option<(usize, usize, f64, f64)>> = vec![None; deltas.len()];
        let n_workers = run.config.workers.min(deltas.len());
        let chunk = deltas.len().div_ceil(n_workers);
        std::thread::scope(|scope| -> Result<(), EmError> {
            let mut handles = Vec::new();
            for (w, slot_chunk) in results.chunks_mut(chunk).enumerate() {
                let network = &network;
                let ris = &ris;
                let run = &run;
                let deltas = &deltas;
                handles.push(scope.spawn(move || -> Result<(), EmError> {
                    for (k, slot) in slot_chunk.iter_mut().enumerate() {
                        let idx = w * chunk + k;
                        let delta = deltas[idx];
                        let cols = ((aperture_x / delta).round() as usize).max(1);
                        let rows = ((aperture_y / delta).round() as usize).max(1);
                        let mut swept = network.clone();
                        let mut spec = ris.clone();
                        spec.cols = cols;
                        spec.rows = rows;
                        spec.spacing = delta;
                        swept.ris = Some(spec);
                        let blocks = build_blocks(&swept)?;
                        let (problem, _) = optimize_problem(run, &swept, &blocks)?;
                        let coupled = optimize_loads(&problem, budget)?;
                        let mut unaware_problem = problem.clone();
                        unaware_problem.model = ModelFidelity::Uncoupled;
                        let unaware = optimize_loads(&unaware_problem, budget)?;
                        let mut coupled_eval = problem.clone();
                        coupled_eval.model = ModelFidelity::Coupled;
                        coupled_eval.neumann_order = None;
                        let aware_gain = evaluate_loads(&coupled_eval, &coupled.reactances)?;
                        let unaware_gain = evaluate_loads(&coupled_eval, &unaware.reactances)?;
                        *slot = Some((rows, cols, aware_gain, unaware_gain));
                    }
                    Ok(())
                }));
            }
            for h in handles {
                h.join().expect("sweep worker panicked")?;
            }
            Ok(())
        })?;

        let mut sweep = String::from(
            "delta_over_lambda, rows, cols, gain_coupled_aware, gain_unaware_on_coupled\n",
        );
        for (delta, entry) in deltas.iter().zip(results.iter()) {
            let (rows, cols, aware, unaware) = entry.expect("sweep entry computed");
            sweep.push_str(&format!(
                "{}, {}, {}, {}, {}\n",
                delta / lambda,
                rows,
                cols,
                aware,
                unaware
            ));
        }
        run.write_csv("report_gain_sweep.csv", &sweep)?;
    }

    if run.file.holo.is_none() && run.file.ris.is_none() {
        return Err(EmError::Config(
            "`report` needs a `holo` and/or `ris` section in the scenario".into(),
        ));
    }
    Ok(())
}
