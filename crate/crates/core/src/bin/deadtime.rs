use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use deadtime::correction::{solve_mchc, InverseProblem, SolverOptions, StepRule, Termination};
use deadtime::experiment::{
    fisher_table, run_density_compare, run_fisher_map, run_mse_study, run_param_estimation,
    with_threads, ExperimentConfig, SceneConfig, XAxis,
};
use deadtime::io::{read_profile, write_histogram, write_json, write_profile};
use deadtime::markov::{
    build_kernel, spectral_gap, stationary_distribution, Discretization, KernelMode, KernelOptions,
};
use deadtime::scene::{arrival_pdf, BinGrid};
use deadtime::simulate::{apply_dead_time, bin_detections, sample_arrivals};
use deadtime::Error;

/// Dead-time modeling and compensation for asynchronous TCSPC lidar.
#[derive(Parser, Debug)]
#[command(name = "deadtime", version)]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the base seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: the config's out_dir, else ".").
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for Monte Carlo trials.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate detections for one scene; writes detections.csv and histogram.csv.
    Simulate {
        /// Number of illumination periods (overrides the config).
        #[arg(long)]
        n_r: Option<u64>,
        /// Also write arrivals.csv.
        #[arg(long)]
        arrivals: bool,
    },
    /// Stationary detection pdf for one scene; writes stationary.csv.
    Stationary(StationaryArgs),
    /// Fisher information map; writes fisher.csv.
    Fisher,
    /// Flux estimation study; writes params.csv and param_trials.csv.
    Estimate,
    /// Histogram correction; writes corrected.csv and diagnostics.json.
    Correct(CorrectArgs),
    /// MSE Monte Carlo study; writes mse.csv or mse_detections.csv and trials.csv.
    MseStudy {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        x_axis: Option<Axis>,
    },
    /// Simulated versus predicted densities; writes density_summary.csv and traces.
    DensityCompare,
}

#[derive(Args, Debug)]
struct StationaryArgs {
    #[arg(long, value_enum, default_value = "matrix-free")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "cell-average")]
    discretization: Disc,
    /// Also compute the spectral gap (dense mode only).
    #[arg(long)]
    gap: bool,
    #[arg(long, default_value_t = deadtime::markov::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = deadtime::markov::DEFAULT_MAX_ITER)]
    max_iter: usize,
}

#[derive(Args, Debug)]
struct CorrectArgs {
    /// Histogram CSV with columns bin_center_ns,count.
    #[arg(long)]
    hist: PathBuf,
    /// Total flux Λ (photons per period).
    #[arg(long)]
    lambda: f64,
    /// Dead time in ns.
    #[arg(long, default_value_t = 75.0)]
    t_d: f64,
    #[arg(long, default_value_t = deadtime::correction::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = deadtime::correction::DEFAULT_TOL)]
    tol: f64,
    /// Include the objective trace in diagnostics.json.
    #[arg(long)]
    trace: bool,
    /// Step size from the gate-aware Lipschitz bound instead of the closed form.
    #[arg(long)]
    certified_step: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Dense,
    MatrixFree,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Disc {
    CellAverage,
    PointSample,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Axis {
    Illuminations,
    Detections,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn require_config(cli: &Cli) -> std::result::Result<&Path, Failure> {
    cli.config
        .as_deref()
        .ok_or_else(|| Failure::Config("this command needs --config <path>".into()))
}

fn load_experiment(cli: &Cli) -> std::result::Result<ExperimentConfig, Failure> {
    let path = require_config(cli)?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
    }
    Ok(cfg)
}

fn load_scene(cli: &Cli) -> std::result::Result<SceneConfig, Failure> {
    let path = require_config(cli)?;
    SceneConfig::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn out_dir(cli: &Cli, cfg_dir: Option<&Path>) -> std::result::Result<PathBuf, Failure> {
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg_dir.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| {
        Failure::Runtime(Error::Io {
            path: dir.clone(),
            source: e,
        })
    })?;
    Ok(dir)
}

fn run(cli: Cli) -> Outcome {
    if cli.threads == Some(0) {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    match &cli.command {
        Command::Simulate { n_r, arrivals } => simulate(&cli, *n_r, *arrivals),
        Command::Stationary(a) => stationary(&cli, a),
        Command::Fisher => {
            let cfg = load_experiment(&cli)?;
            let dir = out_dir(&cli, cfg.out_dir.as_deref())?;
            let rows = with_threads(cli.threads, || run_fisher_map(&cfg))??;
            fisher_table(&rows).write(&dir.join("fisher.csv"))?;
            Ok(())
        }
        Command::Estimate => {
            let cfg = load_experiment(&cli)?;
            let dir = out_dir(&cli, cfg.out_dir.as_deref())?;
            let rep = with_threads(cli.threads, || run_param_estimation(&cfg))??;
            rep.write(&dir)?;
            Ok(())
        }
        Command::Correct(a) => correct(&cli, a),
        Command::MseStudy { trials, x_axis } => {
            let mut cfg = load_experiment(&cli)?;
            if let Some(t) = trials {
                cfg.trials = *t;
            }
            if let Some(ax) = x_axis {
                cfg.x_axis = match ax {
                    Axis::Illuminations => XAxis::Illuminations,
                    Axis::Detections => XAxis::Detections,
                };
            }
            cfg.validate()?;
            let dir = out_dir(&cli, cfg.out_dir.as_deref())?;
            let study = with_threads(cli.threads, || run_mse_study(&cfg))??;
            study.write(&dir, cfg.x_axis == XAxis::Detections)?;
            Ok(())
        }
        Command::DensityCompare => {
            let cfg = load_experiment(&cli)?;
            let dir = out_dir(&cli, cfg.out_dir.as_deref())?;
            let rep = with_threads(cli.threads, || run_density_compare(&cfg))??;
            rep.write(&dir)?;
            Ok(())
        }
    }
}

fn simulate(cli: &Cli, n_r: Option<u64>, write_arrivals: bool) -> Outcome {
    let sc = load_scene(cli)?;
    let scene = sc.scene()?;
    let dir = out_dir(cli, None)?;
    let n_r = n_r.unwrap_or(sc.n_r);
    let arrivals = sample_arrivals(&scene.model, n_r, cli.seed.unwrap_or(0))?;
    let detections = apply_dead_time(&arrivals, scene.model.t_d);
    if write_arrivals {
        arrivals.write_csv(&dir.join("arrivals.csv"))?;
    }
    detections.write_csv(&dir.join("detections.csv"))?;
    let hist = bin_detections(&detections, &scene.grid);
    let centers: Vec<f64> = scene.grid.centers().collect();
    write_histogram(&dir.join("histogram.csv"), &centers, hist.counts())?;
    Ok(())
}

#[derive(Serialize)]
struct StationaryDiagnostics {
    n_bins: usize,
    iterations: usize,
    residual: f64,
    gap: Option<f64>,
}

fn stationary(cli: &Cli, a: &StationaryArgs) -> Outcome {
    let sc = load_scene(cli)?;
    let scene = sc.scene()?;
    let dir = out_dir(cli, None)?;
    let options = KernelOptions {
        mode: match a.mode {
            Mode::Dense => KernelMode::Dense,
            Mode::MatrixFree => KernelMode::MatrixFree,
        },
        discretization: match a.discretization {
            Disc::CellAverage => Discretization::CellAverage,
            Disc::PointSample => Discretization::PointSample,
        },
        ..KernelOptions::default()
    };
    let kernel = build_kernel(&scene.model, &scene.grid, options)?;
    let mut result = stationary_distribution(&kernel, a.tol, a.max_iter)?;
    if a.gap {
        result.gap = Some(spectral_gap(&kernel)?);
    }
    let centers: Vec<f64> = scene.grid.centers().collect();
    write_profile(&dir.join("stationary.csv"), &centers, &result.pdf, "value")?;
    let fa = arrival_pdf(&scene.model, &scene.grid)?;
    write_profile(&dir.join("arrival.csv"), &centers, &fa, "value")?;
    write_json(
        &dir.join("stationary.json"),
        &StationaryDiagnostics {
            n_bins: scene.grid.n_bins(),
            iterations: result.iterations,
            residual: result.residual,
            gap: result.gap,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CorrectionDiagnostics {
    n_bins: usize,
    dead_bins: usize,
    flux: f64,
    box_bound: f64,
    step_size: f64,
    iterations: usize,
    final_objective: f64,
    termination: Termination,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_trace: Option<Vec<f64>>,
}

fn correct(cli: &Cli, a: &CorrectArgs) -> Outcome {
    let (centers, counts) = read_profile(&a.hist)?;
    let n_b = centers.len();
    if n_b < 2 {
        return Err(Failure::Runtime(Error::InvalidArgument(
            "histogram needs at least two bins".into(),
        )));
    }
    let t_bin = (centers[n_b - 1] - centers[0]) / (n_b - 1) as f64;
    let grid = BinGrid::new(t_bin * n_b as f64, n_b, a.t_d)?;
    let dir = out_dir(cli, None)?;
    let problem = InverseProblem::new(&counts, grid.dead_bins(), a.lambda)?;
    let opts = SolverOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        step: if a.certified_step {
            StepRule::Certified
        } else {
            StepRule::ClosedForm
        },
        ..SolverOptions::default()
    };
    let result = solve_mchc(&problem, &opts)?;
    if result.corrected_hist.is_empty() {
        return Err(Failure::Runtime(Error::DegenerateResult(
            "recovered intensity is identically zero".into(),
        )));
    }
    write_profile(
        &dir.join("corrected.csv"),
        &centers,
        &result.corrected_hist,
        "value",
    )?;
    write_json(
        &dir.join("diagnostics.json"),
        &CorrectionDiagnostics {
            n_bins: n_b,
            dead_bins: grid.dead_bins(),
            flux: a.lambda,
            box_bound: result.box_bound,
            step_size: result.step_size,
            iterations: result.iterations,
            final_objective: result.final_objective(),
            termination: result.terminated,
            objective_trace: a.trace.then(|| result.objective_trace.clone()),
        },
    )?;
    Ok(())
}
