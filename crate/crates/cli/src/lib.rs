//! Command-line front end: scenario files in, measurement files, plot-ready
//! CSV and JSON reports out.

pub mod files;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tigre_core::bench::{self, builtin_scenario, builtin_scenarios, BenchOptions, MethodConfig, Scenario};
use tigre_core::detect::{evaluate, threshold_detect, EvalMetrics, MatchWindow, DEFAULT_THRESHOLD};
use tigre_core::model::{AngleGrid, Measurement, TargetKind};
use tigre_core::scenario::{load_scenario, ScenarioFile};
use tigre_core::solver::{self, Init, IterationRecord, Method, SolverParams};

use crate::files::{aggregate_csv, config_hash, grid_csv, stem_csv, MeasurementFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid input files.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(tigre_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<tigre_core::Error> for CliError {
    fn from(e: tigre_core::Error) -> Self {
        use tigre_core::Error as E;
        match e {
            E::Trial { ref source, .. } if is_input_error(source) => CliError::Input(e.to_string()),
            e if is_input_error(&e) => CliError::Input(e.to_string()),
            e => CliError::Solver(e),
        }
    }
}

fn is_input_error(e: &tigre_core::Error) -> bool {
    use tigre_core::Error as E;
    matches!(
        e,
        E::AngleOutOfRange(_)
            | E::InvalidConfig(_)
            | E::InvalidGrid(_)
            | E::OffGridEmitter { .. }
            | E::DimensionMismatch { .. }
            | E::CellOutOfRange { .. }
            | E::ZeroSignal
            | E::InvalidParams(_)
            | E::Parse(_)
    )
}

#[derive(Debug, Parser)]
#[command(name = "tigre", version, about = "Angle-grid estimation and ghost-target benchmarks for MIMO radar")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a measurement file from a scenario.
    Simulate(SimulateArgs),
    /// Estimate the angle grid and write heatmap, stem and report files.
    Estimate(EstimateArgs),
    /// Run seeded trials and write one aggregate CSV row per method.
    Bench(BenchArgs),
    /// List the built-in scenarios, optionally writing them as scenario files.
    Scenarios(ScenariosArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file path, or the name of a built-in scenario.
    pub scenario: String,
    /// Replace the scenario grid with -90..90 degrees at this step.
    #[arg(long, value_name = "DEG")]
    pub grid_step: Option<f64>,
    /// Generate noise-free data regardless of the scenario SNR.
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Use this measurement file instead of simulating one.
    #[arg(long)]
    pub measurement: Option<PathBuf>,
    /// tigre, tigre-random-init or mp-iaa; defaults to the scenario's solver settings.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Directory for grid.csv, stem.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Method to run; repeat for several. Defaults to all three.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Seed of the first trial; trial t uses seed + t.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Fill the time columns (makes the output run-dependent).
    #[arg(long)]
    pub timing: bool,
    /// Run trials one after another instead of on the thread pool.
    #[arg(long)]
    pub serial: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    /// Write each built-in scenario to `<dir>/<name>.toml`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Estimate(args) => estimate(&args),
        Command::Bench(args) => bench_cmd(&args),
        Command::Scenarios(args) => scenarios(&args),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        context: format!("cannot write {}", path.display()),
        source,
    })
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Loads a scenario file, or a built-in when no such file exists.
pub fn resolve_scenario(args: &ScenarioArgs) -> Result<(Scenario, SolverParams), CliError> {
    let path = Path::new(&args.scenario);
    let (mut scenario, params) = if path.exists() {
        let text = read(path)?;
        load_scenario(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
    } else if let Some(s) = builtin_scenario(&args.scenario) {
        (s, SolverParams::default())
    } else {
        let names: Vec<_> = builtin_scenarios().into_iter().map(|s| s.name).collect();
        return Err(CliError::Input(format!(
            "no scenario file '{}' and no built-in of that name (built-ins: {})",
            args.scenario,
            names.join(", ")
        )));
    };
    if let Some(step) = args.grid_step {
        scenario.grid = AngleGrid::uniform(-90.0, 90.0, step)?;
        scenario.model()?;
    }
    if args.no_noise {
        scenario.snr_db = f64::INFINITY;
    }
    Ok((scenario, params))
}

fn simulated(scenario: &Scenario, seed: u64) -> Result<Measurement, CliError> {
    let model = scenario.model()?;
    let clean = model.forward(&model.spectrum_from_scene(&scenario.scene)?)?;
    Ok(bench::measure(&clean, scenario.snr_db, seed)?)
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (scenario, _) = resolve_scenario(&args.scenario)?;
    let measurement = simulated(&scenario, args.seed)?;
    let file = MeasurementFile {
        scenario: scenario.name.clone(),
        seed: Some(args.seed),
        config_sha256: config_hash(&scenario),
        measurement,
    };
    emit(args.out.as_deref(), &file.render())
}

/// Applies a `--method` name on top of the scenario's solver settings.
pub fn with_method(params: SolverParams, name: &str) -> Result<SolverParams, CliError> {
    let (method, init) = match name {
        "tigre" => (Method::Tigre, Init::DiagonalLs),
        "tigre-random-init" => (Method::Tigre, Init::Random),
        "mp-iaa" => (Method::MpIaa, Init::MatchedFilter),
        other => {
            return Err(CliError::Input(format!(
                "unknown method '{other}' (expected one of {})",
                MethodConfig::NAMES.join(", ")
            )))
        }
    };
    Ok(SolverParams { method, init, ..params })
}

#[derive(Debug, Serialize)]
struct DetectionRow {
    doa_deg: f64,
    dod_deg: f64,
    magnitude: f64,
    kind: TargetKind,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    scenario: String,
    seed: Option<u64>,
    params: SolverParams,
    iterations: usize,
    converged: bool,
    wall_time_s: f64,
    threshold: f64,
    metrics: EvalMetrics,
    detections: Vec<DetectionRow>,
    trace: Vec<IterationRecord>,
}

fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let (scenario, mut params) = resolve_scenario(&args.scenario)?;
    if let Some(name) = &args.method {
        params = with_method(params, name)?;
    }
    let model = scenario.model()?;
    let (measurement, seed) = match &args.measurement {
        Some(path) => {
            let file = MeasurementFile::parse(&read(path)?)?;
            if file.config_sha256 != config_hash(&scenario) {
                return Err(CliError::Input(format!(
                    "{} was generated from a different scenario configuration",
                    path.display()
                )));
            }
            (file.measurement, file.seed)
        }
        None => (simulated(&scenario, args.seed)?, Some(args.seed)),
    };
    if measurement.y.len() != model.n_channels() {
        return Err(CliError::Input(format!(
            "measurement has {} channels, scenario expects {}",
            measurement.y.len(),
            model.n_channels()
        )));
    }
    let init_seed = seed.unwrap_or(args.seed);
    let report = solver::run(&measurement, &model, &params, &mut bench::init_rng(init_seed))?;
    let truth = model.spectrum_from_scene(&scenario.scene)?;
    let metrics = evaluate(
        &report.spectrum,
        &truth,
        &scenario.scene,
        &scenario.grid,
        args.threshold,
        MatchWindow::Exact,
    )?;
    let angles = scenario.grid.angles_deg();
    let detections = threshold_detect(&report.spectrum, args.threshold)?
        .into_iter()
        .map(|d| DetectionRow {
            doa_deg: angles[d.doa_index],
            dod_deg: angles[d.dod_index],
            magnitude: d.amplitude.norm(),
            kind: d.kind,
        })
        .collect();

    fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
        context: format!("cannot create {}", args.out.display()),
        source,
    })?;
    write(&args.out.join("grid.csv"), &grid_csv(&report.spectrum, &model))?;
    write(&args.out.join("stem.csv"), &stem_csv(&report.spectrum, &model, args.threshold))?;
    let summary = EstimateReport {
        scenario: scenario.name.clone(),
        seed,
        params,
        iterations: report.iterations,
        converged: report.converged,
        wall_time_s: report.wall_time_seconds,
        threshold: args.threshold,
        metrics,
        detections,
        trace: report.trace,
    };
    let json = serde_json::to_string_pretty(&summary).expect("report serializes");
    write(&args.out.join("report.json"), &(json + "\n"))
}

fn bench_cmd(args: &BenchArgs) -> Result<(), CliError> {
    let (scenario, params) = resolve_scenario(&args.scenario)?;
    let names: Vec<String> = if args.methods.is_empty() {
        MethodConfig::NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.methods.clone()
    };
    let methods = names
        .iter()
        .map(|n| with_method(params, n).map(|p| MethodConfig::new(n.clone(), p)))
        .collect::<Result<Vec<_>, _>>()?;
    let options = BenchOptions {
        threshold: args.threshold,
        window: MatchWindow::Exact,
        parallel: !args.serial,
    };
    let result = bench::run_trials(&scenario, &methods, args.trials, args.seed, &options)?;
    emit(args.out.as_deref(), &aggregate_csv(&result.aggregates, args.timing))
}

fn scenarios(args: &ScenariosArgs) -> Result<(), CliError> {
    let all = builtin_scenarios();
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            context: format!("cannot create {}", dir.display()),
            source,
        })?;
        for s in &all {
            let text = ScenarioFile::from_scenario(s, &SolverParams::default()).to_toml()?;
            write(&dir.join(format!("{}.toml", s.name)), &text)?;
        }
    }
    println!("name,emitters,snr_db,grid_points");
    for s in &all {
        println!("{},{},{},{}", s.name, s.scene.emitters.len(), s.snr_db, s.grid.len());
    }
    Ok(())
}
