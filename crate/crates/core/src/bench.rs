//! Seeded Monte Carlo trials over a scenario.
//!
//! Trial `t` draws its noise from `ChaCha8Rng` seeded with `base_seed + t`;
//! every method sees that same measurement. Random initial grids come from a
//! separate stream of the same seed, so adding or removing a method never
//! shifts another method's inputs.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::detect::{evaluate, EvalMetrics, MatchWindow, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::model::{add_noise, AngleGrid, ArrayModel, Emitter, Measurement, RadarConfig, Scene};
use crate::solver::{run, SolverParams};
use crate::Complex64;

/// RNG stream used for random initial grids.
const INIT_STREAM: u64 = 1;

/// Generator for the measurement noise of trial `seed`.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for random initial grids of trial `seed`, independent of the noise.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng
}

/// Noisy measurement of `clean` for trial `seed`.
pub fn measure(clean: &DVector<Complex64>, snr_db: f64, seed: u64) -> Result<Measurement> {
    add_noise(clean, snr_db, &mut noise_rng(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub scene: Scene,
    pub snr_db: f64,
    pub grid: AngleGrid,
    pub radar: RadarConfig,
}

impl Scenario {
    /// Array model for the scenario, checking that every emitter is on the grid.
    pub fn model(&self) -> Result<ArrayModel> {
        let model = ArrayModel::new(self.radar, self.grid.clone())?;
        self.scene.cells(&self.grid)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub name: String,
    pub params: SolverParams,
}

impl MethodConfig {
    pub const NAMES: [&'static str; 3] = ["tigre", "tigre-random-init", "mp-iaa"];

    pub fn new(name: impl Into<String>, params: SolverParams) -> Self {
        Self {
            name: name.into(),
            params,
        }
    }

    /// One of [`Self::NAMES`] with default parameters.
    pub fn named(name: &str) -> Option<Self> {
        let params = match name {
            "tigre" => SolverParams::tigre(),
            "tigre-random-init" => SolverParams::tigre_random_init(),
            "mp-iaa" => SolverParams::mp_iaa(),
            _ => return None,
        };
        Some(Self::new(name, params))
    }

    pub fn defaults() -> Vec<Self> {
        Self::NAMES.iter().map(|n| Self::named(n).unwrap()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub threshold: f64,
    pub window: MatchWindow,
    /// Spread trials over the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            window: MatchWindow::Exact,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub method: String,
    pub error: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub converged: bool,
    pub metrics: EvalMetrics,
    /// Diagonal of the final grid.
    pub final_diagonal: DVector<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub method: String,
    pub trial_count: usize,
    pub converged_count: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_iterations: f64,
    pub std_iterations: f64,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    pub mean_precision: f64,
    pub std_precision: f64,
    pub mean_recall: f64,
    pub std_recall: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
}

impl AggregateResult {
    pub fn from_trials(method: &str, trials: &[&TrialResult]) -> Self {
        let stat = |f: &dyn Fn(&TrialResult) -> f64| mean_std(trials.iter().map(|t| f(t)));
        let (mean_error, std_error) = stat(&|t| t.error);
        let (mean_iterations, std_iterations) = stat(&|t| t.iterations as f64);
        let (mean_time_s, std_time_s) = stat(&|t| t.wall_time_s);
        let (mean_precision, std_precision) = stat(&|t| t.metrics.scores.precision);
        let (mean_recall, std_recall) = stat(&|t| t.metrics.scores.recall);
        let (mean_f1, std_f1) = stat(&|t| t.metrics.scores.f1);
        Self {
            method: method.to_string(),
            trial_count: trials.len(),
            converged_count: trials.iter().filter(|t| t.converged).count(),
            mean_error,
            std_error,
            mean_iterations,
            std_iterations,
            mean_time_s,
            std_time_s,
            mean_precision,
            std_precision,
            mean_recall,
            std_recall,
            mean_f1,
            std_f1,
        }
    }
}

/// Mean and sample standard deviation, summed in input order. A single
/// value has deviation 0.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    /// Trial-major: all methods of trial 0, then trial 1, and so on.
    pub trials: Vec<TrialResult>,
    /// One entry per method, in the order given.
    pub aggregates: Vec<AggregateResult>,
}

impl BenchResult {
    pub fn trials_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a TrialResult> + 'a {
        self.trials.iter().filter(move |t| t.method == method)
    }

    pub fn aggregate(&self, method: &str) -> Option<&AggregateResult> {
        self.aggregates.iter().find(|a| a.method == method)
    }
}

/// Runs `n_trials` paired trials of every method.
pub fn run_trials(
    scenario: &Scenario,
    methods: &[MethodConfig],
    n_trials: usize,
    base_seed: u64,
    options: &BenchOptions,
) -> Result<BenchResult> {
    run_trials_observed(scenario, methods, n_trials, base_seed, options, |_, _, _| {})
}

/// [`run_trials`] with a hook that sees each `(seed, method, measurement)`
/// just before that method runs.
pub fn run_trials_observed<F>(
    scenario: &Scenario,
    methods: &[MethodConfig],
    n_trials: usize,
    base_seed: u64,
    options: &BenchOptions,
    observer: F,
) -> Result<BenchResult>
where
    F: Fn(u64, &str, &Measurement) + Sync,
{
    if n_trials == 0 {
        return Err(Error::InvalidParams("n_trials must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidParams("no methods given".into()));
    }
    for m in methods {
        m.params.validate()?;
    }
    let model = scenario.model()?;
    let truth = model.spectrum_from_scene(&scenario.scene)?;
    let clean = model.forward(&truth)?;

    let trial = |t: usize| -> Result<Vec<TrialResult>> {
        let seed = base_seed.wrapping_add(t as u64);
        let y = measure(&clean, scenario.snr_db, seed).map_err(|e| Error::Trial {
            seed,
            method: "noise".into(),
            source: Box::new(e),
        })?;
        methods
            .iter()
            .map(|m| {
                observer(seed, &m.name, &y);
                let wrap = |e| Error::Trial {
                    seed,
                    method: m.name.clone(),
                    source: Box::new(e),
                };
                let report = run(&y, &model, &m.params, &mut init_rng(seed)).map_err(wrap)?;
                let metrics = evaluate(
                    &report.spectrum,
                    &truth,
                    &scenario.scene,
                    &scenario.grid,
                    options.threshold,
                    options.window,
                )
                .map_err(wrap)?;
                Ok(TrialResult {
                    seed,
                    method: m.name.clone(),
                    error: metrics.frobenius_sq_error,
                    iterations: report.iterations,
                    wall_time_s: report.wall_time_seconds,
                    converged: report.converged,
                    metrics,
                    final_diagonal: report.spectrum.diagonal(),
                })
            })
            .collect()
    };

    let per_trial: Vec<Vec<TrialResult>> = if options.parallel {
        (0..n_trials).into_par_iter().map(trial).collect::<Result<_>>()?
    } else {
        (0..n_trials).map(trial).collect::<Result<_>>()?
    };
    let trials: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    let aggregates = methods
        .iter()
        .map(|m| {
            let mine: Vec<&TrialResult> = trials.iter().filter(|t| t.method == m.name).collect();
            AggregateResult::from_trials(&m.name, &mine)
        })
        .collect();
    Ok(BenchResult { trials, aggregates })
}

/// The one-, two- and three-target scenes: each target at `(t, t)` with
/// amplitude 1 and ghosts at `(t, g)` (0.7) and `(g, t)` (0.5).
pub fn builtin_scenarios() -> Vec<Scenario> {
    const TARGETS: [(f64, f64); 3] = [(-20.0, 40.0), (-60.0, 60.0), (-40.0, 50.0)];
    let names = ["one-target", "two-target", "three-target"];
    (1..=3)
        .map(|count| {
            let mut emitters = Vec::new();
            for &(t, g) in &TARGETS[..count] {
                emitters.push(Emitter::new(1.0, t, t));
                emitters.push(Emitter::new(0.7, t, g));
                emitters.push(Emitter::new(0.5, g, t));
            }
            Scenario {
                name: names[count - 1].to_string(),
                scene: Scene::new(emitters),
                snr_db: 10.0,
                grid: AngleGrid::default(),
                radar: RadarConfig::default(),
            }
        })
        .collect()
}

pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}
