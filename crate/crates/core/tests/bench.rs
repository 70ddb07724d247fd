use std::sync::Mutex;

use tigre_core::bench::{
    builtin_scenario, run_trials, run_trials_observed, AggregateResult, BenchOptions, BenchResult,
    MethodConfig, TrialResult,
};
use tigre_core::model::{Measurement, Scene};
use tigre_core::Error;

/// Clears the wall-clock fields, the only ones allowed to differ between runs.
fn without_times(mut r: BenchResult) -> BenchResult {
    for t in &mut r.trials {
        t.wall_time_s = 0.0;
    }
    for a in &mut r.aggregates {
        a.mean_time_s = 0.0;
        a.std_time_s = 0.0;
    }
    r
}

#[test]
fn methods_see_identical_measurements() {
    let scenario = builtin_scenario("one-target").unwrap();
    let seen: Mutex<Vec<(u64, String, Measurement)>> = Mutex::new(Vec::new());
    let methods = vec![MethodConfig::named("tigre").unwrap(), MethodConfig::named("mp-iaa").unwrap()];
    let options = BenchOptions::default();
    run_trials_observed(&scenario, &methods, 1, 40, &options, |seed, name, y| {
        seen.lock().unwrap().push((seed, name.to_string(), y.clone()));
    })
    .unwrap();
    let seen = seen.into_inner().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[0].0, 40);
    assert_eq!(seen[1].0, 40);
    assert_eq!(seen[0].1, "tigre");
    assert_eq!(seen[1].1, "mp-iaa");
    let bits = |m: &Measurement| m.y.iter().flat_map(|v| [v.re.to_bits(), v.im.to_bits()]).collect::<Vec<_>>();
    assert_eq!(bits(&seen[0].2), bits(&seen[1].2));
    assert!(seen[0].2.noise_sigma > 0.0);
}

#[test]
fn parallel_and_serial_agree_and_repeat() {
    let scenario = builtin_scenario("one-target").unwrap();
    let methods = MethodConfig::defaults();
    let serial = BenchOptions {
        parallel: false,
        ..BenchOptions::default()
    };
    let a = run_trials(&scenario, &methods, 4, 7, &BenchOptions::default()).unwrap();
    let b = run_trials(&scenario, &methods, 4, 7, &serial).unwrap();
    let c = run_trials(&scenario, &methods, 4, 7, &BenchOptions::default()).unwrap();
    let a = without_times(a);
    assert_eq!(a, without_times(b));
    assert_eq!(a, without_times(c));
    assert_eq!(a.trials.len(), 12);
    let seeds: Vec<u64> = a.trials_for("tigre").map(|t| t.seed).collect();
    assert_eq!(seeds, vec![7, 8, 9, 10]);
}

#[test]
fn aggregates_are_plain_means_of_trials() {
    let scenario = builtin_scenario("one-target").unwrap();
    let methods = MethodConfig::defaults();
    let r = run_trials(&scenario, &methods, 5, 100, &BenchOptions::default()).unwrap();
    assert_eq!(r.aggregates.len(), 3);
    for agg in &r.aggregates {
        let trials: Vec<&TrialResult> = r.trials_for(&agg.method).collect();
        assert_eq!(agg.trial_count, 5);
        let n = trials.len() as f64;
        let mean = |f: fn(&TrialResult) -> f64| trials.iter().map(|t| f(t)).sum::<f64>() / n;
        assert!((agg.mean_error - mean(|t| t.error)).abs() < 1e-12 * agg.mean_error.max(1.0));
        assert!((agg.mean_iterations - mean(|t| t.iterations as f64)).abs() < 1e-12);
        assert!((agg.mean_f1 - mean(|t| t.metrics.scores.f1)).abs() < 1e-12);
        let var = trials.iter().map(|t| (t.error - agg.mean_error).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((agg.std_error - var.sqrt()).abs() < 1e-10 * agg.std_error.max(1.0));
        for t in &trials {
            assert!(t.error >= 0.0);
            assert_eq!(t.error, t.metrics.frobenius_sq_error);
        }
        let recomputed = AggregateResult::from_trials(&agg.method, &trials);
        assert_eq!(&recomputed, agg);
    }
}

#[test]
fn single_trial_has_zero_spread() {
    let scenario = builtin_scenario("one-target").unwrap();
    let r = run_trials(&scenario, &[MethodConfig::named("tigre").unwrap()], 1, 0, &BenchOptions::default()).unwrap();
    let a = &r.aggregates[0];
    assert_eq!((a.std_error, a.std_iterations, a.std_time_s, a.std_f1), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn failing_trial_reports_its_seed() {
    let mut scenario = builtin_scenario("one-target").unwrap();
    scenario.scene = Scene::default();
    let err = run_trials(&scenario, &MethodConfig::defaults(), 3, 55, &BenchOptions::default()).unwrap_err();
    match err {
        Error::Trial { seed, source, .. } => {
            assert_eq!(seed, 55);
            assert!(matches!(*source, Error::ZeroSignal));
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let scenario = builtin_scenario("one-target").unwrap();
    let options = BenchOptions::default();
    assert!(run_trials(&scenario, &MethodConfig::defaults(), 0, 0, &options).is_err());
    assert!(run_trials(&scenario, &[], 1, 0, &options).is_err());
    let mut off_grid = scenario.clone();
    off_grid.scene.emitters[1].dod_deg = 41.0;
    assert!(matches!(
        run_trials(&off_grid, &MethodConfig::defaults(), 1, 0, &options),
        Err(Error::OffGridEmitter { index: 1, .. })
    ));
}
