use entropy_gain::experiments::*;
use entropy_gain::gaussian::Placement;
use entropy_gain::lti::TransferFunction;
use entropy_gain::processes::ProcessSpec;

fn defaults() -> Vec<(&'static str, ExperimentReport)> {
    let s = Settings::default();
    vec![
        ("disturbance", run_disturbance(&DisturbanceParams::default(), &s).unwrap()),
        ("input_disturbance", run_input_disturbance(&DisturbanceParams::default(), &s).unwrap()),
        ("initial_state", run_initial_state(&InitialStateParams::default(), &s).unwrap()),
        ("effective_gain", run_effective_gain(&EffectiveGainParams::default(), &s).unwrap()),
        ("rdf_gap", run_rdf_gap(&RdfGapParams::default(), &s).unwrap()),
        ("networked_mi", run_networked_mi(&NetworkedMiParams::default(), &s).unwrap()),
        ("quantized", run_quantized_discrepancy(&QuantizedParams::default(), &s).unwrap()),
        ("spectrum", run_spectrum(&SpectrumParams::default(), &s).unwrap().report),
        ("jensen", run_jensen(&JensenParams::default(), &s).unwrap()),
        ("probe", run_probe(&ProbeParams::default(), &s).unwrap()),
    ]
}

#[test]
fn shipped_defaults_pass() {
    for (name, r) in defaults() {
        assert!(r.pass, "{name}: limit {} target {} tol {}", r.limit.value, r.target, r.tolerance);
        assert_eq!(r.criterion, Criterion::Within, "{name}");
    }
    let c = run_feedback_collapse(&FeedbackCollapseParams::default(), &Settings::default()).unwrap();
    assert!(c.pass());
}

#[test]
fn aligned_probe_default_filter() {
    let p = ProbeParams {
        aligned_filter: Some(TransferFunction::fir(&[1.0, -1.5]).unwrap()),
        ..ProbeParams::default()
    };
    let r = run_probe(&p, &Settings::default()).unwrap();
    assert!(r.pass, "{:?}", r.limit);
    assert!((r.target + 1.5f64.ln()).abs() < 1e-12);
}

#[test]
fn uniform_probe_small_run() {
    let p = ProbeParams {
        process: ProcessSpec::UniformIid { low: 0.0, high: 1.0 },
        trials: 20_000,
        ..ProbeParams::default()
    };
    let r = run_probe(&p, &Settings::default()).unwrap();
    assert!(r.pass, "{:?}", r.limit);
}

#[test]
fn identical_across_thread_counts() {
    let p = DisturbanceParams {
        placement: Placement::RandomOrthonormal,
        ..DisturbanceParams::default()
    };
    let s = Settings::with_seed(99);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| run_disturbance(&p, &s).unwrap());
    let b = three.install(|| run_disturbance(&p, &s).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let other = run_disturbance(&p, &Settings::with_seed(100)).unwrap();
    assert_ne!(a.records, other.records);
}

#[test]
fn overrides_are_honoured() {
    let s = Settings {
        seed: 0,
        n_grid: Some(vec![20, 40, 80, 160]),
        tolerance: Some(1e-9),
    };
    let r = run_disturbance(&DisturbanceParams::default(), &s).unwrap();
    assert_eq!(r.records.len(), 4);
    assert_eq!(r.tolerance, 1e-9);
    assert_eq!(r.config["n_grid"], serde_json::json!([20, 40, 80, 160]));
}

#[test]
fn config_round_trip_through_json() {
    let p: DisturbanceParams = serde_json::from_str(
        r#"{"filter": {"zeros": [-1.5, -1.25], "poles": [0, 0]}, "seed_covariance": [[1e-4, 0], [0, 1e-4]]}"#,
    )
    .unwrap();
    let r = run_disturbance(&p, &Settings::default()).unwrap();
    assert!((r.target - (1.5f64.ln() + 1.25f64.ln())).abs() < 1e-12);
    assert!(r.pass);
    assert!(serde_json::from_str::<DisturbanceParams>(r#"{"filtr": {}}"#).is_err());
}
