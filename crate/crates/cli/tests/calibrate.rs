use apd_sim::{dark_rate, detection_probability, DetectorParams};
use apd_sim_cli::calibrate::{calibrate, evaluate, Observable, Relation, SearchOptions, Target};
use apd_sim_cli::presets::{load_config, load_targets};

fn target(observable: Observable, value: f64, rel_tol: f64, v_on: Option<f64>) -> Target {
    Target {
        observable,
        value,
        tolerance: value.abs() * rel_tol,
        relation: Relation::Eq,
        dead_time: None,
        v_on,
        rate_n: None,
    }
}

#[test]
fn bundled_detector_meets_the_headline_targets() {
    let (cfg, _) = load_config("headline").unwrap();
    let targets = load_targets("headline_targets").unwrap().targets;
    let result = calibrate(&cfg.conditions(), &targets, SearchOptions::default()).unwrap();
    assert!(result.converged(), "{}", result.report());
    assert_eq!(result.params, DetectorParams::calibrated());
}

#[test]
fn synthetic_targets_are_recovered() {
    let (mut cfg, _) = load_config("headline").unwrap();
    cfg.duration = 2.0;
    let base = cfg.conditions();

    let truth = DetectorParams {
        eta_slope: 0.16,
        dark_n0: 850.0,
        dark_slope: 0.15,
        ..DetectorParams::calibrated()
    };
    let mut targets = vec![
        target(
            Observable::DetectionProbability,
            detection_probability(58.0, &truth),
            0.003,
            Some(58.0),
        ),
        target(
            Observable::DetectionProbability,
            detection_probability(64.0, &truth),
            0.003,
            Some(64.0),
        ),
        target(
            Observable::DarkRate,
            dark_rate(57.5, truth.temperature, &truth),
            0.003,
            Some(57.5),
        ),
        target(
            Observable::DarkRate,
            dark_rate(66.0, truth.temperature, &truth),
            0.003,
            Some(66.0),
        ),
    ];
    let measured = evaluate(&base, &truth, &[target(Observable::EtaQ, 1.0, 0.0, None)]).unwrap();
    targets.push(target(Observable::EtaQ, measured[0].achieved, 0.01, None));

    let result = calibrate(&base, &targets, SearchOptions::default()).unwrap();
    assert!(result.converged(), "{}", result.report());
    let again = evaluate(&base, &result.params, &targets).unwrap();
    for r in &again {
        let rel = (r.achieved - r.target.value).abs() / r.target.value;
        assert!(
            rel < 0.02,
            "{:?}: {} vs {}",
            r.target.observable,
            r.achieved,
            r.target.value
        );
    }
    assert_eq!(again, result.residuals);
}

#[test]
fn objective_is_deterministic() {
    let (mut cfg, _) = load_config("headline").unwrap();
    cfg.duration = 1.0;
    let targets = load_targets("headline_targets").unwrap().targets;
    let det = DetectorParams::calibrated();
    assert_eq!(
        evaluate(&cfg.conditions(), &det, &targets).unwrap(),
        evaluate(&cfg.conditions(), &det, &targets).unwrap()
    );
}
