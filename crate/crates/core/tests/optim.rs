use cauchy_fde::model::{Field, ModelKind, Theta};
use cauchy_fde::optim::{initial_theta, run_ogd, RunConfig, SpnInit};
use cauchy_fde::spectra::{cw_protocol_truth, sample_cw, spn_protocol_truth, sample_spn};
use cauchy_fde::{Error, FixedPointConfig};

#[test]
fn cw_validation_mean_drops_from_tenth_to_end() {
    let (p, d) = (50, 50);
    let n = 400 * d;
    for gamma in [0.01, 0.1] {
        let (mut early, mut late) = (0.0, 0.0);
        for seed in 0..10u64 {
            let truth = cw_protocol_truth(p, d, seed).unwrap();
            let sample = sample_cw(&truth, Field::Real, seed).unwrap();
            let theta0 = initial_theta(ModelKind::Cw, &sample, 1.0, seed, SpnInit::default()).unwrap();
            let cfg = RunConfig { gamma, seed, trace_interval: n / 10, ..Default::default() };
            let (_, trace) = run_ogd(&sample, &theta0, &cfg, Some(&Theta::Cw(truth))).unwrap();
            early += trace.records[0].validation_loss.unwrap();
            late += trace.final_validation().unwrap();
        }
        assert!(late < early, "gamma {gamma}: N/10 mean {early}, N mean {late}");
    }
}

#[test]
fn forward_failures_abort_after_budget() {
    let truth = spn_protocol_truth(6, 6, 0).unwrap();
    let sample = sample_spn(&truth, Field::Real, 0).unwrap();
    let theta0 = initial_theta(ModelKind::Spn, &sample, 1.2, 0, SpnInit::default()).unwrap();
    let cfg = RunConfig {
        iterations: Some(100),
        fixed_point: FixedPointConfig { max_iterations: 1, ..Default::default() },
        failure_budget: 4,
        ..Default::default()
    };
    match run_ogd(&sample, &theta0, &cfg, None) {
        Err(Error::RunAborted { iteration, failures, last }) => {
            assert_eq!((iteration, failures), (4, 4));
            assert!(matches!(*last, Error::NonConvergence { .. }));
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn optimizer_seed_changes_path_not_sample() {
    let truth = spn_protocol_truth(8, 8, 3).unwrap();
    let sample = sample_spn(&truth, Field::Real, 3).unwrap();
    let theta0 = initial_theta(ModelKind::Spn, &sample, 1.2, 3, SpnInit::default()).unwrap();
    let run = |seed| {
        let cfg = RunConfig { iterations: Some(200), seed, ..Default::default() };
        run_ogd(&sample, &theta0, &cfg, None).unwrap().0
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn infeasible_start_is_rejected() {
    let truth = cw_protocol_truth(4, 4, 0).unwrap();
    let sample = sample_cw(&truth, Field::Real, 0).unwrap();
    let mut theta0 = Theta::Cw(truth);
    theta0.set_from_slice(&[2.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(run_ogd(&sample, &theta0, &RunConfig::default(), None).is_err());
    let wrong_shape = initial_theta(ModelKind::Cw, &sample_cw(&cw_protocol_truth(5, 4, 0).unwrap(), Field::Real, 0).unwrap(), 1.0, 0, SpnInit::default()).unwrap();
    assert!(run_ogd(&sample, &wrong_shape, &RunConfig::default(), None).is_err());
}
