use eigfluct::experiment::{
    ks_one_sample, ks_two_sample, prepare, run_experiment, run_replication, DiagnosticsLevel,
    ExperimentConfig, MatrixSource, ReportStatus,
};
use eigfluct::graphon::{BlockModel, GraphonModel};
use eigfluct::limits::{chi_square_law, law_cdf, sample_law, LimitLaw};
use eigfluct::sample::{StreamKey, StreamLabel};
use eigfluct::spectrum::{analytic_spectrum, regime_constants, Regime};
use statrs::distribution::{ContinuousCDF, Normal};

fn power() -> GraphonModel {
    GraphonModel::PowerKernel { alpha: 0.5 }
}

fn symmetric_sbm() -> GraphonModel {
    GraphonModel::Block(BlockModel::symmetric(0.6, 0.2))
}

#[test]
fn smoke_run_on_power_kernel() {
    let report = run_experiment(&ExperimentConfig::new(power(), 1, 200, 10, 1)).unwrap();
    assert_eq!(report.regime, Regime::NonDegenerate);
    assert_eq!(report.retained + report.discarded.len(), 10);
    assert_eq!(report.records.len(), report.retained);
    assert_eq!(report.status, ReportStatus::Ok);
    assert!(report.ks_for("statistic_nondeg").is_some());
}

#[test]
fn replications_are_deterministic_and_order_free() {
    let mut config = ExperimentConfig::new(symmetric_sbm(), 2, 60, 10, 9);
    config.diagnostics = DiagnosticsLevel::Full;
    let setup = prepare(&config).unwrap();
    let forward: Vec<_> = (0..6)
        .map(|rep| run_replication(&config, &setup.spec, &setup.constants, rep))
        .collect();
    let mut backward: Vec<_> = (0..6)
        .rev()
        .map(|rep| run_replication(&config, &setup.spec, &setup.constants, rep))
        .collect();
    backward.sort_by_key(|r| r.rep);
    assert_eq!(forward, backward);
}

#[test]
fn constant_graphon_statistics_vanish() {
    let config =
        ExperimentConfig::new(GraphonModel::Block(BlockModel::constant(0.5)), 1, 64, 10, 2);
    let setup = prepare(&config).unwrap();
    assert_eq!(setup.constants.regime, Regime::Degenerate);
    for rep in 0..3 {
        let rec = run_replication(&config, &setup.spec, &setup.constants, rep);
        // λ_1(K_n) = (n−1)c with eigenvector 1
        assert!((rec.kernel.unwrap().value - 31.5).abs() < 1e-11);
        assert!(rec.statistic_deg.unwrap().abs() < 1e-11);
    }
}

#[test]
fn symmetric_sbm_single_replication_is_moderate() {
    let config = ExperimentConfig::new(symmetric_sbm(), 2, 1000, 10, 5);
    let setup = prepare(&config).unwrap();
    let rec = run_replication(&config, &setup.spec, &setup.constants, 0);
    let deg = rec.statistic_deg.unwrap();
    assert!(deg.is_finite() && deg.abs() < 20.0, "{deg}");
    let diag = rec.diagnostics.unwrap();
    assert!(diag.hoeffding.linear.abs() < 1e-12);
    assert!(diag.resolvent_correction.is_some());
}

#[test]
fn adjacency_needs_edge_probabilities() {
    let mut config = ExperimentConfig::new(GraphonModel::BrownianSqrt, 1, 100, 10, 1);
    config.source = MatrixSource::Adjacency;
    let err = run_experiment(&config).unwrap_err();
    assert!(err
        .to_string()
        .contains("edge sampling requires sup norm ≤ 1"));
}

#[test]
fn config_bounds() {
    assert!(ExperimentConfig::new(power(), 1, 49, 10, 0)
        .validate()
        .is_err());
    assert!(ExperimentConfig::new(power(), 1, 50, 9, 0)
        .validate()
        .is_err());
    assert!(ExperimentConfig::new(power(), 0, 50, 10, 0)
        .validate()
        .is_err());
}

#[test]
fn ks_null_calibration_one_sample() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = StreamKey::new(17, 0, StreamLabel::Limit).rng();
    let xs = sample_law(&LimitLaw::Gaussian { variance: 1.0 }, 10_000, &mut rng);
    let t = ks_one_sample(&xs, |x| normal.cdf(x)).unwrap();
    assert!(t.p_value > 0.001, "{t:?}");
}

#[test]
fn ks_two_sample_separates_shifted_normals() {
    let mut rng = StreamKey::new(4, 0, StreamLabel::Limit).rng();
    let a = sample_law(&LimitLaw::Gaussian { variance: 1.0 }, 1000, &mut rng);
    let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
    assert!(ks_two_sample(&a, &b).unwrap().statistic > 0.99);
}

#[test]
fn ks_two_sample_null_on_chi_square_law() {
    let spec = analytic_spectrum(&symmetric_sbm()).unwrap();
    let c = regime_constants(&spec, 2, None).unwrap();
    let law = chi_square_law(&spec, &c, 2).unwrap();
    let a = sample_law(
        &law,
        10_000,
        &mut StreamKey::new(1, 0, StreamLabel::Limit).rng(),
    );
    let b = sample_law(
        &law,
        10_000,
        &mut StreamKey::new(2, 0, StreamLabel::Limit).rng(),
    );
    assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.001);
}

#[test]
fn ks_rejection_rate_is_calibrated() {
    let law = LimitLaw::Gaussian {
        variance: 1.0 / 12.0,
    };
    let mut rejections = 0;
    for trial in 0..100 {
        let mut rng = StreamKey::new(2024, trial, StreamLabel::Limit).rng();
        let xs = sample_law(&law, 500, &mut rng);
        if ks_one_sample(&xs, |x| law_cdf(&law, x)).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    assert!(rejections <= 10, "{rejections} rejections in 100 trials");
}

#[test]
fn threads_do_not_change_records() {
    let mut config = ExperimentConfig::new(symmetric_sbm(), 2, 80, 12, 21);
    config.threads = 1;
    let one = run_experiment(&config).unwrap();
    config.threads = 4;
    let four = run_experiment(&config).unwrap();
    assert_eq!(one.records, four.records);
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::new(power(), 1, 60, 10, 8);
    config.diagnostics = DiagnosticsLevel::Full;
    config.out_dir = Some(dir.path().join("a"));
    run_experiment(&config).unwrap();
    config.out_dir = Some(dir.path().join("b"));
    run_experiment(&config).unwrap();
    let a = std::fs::read(dir.path().join("a/records.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/records.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(dir.path().join("a/summary.json").exists());
}

#[test]
fn degenerate_linear_term_collapses() {
    let mut config = ExperimentConfig::new(symmetric_sbm(), 2, 150, 20, 13);
    config.diagnostics = DiagnosticsLevel::Full;
    let report = run_experiment(&config).unwrap();
    let scaled: Vec<f64> = report
        .records
        .iter()
        .map(|r| (150f64).sqrt() * r.diagnostics.as_ref().unwrap().hoeffding.v_rn)
        .collect();
    let mean = scaled.iter().sum::<f64>() / scaled.len() as f64;
    let var = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (scaled.len() - 1) as f64;
    assert!(var < 1e-20, "{var}");
    let deg = report.column("statistic_deg");
    assert!(deg.iter().all(|d| d.is_finite()));
}
