//! End-to-end behaviour of the experiment harness: configuration handling,
//! error classification, report serialisation and the validation suite.

use calderon_core::config::{ExperimentConfig, GoldenRecord};
use calderon_core::harness::{run, validate_suite, SuiteOptions};
use calderon_core::report::ExperimentReport;
use calderon_core::Error;

const SMOKE: &str = "experiment = direct-stability\ndomain = square\nh = 0.1\ngamma1 = 1.1\ngamma2 = 1\n";

#[test]
fn validation_suite_passes_on_a_correct_build() {
    let summary = validate_suite(SuiteOptions::default());
    assert!(summary.all_passed(), "{}", summary.render());
    assert!(summary.checks.len() >= 20);
}

#[test]
fn validation_suite_detects_a_flipped_dtn_sign() {
    let summary = validate_suite(SuiteOptions { flip_dtn_sign: true });
    let failed: Vec<&str> = summary.failures().iter().map(|c| c.name).collect();
    assert!(failed.contains(&"dtn structure"), "{}", summary.render());
    assert!(failed.contains(&"alessandrini identity"), "{}", summary.render());
}

#[test]
fn direct_stability_smoke_run_produces_one_row() {
    let cfg = ExperimentConfig::parse(SMOKE).unwrap();
    let report = run(&cfg).unwrap();
    assert_eq!(report.rows.len(), 1);
    let ratio = report.column("ratio").unwrap()[0];
    assert!(ratio > 0.0 && ratio <= 1.0, "ratio {ratio}");
    // Constant pair: ‖Λ1 − Λ2‖ = 0.1·‖Λ(1)‖ exactly, so the measured
    // constant equals ‖Λ(1)‖ which is at most one in the trace norm.
    let gd = report.column("gamma_diff").unwrap()[0];
    assert!((gd - 0.1).abs() < 1e-12);
    let meta: Vec<&str> = report.meta.iter().map(|(k, _)| k.as_str()).collect();
    assert!(meta.contains(&"config_hash") && meta.contains(&"mesh_vertices"));
}

#[test]
fn reports_are_bit_reproducible_and_round_trip_through_csv() {
    let cfg = ExperimentConfig::parse(SMOKE).unwrap();
    let a = run(&cfg).unwrap().to_csv();
    let b = run(&cfg).unwrap().to_csv();
    assert_eq!(a, b);
    let parsed = ExperimentReport::from_csv(&a).unwrap();
    assert_eq!(parsed.to_csv(), a);
}

#[test]
fn malformed_conductivity_is_a_parse_error_with_input_exit_code() {
    let err = ExperimentConfig::parse_with_overrides(SMOKE, &[("gamma1", "1 + * x")]).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn unknown_keys_and_bad_resolution_are_configuration_errors() {
    let err = ExperimentConfig::parse_with_overrides(SMOKE, &[("colour", "red")]).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert_eq!(err.exit_code(), 1);
    let cfg = ExperimentConfig::parse(
        "experiment = cgo-decay\ndomain = square\nh = 0.05\ngamma1 = 1 + 0.2*x*y\ntau = 1, 2, 4, 40\n",
    )
    .unwrap();
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn non_elliptic_conductivity_is_rejected_before_solving() {
    let cfg = ExperimentConfig::parse_with_overrides(SMOKE, &[("gamma1", "x - 0.5")]);
    let err = cfg.and_then(|c| run(&c)).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}

#[test]
fn golden_record_detects_perturbed_reports() {
    let cfg = ExperimentConfig::parse(SMOKE).unwrap();
    let mut report = run(&cfg).unwrap();
    let golden = GoldenRecord::from_report(&report, &cfg.hash());
    assert!(golden.compare(&report, &cfg.hash()).is_empty());
    let col = report.columns.iter().position(|c| c == "dtn_diff").unwrap();
    report.rows[0][col] *= 1.0 + 1e-4;
    assert_eq!(golden.compare(&report, &cfg.hash()).len(), 1);
}
