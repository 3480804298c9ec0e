//! Every catalog entry must pass its manifest and the universal suite; this
//! also exercises the overlap validator across the sphere atlases.

use nullsymp_core::catalog::{get_spacetime, names};
use nullsymp_core::checks::{run_checks, CheckOptions, CheckStatus};

#[test]
fn all_catalog_entries_pass_their_manifests() {
    for name in names() {
        let (spec, entry) = get_spacetime(name, &[]).unwrap();
        let opts = CheckOptions {
            points: 32,
            seed: 7,
            ..Default::default()
        };
        let report = run_checks(&spec, Some(&entry), &opts);
        let failures: Vec<_> = report
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| (c.name.clone(), c.measured, c.tolerance, c.point.clone()))
            .collect();
        assert!(
            failures.is_empty(),
            "{name} failed: {failures:?}"
        );
        assert!(report.passed(), "{name} report did not pass");
    }
}

#[test]
fn skip_statuses_are_reported_not_failed() {
    // the 3-d entry has no 4-d symplectic suite; it must skip, not fail
    let (spec, entry) = get_spacetime("s3_lorentz_3d", &[]).unwrap();
    let opts = CheckOptions {
        points: 16,
        ..Default::default()
    };
    let report = run_checks(&spec, Some(&entry), &opts);
    let skipped: Vec<_> = report
        .checks
        .iter()
        .filter(|c| c.status == CheckStatus::Skip)
        .map(|c| c.name.clone())
        .collect();
    assert!(skipped.iter().any(|n| n.starts_with("pairing")));
    assert!(report.passed());
}

#[test]
fn overlap_consistency_recorded_for_atlases() {
    let (spec, entry) = get_spacetime("r_x_s3", &[]).unwrap();
    let opts = CheckOptions {
        points: 16,
        ..Default::default()
    };
    let report = run_checks(&spec, Some(&entry), &opts);
    let overlap = report
        .checks
        .iter()
        .find(|c| c.name == "overlap_field_consistency")
        .expect("atlas specs check overlaps");
    assert_eq!(overlap.status, CheckStatus::Pass, "{:?}", overlap.measured);
    let invariants = report
        .checks
        .iter()
        .find(|c| c.name == "overlap_scalar_invariants")
        .unwrap();
    assert_eq!(invariants.status, CheckStatus::Pass);
}
