//! Acceptance gate: one test per criterion, each printing its pass/fail
//! line. `cargo test --test acceptance -- --nocapture` shows the full table.

use shadowtomo::selftest::{run_criteria, CriterionReport};

fn check(index: usize) {
    let reports: Vec<CriterionReport> = run_criteria(&[index], |r| println!("{}", r.line()));
    let report = reports.first().expect("criterion exists");
    assert!(report.passed, "{}", report.line());
}

#[test]
fn criterion_01_algebra_oracle_equivalence() {
    check(1);
}

#[test]
fn criterion_02_anticommuting_uncertainty_bound() {
    check(2);
}

#[test]
fn criterion_03_nfs_coloring_bounds() {
    check(3);
}

#[test]
fn criterion_04_one_body_coloring_bound() {
    check(4);
}

#[test]
fn criterion_05_two_body_fractional_coverage() {
    check(5);
}

#[test]
fn criterion_06_surviving_set_clique_bound() {
    check(6);
}

#[test]
fn criterion_07_mimicking_states() {
    check(7);
}

#[test]
fn criterion_08_all_paulis_end_to_end() {
    check(8);
}

#[test]
fn criterion_09_fermionic_end_to_end() {
    check(9);
}

#[test]
fn criterion_10_compressed_record_fidelity() {
    check(10);
}

#[test]
fn criterion_11_greens_derivatives() {
    check(11);
}
