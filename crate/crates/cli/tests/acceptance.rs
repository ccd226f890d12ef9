//! One test per acceptance criterion; each prints a PASS/FAIL line.

use std::path::Path;

use capsim_cli::acceptance::{self, Verdict};

fn check(v: Verdict) {
    println!("{v}");
    assert!(v.passed, "{v}");
}

#[test]
fn criterion_01_elliptic_convergence() {
    check(acceptance::elliptic_convergence());
}

#[test]
fn criterion_02_surface_operator() {
    check(acceptance::surface_operator());
}

#[test]
fn criterion_03_constants_structure() {
    check(acceptance::constants_structure());
}

#[test]
fn criterion_04_flux_compatibility() {
    check(acceptance::flux_compatibility());
}

#[test]
fn criterion_05_picard_contraction() {
    check(acceptance::picard_contraction());
}

#[test]
fn criterion_06_scheme_consistency() {
    check(acceptance::scheme_consistency());
}

#[test]
fn criterion_07_energy_stability() {
    check(acceptance::energy_stability());
}

#[test]
fn criterion_08_delta_limit() {
    check(acceptance::delta_limit());
}

#[test]
fn criterion_09_concentration() {
    check(acceptance::concentration());
}

#[test]
fn criterion_10_rearrangement() {
    check(acceptance::rearrangement());
}

#[test]
fn criterion_11_determinism() {
    check(acceptance::determinism(Path::new(env!("CARGO_BIN_EXE_capsim"))));
}
