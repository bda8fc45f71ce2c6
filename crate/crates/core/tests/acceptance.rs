//! Acceptance suite. Each criterion prints one status line; failing checks
//! are listed underneath it. Run with `--nocapture` to see the lines.

use rydswitch::acceptance::{run_criterion, AcceptanceOptions, CriterionOutcome};
use rydswitch::presets::Preset;

fn run(id: u8) -> CriterionOutcome {
    let outcome = run_criterion(id, &Preset::baseline(), &AcceptanceOptions::default())
        .unwrap_or_else(|e| panic!("criterion {id} could not run: {e}"));
    println!("{}", outcome.status_line());
    let listed: Vec<_> = if outcome.report_only {
        outcome.checks.iter().collect()
    } else {
        outcome.failures().collect()
    };
    for c in listed {
        println!("  {}: {:.6} vs {:.6} ({})", c.name, c.value, c.reference, c.rule);
    }
    outcome
}

fn assert_criterion(id: u8) {
    let outcome = run(id);
    assert!(outcome.passed, "criterion {id} FAIL: {}", outcome.status_line());
}

#[test]
fn criterion_1_derived_parameters() {
    assert_criterion(1);
}

#[test]
fn criterion_2_closed_form_vs_master_equation() {
    assert_criterion(2);
}

#[test]
fn criterion_3_monte_carlo_vs_closed_forms() {
    assert_criterion(3);
}

#[test]
fn criterion_4_fit_round_trips() {
    assert_criterion(4);
}

#[test]
fn criterion_5_derived_identities() {
    assert_criterion(5);
}

#[test]
fn criterion_6_property_suites() {
    assert_criterion(6);
}

#[test]
fn criterion_7_measured_extinctions_reported() {
    let outcome = run(7);
    assert!(outcome.report_only);
    assert!(outcome.checks.iter().all(|c| c.value.is_finite()));
}
