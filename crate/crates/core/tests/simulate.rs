mod common;

use common::*;
use delinq_chain::linalg::identity;
use delinq_chain::{
    count_transitions, estimate_occupancy, fundamental_matrix, load_panel, normalize_counts, simulate_account,
    simulate_occupancy, simulate_panel, to_canonical, write_panel_csv, DelinquencyState, SimulationSpec, StateConfig,
    TransitionMatrix,
};
use DelinquencyState::*;

fn two_state_half() -> TransitionMatrix {
    // Current holds with probability 1/2 and otherwise writes off; the rest never visited.
    let mut probs = identity(7);
    probs[0] = vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0];
    TransitionMatrix::from_rows(DelinquencyState::ALL.to_vec(), probs, 1e-9).unwrap()
}

#[test]
fn estimated_matrix_recovers_generator() {
    let spec = SimulationSpec::new(canonical_generator(), 100_000, 60, 2024);
    let panel = simulate_panel(&spec).unwrap();
    let estimate = normalize_counts(&count_transitions(&panel)).unwrap();
    let truth = canonical_generator();
    for from in DelinquencyState::TRANSIENT {
        for to in DelinquencyState::ALL {
            let (a, b) = (estimate.prob(from, to), truth.prob(from, to));
            assert!((a - b).abs() <= 0.01, "{from}->{to}: {a} vs {b}");
        }
    }
}

#[test]
fn geometric_occupancy_is_two() {
    let spec = SimulationSpec::new(two_state_half(), 1_000_000, 200, 5);
    let est = simulate_occupancy(&spec).unwrap();
    assert!((est.mean_months[&Current] - 2.0).abs() < 0.02);
    assert_eq!(est.n_censored, 0);
}

#[test]
fn long_horizon_censoring_is_negligible() {
    let spec = SimulationSpec::new(canonical_generator(), 100_000, 600, 6);
    let est = simulate_occupancy(&spec).unwrap();
    assert!(est.censored_fraction() < 0.001);
    let f = fundamental_matrix(&to_canonical(&canonical_generator()).unwrap()).unwrap();
    for (j, s) in f.states.iter().enumerate() {
        assert!((est.mean_months[s] - f.m[0][j]).abs() < 0.1);
    }
}

#[test]
fn short_horizon_reports_censoring() {
    let spec = SimulationSpec::new(canonical_generator(), 10_000, 12, 6);
    let est = simulate_occupancy(&spec).unwrap();
    assert!(est.censored_fraction() > 0.1);
}

#[test]
fn streamed_and_materialized_estimates_agree() {
    let spec = SimulationSpec::new(canonical_generator(), 20_000, 120, 8);
    let streamed = simulate_occupancy(&spec).unwrap();
    let panel = simulate_panel(&spec).unwrap();
    let materialized = estimate_occupancy(&panel, Current).unwrap();
    assert_eq!(streamed, materialized);
}

#[test]
fn single_account_matches_panel_entry() {
    let spec = SimulationSpec::new(canonical_generator(), 1_000, 36, 41);
    let panel = simulate_panel(&spec).unwrap();
    for i in [0, 17, 999] {
        assert_eq!(simulate_account(&spec, i).unwrap(), panel.histories[i]);
    }
}

#[test]
fn csv_round_trip_is_lossless() {
    let spec = SimulationSpec::new(canonical_generator(), 2_000, 48, 3)
        .with_vintages(delinq_chain::Period::new(2021, 6).unwrap(), 5);
    let panel = simulate_panel(&spec).unwrap();
    let mut first = Vec::new();
    write_panel_csv(&panel, &mut first).unwrap();
    let loaded = load_panel(first.as_slice(), &StateConfig::default()).unwrap();
    assert!(loaded.warnings.is_empty());
    let mut second = Vec::new();
    write_panel_csv(&loaded.panel, &mut second).unwrap();
    assert_eq!(first, second);
    assert_eq!(count_transitions(&loaded.panel), count_transitions(&panel));
}

#[test]
fn different_seeds_differ() {
    let a = simulate_panel(&SimulationSpec::new(canonical_generator(), 500, 24, 1)).unwrap();
    let b = simulate_panel(&SimulationSpec::new(canonical_generator(), 500, 24, 2)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut bad = canonical_generator();
    bad.probs[0][0] += 0.1;
    assert!(simulate_panel(&SimulationSpec::new(bad, 10, 10, 0)).is_err());
    let mut spec = SimulationSpec::new(canonical_generator(), 10, 10, 0);
    spec.vintages[0].1 = 9;
    assert!(simulate_panel(&spec).is_err());
}
