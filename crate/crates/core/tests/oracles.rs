mod common;

use common::checks;

#[test]
fn dare_matches_value_iteration() {
    checks::dare().unwrap();
}

#[test]
fn move_blocking_counts() {
    checks::move_blocking().unwrap();
}

#[test]
fn sets_are_invariant_and_admissible() {
    checks::invariance(300).unwrap();
}

#[test]
fn ic_collapses_inside_high_gain_set() {
    checks::ic_collapse(200).unwrap();
}

#[test]
fn ic_coefficient_matches_grid_search() {
    checks::ic_grid(60).unwrap();
}

#[test]
fn coefficient_decreases_along_regulation() {
    checks::lyapunov(20, 400).unwrap();
}

#[test]
fn mpc_matches_dense_oracles() {
    checks::mpc_oracle(15, 99).unwrap();
}

#[test]
fn plant_equilibrium_and_free_fall() {
    checks::plant().unwrap();
}
