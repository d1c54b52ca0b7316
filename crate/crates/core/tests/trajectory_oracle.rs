//! Atom-loss trajectories against the brute-force loss master equation.

mod common;

use common::loss::check_loss;
use tribody::couplings::ModelSpec;

#[test]
fn loss_only_matches_master_equation() {
    for n in 2..=5 {
        check_loss(n, ModelSpec::three_body(1.0, 0.0, 0.0), 0.4, &[0.3, 0.8, 1.5], 10_000).unwrap();
    }
}

#[test]
fn loss_with_collective_decay_matches_master_equation() {
    for n in 3..=5 {
        check_loss(n, ModelSpec::three_body(0.7, 0.25, 0.0), 0.3, &[0.2, 0.6, 1.2], 10_000).unwrap();
    }
}
