//! Reverse-mode gradients against central finite differences over 100 seeds.

mod common;

use common::gradcheck::{self, TOL};

const SEEDS: u64 = 100;

fn assert_small(what: &str, seed: u64, err: f64) {
    assert!(err <= TOL, "{what} seed {seed}: relative error {err:e}");
}

#[test]
fn elementary_ops() {
    for seed in 0..SEEDS {
        for (name, err) in gradcheck::elementary_ops(seed) {
            assert_small(name, seed, err);
        }
    }
}

#[test]
fn signal_ops() {
    for seed in 0..SEEDS {
        for (name, err) in gradcheck::signal_ops(seed) {
            assert_small(name, seed, err);
        }
    }
}

#[test]
fn joint_loss() {
    for seed in 0..SEEDS {
        assert_small("joint loss", seed, gradcheck::joint_loss(seed));
    }
}

#[test]
fn sample_wise_loss() {
    for seed in 0..SEEDS {
        assert_small("sample-wise loss", seed, gradcheck::sample_wise_loss(seed));
    }
}

#[test]
fn user_wise_loss() {
    for seed in 0..SEEDS {
        assert_small("user-wise loss", seed, gradcheck::user_wise_loss(seed));
    }
}
