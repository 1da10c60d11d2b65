//! Metrics against independent counting oracles.

mod common;

use common::{bca_oracle, uia_oracle};
use eegshield::eval::{bca, uia};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn hand_case() {
    assert_eq!(bca(&[0, 0, 1, 1, 1], &[0, 1, 1, 1, 1], 2).unwrap(), 0.875);
}

#[test]
fn constant_predictor_scores_half_on_two_classes() {
    for ones in 1..20 {
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i < ones)).collect();
        assert_eq!(bca(&[1; 20], &labels, 2).unwrap(), 0.5);
    }
}

#[test]
fn random_instances_match_oracles_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let k = rng.random_range(1..8);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        assert_eq!(
            bca(&preds, &labels, k).unwrap(),
            bca_oracle(&preds, &labels)
        );
        assert_eq!(uia(&preds, &labels).unwrap(), uia_oracle(&preds, &labels));
    }
}

proptest! {
    #[test]
    fn balanced_classes_make_bca_equal_accuracy(
        k in 1usize..6,
        per in 1usize..20,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..k * per).map(|i| i % k).collect();
        let preds: Vec<usize> = labels.iter().map(|&y| if rng.random_bool(0.6) { y } else { rng.random_range(0..k) }).collect();
        let b = bca(&preds, &labels, k).unwrap();
        let a = uia(&preds, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-12, "bca {} vs accuracy {}", b, a);
    }

    #[test]
    fn bca_is_permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..50);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        let pl: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let pp: Vec<usize> = order.iter().map(|&i| preds[i]).collect();
        prop_assert_eq!(bca(&preds, &labels, 3).unwrap(), bca_oracle(&pp, &pl));
    }
}

#[test]
fn errors() {
    assert!(bca(&[], &[], 2).is_err());
    assert!(uia(&[0], &[0, 1]).is_err());
    assert!(bca(&[0], &[5], 2).is_err());
}
