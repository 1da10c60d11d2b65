//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::BTreeMap;

/// Per-class recall averaged over classes present in `labels`, counted with a map.
pub fn bca_oracle(preds: &[usize], labels: &[usize]) -> f64 {
    let mut per_class: BTreeMap<usize, (u32, u32)> = BTreeMap::new();
    for i in 0..labels.len() {
        let entry = per_class.entry(labels[i]).or_insert((0, 0));
        entry.1 += 1;
        if preds[i] == labels[i] {
            entry.0 += 1;
        }
    }
    let mut total = 0.0;
    for (hits, count) in per_class.values() {
        total += *hits as f64 / *count as f64;
    }
    total / per_class.len() as f64
}

pub fn uia_oracle(preds: &[usize], users: &[usize]) -> f64 {
    let mut hits = 0;
    for i in 0..users.len() {
        if preds[i] == users[i] {
            hits += 1;
        }
    }
    hits as f64 / users.len() as f64
}
