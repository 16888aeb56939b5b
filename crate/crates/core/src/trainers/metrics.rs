//! Classification metrics over integer labels.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

impl Scores {
    pub fn compute<T: Ord + Copy>(truth: &[T], predicted: &[T]) -> Self {
        Scores {
            accuracy: accuracy(truth, predicted),
            micro_f1: micro_f1(truth, predicted),
            macro_f1: macro_f1(truth, predicted),
        }
    }
}

fn check_lengths<T>(truth: &[T], predicted: &[T]) {
    assert_eq!(
        truth.len(),
        predicted.len(),
        "label vectors differ in length"
    );
}

pub fn accuracy<T: PartialEq>(truth: &[T], predicted: &[T]) -> f64 {
    check_lengths(truth, predicted);
    if truth.is_empty() {
        return 0.0;
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Micro-averaged F1. With one label per example every false positive is
/// also a false negative, so this equals accuracy.
pub fn micro_f1<T: PartialEq>(truth: &[T], predicted: &[T]) -> f64 {
    accuracy(truth, predicted)
}

/// Unweighted mean of per-class F1 over classes that occur in either vector.
pub fn macro_f1<T: Ord + Copy>(truth: &[T], predicted: &[T]) -> f64 {
    check_lengths(truth, predicted);
    let classes: BTreeSet<T> = truth.iter().chain(predicted).copied().collect();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fneg = 0usize;
            for (&t, &p) in truth.iter().zip(predicted) {
                match (t == c, p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fneg += 1,
                    (false, false) => {}
                }
            }
            let denom = 2 * tp + fp + fneg;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .sum();
    total / classes.len() as f64
}
