//! Data-independent reference predictors.

use rand::Rng;

/// Predicts a class drawn uniformly from `0..n_classes`.
pub fn uniform_guess<R: Rng + ?Sized>(
    n_classes: usize,
    n_predictions: usize,
    rng: &mut R,
) -> Vec<u32> {
    (0..n_predictions)
        .map(|_| rng.random_range(0..n_classes as u32))
        .collect()
}

/// Predicts a class drawn from the empirical training label distribution.
pub fn random_guess<R: Rng + ?Sized>(
    train_labels: &[u32],
    n_predictions: usize,
    rng: &mut R,
) -> Vec<u32> {
    assert!(!train_labels.is_empty(), "need training labels");
    (0..n_predictions)
        .map(|_| train_labels[rng.random_range(0..train_labels.len())])
        .collect()
}

/// Expected accuracy of [`uniform_guess`].
pub fn uniform_expected_accuracy(n_classes: usize) -> f64 {
    1.0 / n_classes as f64
}

/// Expected accuracy of [`random_guess`] when test labels follow `test_dist`
/// and guesses follow `train_dist`.
pub fn random_expected_accuracy(train_dist: &[f64], test_dist: &[f64]) -> f64 {
    train_dist.iter().zip(test_dist).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainers::accuracy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn empirical_accuracy_matches_expectation() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let labels: Vec<u32> = (0..1000).map(|i| if i % 4 == 0 { 1 } else { 0 }).collect();
        let guesses = random_guess(&labels, 20000, &mut rng);
        let truth: Vec<u32> = (0..20000).map(|i| if i % 4 == 0 { 1 } else { 0 }).collect();
        let expected = random_expected_accuracy(&[0.75, 0.25], &[0.75, 0.25]);
        assert!((accuracy(&truth, &guesses) - expected).abs() < 0.02);
        let uni = uniform_guess(5, 20000, &mut rng);
        let zeros = vec![0u32; 20000];
        assert!((accuracy(&zeros, &uni) - uniform_expected_accuracy(5)).abs() < 0.02);
    }
}
