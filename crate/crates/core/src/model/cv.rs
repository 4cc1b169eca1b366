use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::logistic::fit_logistic_masked;
use super::mlp::fit_mlp_masked;
use super::{Model, ModelKind, OptimizerSettings};
use crate::dataset::Samples;
use crate::error::{Error, Result};

/// Mean of the per-class correct-classification rates, `(TPR + TNR) / 2`.
pub fn balanced_accuracy(labels: &[u8], predictions: &[u8]) -> Result<f64> {
    rates(labels, predictions, labels.iter().map(|_| true))
}

fn rates(labels: &[u8], predictions: &[u8], include: impl Iterator<Item = bool>) -> Result<f64> {
    let mut counts = [[0usize; 2]; 2]; // [label][correct]
    for ((&y, &p), keep) in labels.iter().zip(predictions).zip(include) {
        if keep {
            counts[usize::from(y)][usize::from(y == p)] += 1;
        }
    }
    let rate = |class: usize| {
        let total = counts[class][0] + counts[class][1];
        if total == 0 {
            Err(Error::Numerical(format!(
                "evaluation set has no samples of class {class}"
            )))
        } else {
            Ok(counts[class][1] as f64 / total as f64)
        }
    };
    Ok(0.5 * (rate(1)? + rate(0)?))
}

/// Assigns every sample to one of `folds` folds, stratified by label: each
/// class is shuffled with the seeded stream and dealt round-robin.
pub fn stratified_folds(labels: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::Numerical(format!(
                "class {class} has {} samples, fewer than the {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (k, i) in members.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Ok(assignment)
}

/// Stratified k-fold balanced accuracy for an arbitrary learner.
///
/// `fit_predict` receives the samples and a 0/1 training mask and returns a
/// hard prediction for every sample; only held-out predictions are scored.
pub fn cv_balanced_accuracy_with<S, F>(
    ds: &S,
    folds: usize,
    seed: u64,
    mut fit_predict: F,
) -> Result<f64>
where
    S: Samples + ?Sized,
    F: FnMut(&S, &[f64]) -> Result<Vec<u8>>,
{
    let labels = ds.labels();
    let assignment = stratified_folds(&labels, folds, seed)?;
    let mut total = 0.0;
    for fold in 0..folds {
        let mask: Vec<f64> = assignment
            .iter()
            .map(|&a| if a == fold { 0.0 } else { 1.0 })
            .collect();
        let predictions = fit_predict(ds, &mask)?;
        if predictions.len() != labels.len() {
            return Err(Error::InvalidInput("prediction count mismatch".into()));
        }
        total += rates(&labels, &predictions, assignment.iter().map(|&a| a == fold))?;
    }
    Ok(total / folds as f64)
}

/// Stratified k-fold balanced accuracy at threshold 0.5.
pub fn cv_balanced_accuracy<S: Samples + ?Sized>(
    ds: &S,
    kind: ModelKind,
    folds: usize,
    lambda: f64,
    opt: &OptimizerSettings,
    seed: u64,
) -> Result<f64> {
    cv_balanced_accuracy_with(ds, folds, seed, |ds, mask| {
        let model = match kind {
            ModelKind::Logistic => Model::Logistic(fit_logistic_masked(ds, Some(mask), lambda, opt)?.0),
            ModelKind::Mlp => Model::Mlp(fit_mlp_masked(ds, Some(mask), lambda, opt)?.0),
        };
        model.predict_labels(ds)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DenseSamples;

    fn imbalanced(n: usize, positives: usize) -> DenseSamples {
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i < positives)).collect();
        let inputs = labels.iter().map(|&y| f64::from(y)).collect();
        DenseSamples::new(1, inputs, labels).unwrap()
    }

    #[test]
    fn majority_predictor_is_one_half() {
        let ds = imbalanced(1000, 30);
        let acc = cv_balanced_accuracy_with(&ds, 5, 0, |ds, _| Ok(vec![0; ds.len()])).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn leaked_label_is_perfect() {
        let ds = imbalanced(500, 50);
        let acc =
            cv_balanced_accuracy_with(&ds, 4, 3, |ds, _| Ok(ds.labels())).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn fixed_rates_per_fold() {
        // 90/10 split; in every held-out fold flip 20% of positives and 40%
        // of negatives so TPR = 0.8 and TNR = 0.6.
        let ds = imbalanced(1000, 100);
        let labels = ds.labels();
        let acc = cv_balanced_accuracy_with(&ds, 5, 7, |_, mask| {
            let mut seen = [0usize; 2];
            Ok(labels
                .iter()
                .zip(mask)
                .map(|(&y, &m)| {
                    if m > 0.0 {
                        return y;
                    }
                    let k = seen[usize::from(y)];
                    seen[usize::from(y)] += 1;
                    let flip = if y == 1 { k % 5 == 0 } else { k % 5 < 2 };
                    if flip {
                        1 - y
                    } else {
                        y
                    }
                })
                .collect())
        })
        .unwrap();
        assert!((acc - 0.7).abs() < 1e-12, "{acc}");
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<u8> = (0..103).map(|i| u8::from(i % 10 == 0)).collect();
        let a = stratified_folds(&labels, 3, 1).unwrap();
        for f in 0..3 {
            let pos = (0..103).filter(|&i| a[i] == f && labels[i] == 1).count();
            assert!((3..=4).contains(&pos));
        }
        assert!(stratified_folds(&labels, 1, 1).is_err());
        assert!(stratified_folds(&[1, 0, 0, 0], 2, 1).is_err());
    }

    #[test]
    fn unbalanced_metric_definition() {
        let acc = balanced_accuracy(&[1, 1, 0, 0, 0, 0], &[1, 0, 0, 0, 0, 1]).unwrap();
        assert!((acc - 0.5 * (0.5 + 0.75)).abs() < 1e-15);
        assert!(balanced_accuracy(&[0, 0], &[0, 1]).is_err());
    }
}
