use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::svm::{predict, train_svm};
use super::CellClass;
use crate::error::{Error, Result};

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney U / (P N)).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("ROC AUC needs both positive and negative labels"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based average ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_auc: Vec<f64>,
    pub mean_auc: f64,
    pub seed: u64,
    /// Fold index of every example, in input order.
    pub fold_of: Vec<usize>,
}

/// Stratified k-fold assignment: each class is shuffled with `seed` and dealt
/// round-robin across folds.
pub fn stratified_folds(labels: &[CellClass], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    for class in [CellClass::Neuron, CellClass::Glia] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold_of[i] = j % k;
        }
    }
    fold_of
}

/// Stratified k-fold cross-validation of the linear SVM, scored by ROC AUC
/// of held-out decision values (neuron positive).
pub fn cross_validate(
    features: &[FeatureVector],
    labels: &[CellClass],
    k: usize,
    c: f64,
    seed: u64,
) -> Result<CvReport> {
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if labels.contains(&CellClass::Unlabeled) {
        return Err(Error::invalid("cross-validation labels must be neuron or glia"));
    }
    let neurons = labels.iter().filter(|&&l| l == CellClass::Neuron).count();
    let glia = labels.len() - neurons;
    if neurons < k || glia < k {
        return Err(Error::invalid(format!(
            "{k}-fold cross-validation needs {k} examples per class, have {neurons} neuron and {glia} glia"
        )));
    }

    let fold_of = stratified_folds(labels, k, seed);
    let mut fold_auc = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut train_x, mut train_y) = (Vec::new(), Vec::new());
        let (mut scores, mut truth) = (Vec::new(), Vec::new());
        for i in 0..features.len() {
            if fold_of[i] == fold {
                continue;
            }
            train_x.push(features[i]);
            train_y.push(labels[i]);
        }
        let model = train_svm(&train_x, &train_y, c, seed)?;
        for i in (0..features.len()).filter(|&i| fold_of[i] == fold) {
            scores.push(predict(&model, &features[i])?.1);
            truth.push(labels[i] == CellClass::Neuron);
        }
        fold_auc.push(roc_auc(&scores, &truth)?);
    }
    let mean_auc = fold_auc.iter().sum::<f64>() / k as f64;
    Ok(CvReport {
        fold_auc,
        mean_auc,
        seed,
        fold_of,
    })
}
