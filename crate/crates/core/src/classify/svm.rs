//! Linear soft-margin SVM trained by stochastic subgradient descent.
//!
//! Minimizes `0.5 |w|^2 + C * sum_i max(0, 1 - y_i (w . z_i + b))` over
//! z-scored features. Rescaled by `1 / (C n)` this is the Pegasos objective
//! with `lambda = 1 / (C n)`, step size `1 / (lambda t)` and projection onto
//! the ball of radius `1 / sqrt(lambda)`. The bias is an extra weight on a
//! constant input. The returned weights average the iterates of the second
//! half of training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_COUNT};
use super::CellClass;
use crate::error::{Error, Result};

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_C: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: [f64; FEATURE_COUNT],
    pub bias: f64,
    pub feature_mean: [f64; FEATURE_COUNT],
    /// Strictly positive per-feature scale used for z-scoring.
    pub feature_scale: [f64; FEATURE_COUNT],
    pub c: f64,
    pub seed: u64,
    /// Assigned when the model is persisted; 0 for unsaved models.
    pub version: u64,
    /// Annotation revision the training labels were read from.
    pub training_revision: Option<u64>,
}

impl SvmModel {
    pub fn normalize(&self, x: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let raw = x.to_array();
        std::array::from_fn(|i| (raw[i] - self.feature_mean[i]) / self.feature_scale[i])
    }

    pub fn decision_value(&self, x: &FeatureVector) -> f64 {
        let z = self.normalize(x);
        self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

fn check_finite(x: &FeatureVector) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("non-finite feature vector {x:?}")))
    }
}

fn class_sign(class: CellClass) -> Result<f64> {
    match class {
        CellClass::Neuron => Ok(1.0),
        CellClass::Glia => Ok(-1.0),
        CellClass::Unlabeled => Err(Error::invalid("training labels must be neuron or glia")),
    }
}

/// Class is neuron iff the decision value is `>= 0`.
pub fn predict(model: &SvmModel, x: &FeatureVector) -> Result<(CellClass, f64)> {
    check_finite(x)?;
    let d = model.decision_value(x);
    let class = if d >= 0.0 {
        CellClass::Neuron
    } else {
        CellClass::Glia
    };
    Ok((class, d))
}

pub fn train_svm(
    features: &[FeatureVector],
    labels: &[CellClass],
    c: f64,
    seed: u64,
) -> Result<SvmModel> {
    train_svm_with_epochs(features, labels, c, seed, DEFAULT_EPOCHS)
}

pub fn train_svm_with_epochs(
    features: &[FeatureVector],
    labels: &[CellClass],
    c: f64,
    seed: u64,
    epochs: usize,
) -> Result<SvmModel> {
    if features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    if epochs == 0 {
        return Err(Error::invalid("epoch count must be positive"));
    }
    let y: Vec<f64> = labels.iter().map(|&l| class_sign(l)).collect::<Result<_>>()?;
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::invalid("training data must contain both neuron and glia examples"));
    }
    for f in features {
        check_finite(f)?;
    }

    let n = features.len();
    let (mean, scale) = normalization(features);
    let zs: Vec<[f64; FEATURE_COUNT + 1]> = features
        .iter()
        .map(|f| {
            let raw = f.to_array();
            let mut z = [1.0; FEATURE_COUNT + 1];
            for i in 0..FEATURE_COUNT {
                z[i] = (raw[i] - mean[i]) / scale[i];
            }
            z
        })
        .collect();

    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let total_steps = epochs * n;
    let average_from = total_steps / 2;
    let mut w = [0.0f64; FEATURE_COUNT + 1];
    let mut avg = [0.0f64; FEATURE_COUNT + 1];
    let mut averaged = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0usize;

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = y[i] * dot(&w, &zs[i]);
            let shrink = 1.0 - eta * lambda;
            for v in w.iter_mut() {
                *v *= shrink;
            }
            if margin < 1.0 {
                for (v, z) in w.iter_mut().zip(&zs[i]) {
                    *v += eta * y[i] * z;
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
            if t > average_from {
                averaged += 1;
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += v;
                }
            }
        }
    }
    avg.iter_mut().for_each(|a| *a /= averaged as f64);

    let mut weights = [0.0; FEATURE_COUNT];
    weights.copy_from_slice(&avg[..FEATURE_COUNT]);
    Ok(SvmModel {
        weights,
        bias: avg[FEATURE_COUNT],
        feature_mean: mean,
        feature_scale: scale,
        c,
        seed,
        version: 0,
        training_revision: None,
    })
}

fn normalization(features: &[FeatureVector]) -> ([f64; FEATURE_COUNT], [f64; FEATURE_COUNT]) {
    let n = features.len() as f64;
    let mut mean = [0.0; FEATURE_COUNT];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f.to_array()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; FEATURE_COUNT];
    for f in features {
        for (i, v) in f.to_array().iter().enumerate() {
            var[i] += (v - mean[i]).powi(2);
        }
    }
    let scale = std::array::from_fn(|i| {
        let s = (var[i] / n).sqrt();
        if s > 1e-12 * mean[i].abs().max(1.0) {
            s
        } else {
            1.0
        }
    });
    (mean, scale)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::synthetic::gaussian_classes;

    fn fv(v0: f64) -> FeatureVector {
        FeatureVector::from_array([v0, 1.0, 2.0, 3.0, 0.0, 0.0])
    }

    #[test]
    fn separable_pair() {
        let feats = [fv(10.0), fv(20.0)];
        let labels = [CellClass::Glia, CellClass::Neuron];
        let m = train_svm(&feats, &labels, 1.0, 7).unwrap();
        let (c0, d0) = predict(&m, &feats[0]).unwrap();
        let (c1, d1) = predict(&m, &feats[1]).unwrap();
        assert_eq!((c0, c1), (CellClass::Glia, CellClass::Neuron));
        assert!(d0 < 0.0 && d1 > 0.0);
        // constant features fall back to unit scale
        assert_eq!(m.feature_scale[1], 1.0);
    }

    #[test]
    fn well_separated_clusters_train_perfectly() {
        let set = gaussian_classes(100, 6.0, &[0, 3], 5);
        let m = train_svm(&set.features, &set.labels, 1.0, 1).unwrap();
        for (f, l) in set.features.iter().zip(&set.labels) {
            assert_eq!(predict(&m, f).unwrap().0, *l);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let set = gaussian_classes(40, 2.0, &[1], 9);
        let a = train_svm(&set.features, &set.labels, 0.5, 3).unwrap();
        let b = train_svm(&set.features, &set.labels, 0.5, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tie_goes_to_neuron() {
        let m = SvmModel {
            weights: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            bias: 0.0,
            feature_mean: [5.0; FEATURE_COUNT],
            feature_scale: [1.0; FEATURE_COUNT],
            c: 1.0,
            seed: 0,
            version: 0,
            training_revision: None,
        };
        let (class, d) = predict(&m, &FeatureVector::from_array([5.0; 6])).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(class, CellClass::Neuron);
    }

    #[test]
    fn decision_uses_stored_normalization() {
        let set = gaussian_classes(30, 3.0, &[0, 1], 2);
        let m = train_svm(&set.features, &set.labels, 1.0, 0).unwrap();
        let x = set.features[4];
        let raw = x.to_array();
        let manual: f64 = (0..FEATURE_COUNT)
            .map(|i| m.weights[i] * (raw[i] - m.feature_mean[i]) / m.feature_scale[i])
            .sum::<f64>()
            + m.bias;
        assert_eq!(predict(&m, &x).unwrap().1, manual);
    }

    #[test]
    fn invalid_inputs() {
        let feats = [fv(1.0), fv(2.0)];
        assert!(train_svm(&feats, &[CellClass::Neuron; 2], 1.0, 0).is_err());
        assert!(train_svm(&feats, &[CellClass::Neuron], 1.0, 0).is_err());
        assert!(train_svm(&feats, &[CellClass::Neuron, CellClass::Unlabeled], 1.0, 0).is_err());
        assert!(train_svm(&[fv(f64::NAN), fv(2.0)], &[CellClass::Neuron, CellClass::Glia], 1.0, 0).is_err());
        let m = train_svm(&feats, &[CellClass::Neuron, CellClass::Glia], 1.0, 0).unwrap();
        assert!(predict(&m, &fv(f64::INFINITY)).is_err());
    }
}
