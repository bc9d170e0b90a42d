//! Labelled feature sets drawn from two Gaussian classes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::features::{FeatureVector, FEATURE_COUNT};
use super::CellClass;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<CellClass>,
}

/// `per_class` neurons and `per_class` glia with unit-variance isotropic
/// noise. Glia means are shifted by `separation` along each feature listed
/// in `shifted`; all other means coincide.
pub fn gaussian_classes(per_class: usize, separation: f64, shifted: &[usize], seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for class in [CellClass::Neuron, CellClass::Glia] {
        for _ in 0..per_class {
            let mut v = [0.0; FEATURE_COUNT];
            for (i, slot) in v.iter_mut().enumerate() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let shift = if class == CellClass::Glia && shifted.contains(&i) {
                    separation
                } else {
                    0.0
                };
                *slot = noise + shift;
            }
            features.push(FeatureVector::from_array(v));
            labels.push(class);
        }
    }
    LabeledSet { features, labels }
}

/// Two 6-D classes of 200 examples whose means differ by 3 pooled standard
/// deviations along two features.
pub fn acceptance_set(seed: u64) -> LabeledSet {
    gaussian_classes(200, 3.0, &[0, 1], seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let a = acceptance_set(1);
        assert_eq!(a.features.len(), 400);
        assert_eq!(a.labels.iter().filter(|&&l| l == CellClass::Neuron).count(), 200);
        assert_eq!(a, acceptance_set(1));
        assert_ne!(a, acceptance_set(2));
    }

    #[test]
    fn class_means_separated() {
        let s = gaussian_classes(2000, 3.0, &[0, 1], 4);
        let mean = |class: CellClass, i: usize| {
            let vals: Vec<f64> = s
                .features
                .iter()
                .zip(&s.labels)
                .filter(|(_, &l)| l == class)
                .map(|(f, _)| f.to_array()[i])
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        for i in 0..FEATURE_COUNT {
            let gap = mean(CellClass::Glia, i) - mean(CellClass::Neuron, i);
            let expected = if i < 2 { 3.0 } else { 0.0 };
            assert!((gap - expected).abs() < 0.15, "feature {i}: {gap}");
        }
    }
}
