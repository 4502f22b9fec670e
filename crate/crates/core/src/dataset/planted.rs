use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CellRecord, ClassLabel, Dataset, Slide};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One Gaussian cell population in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: Vec<f64>,
    /// Full `D × D` covariance, row-major nested.
    pub covariance: Vec<Vec<f64>>,
}

/// Recipe for a synthetic two-class dataset where the classes share the same
/// cell populations and differ only in how often each population occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub feature_dim: usize,
    pub components: Vec<MixtureComponent>,
    pub class1_weights: Vec<f64>,
    pub class2_weights: Vec<f64>,
    pub slides_per_class: usize,
    pub cells_per_slide: usize,
    #[serde(default = "one")]
    pub slides_per_patient: usize,
    /// Probability that a cell is replaced by a spurious detection drawn
    /// from a broad isotropic Gaussian (emulates a noisy segmenter).
    #[serde(default)]
    pub noise_fraction: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn invalid<R>(message: String) -> Result<R> {
    Err(Error::InvalidSpec(message))
}

fn one() -> usize {
    1
}

fn default_noise_scale() -> f64 {
    4.0
}

impl PlantedSpec {
    /// Two unit-covariance blobs `separation` apart along the first axis.
    pub fn two_blobs(
        feature_dim: usize,
        separation: f64,
        class1_weights: [f64; 2],
        class2_weights: [f64; 2],
        slides_per_class: usize,
        cells_per_slide: usize,
    ) -> Self {
        let identity: Vec<Vec<f64>> = (0..feature_dim)
            .map(|i| (0..feature_dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut far = vec![0.0; feature_dim];
        far[0] = separation;
        PlantedSpec {
            feature_dim,
            components: vec![
                MixtureComponent {
                    mean: vec![0.0; feature_dim],
                    covariance: identity.clone(),
                },
                MixtureComponent {
                    mean: far,
                    covariance: identity,
                },
            ],
            class1_weights: class1_weights.to_vec(),
            class2_weights: class2_weights.to_vec(),
            slides_per_class,
            cells_per_slide,
            slides_per_patient: 1,
            noise_fraction: 0.0,
            noise_scale: default_noise_scale(),
        }
    }

    pub fn weights(&self, class: ClassLabel) -> &[f64] {
        match class {
            ClassLabel::Class1 => &self.class1_weights,
            ClassLabel::Class2 => &self.class2_weights,
        }
    }

    fn validate(&self) -> Result<Vec<DMatrix<f64>>> {
        let d = self.feature_dim;
        if d == 0 || self.components.is_empty() {
            return invalid("need a positive feature_dim and at least one component".into());
        }
        if self.slides_per_class == 0 || self.cells_per_slide == 0 || self.slides_per_patient == 0 {
            return invalid("slide, cell and patient counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) || self.noise_scale < 0.0 {
            return invalid("noise_fraction must lie in [0,1] and noise_scale be non-negative".into());
        }
        for class in ClassLabel::ALL {
            let w = self.weights(class);
            if w.len() != self.components.len() {
                return invalid(format!(
                    "{class} has {} weights for {} components",
                    w.len(),
                    self.components.len()
                ));
            }
            if w.iter().any(|&x| !(x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return invalid(format!("{class} weights must be non-negative and sum to 1"));
            }
        }
        self.components
            .iter()
            .enumerate()
            .map(|(k, comp)| {
                if comp.mean.len() != d || comp.covariance.len() != d || comp.covariance.iter().any(|r| r.len() != d) {
                    return invalid(format!("component {k} does not match feature_dim {d}"));
                }
                let cov = DMatrix::from_fn(d, d, |i, j| comp.covariance[i][j]);
                if (&cov - cov.transpose()).amax() > 1e-12 {
                    return invalid(format!("component {k} covariance is not symmetric"));
                }
                let eig = SymmetricEigen::new(cov);
                let scale = eig.eigenvalues.amax().max(1.0);
                if eig.eigenvalues.min() < -1e-10 * scale {
                    return invalid(format!("component {k} covariance is not positive semi-definite"));
                }
                let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root))
            })
            .collect()
    }
}

/// Samples a labeled dataset from `spec`. Identical `(spec, seed)` pairs give
/// identical datasets.
pub fn generate_planted_dataset<T: Scalar>(spec: &PlantedSpec, seed: u64) -> Result<Dataset<T>> {
    let factors = spec.validate()?;
    let d = spec.feature_dim;
    let noise_center: Vec<f64> = (0..d)
        .map(|j| spec.components.iter().map(|c| c.mean[j]).sum::<f64>() / spec.components.len() as f64)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slides = Vec::with_capacity(2 * spec.slides_per_class);

    for class in ClassLabel::ALL {
        let picker = WeightedIndex::new(spec.weights(class)).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let tag = class.as_u8();
        for s in 0..spec.slides_per_class {
            let slide_id = format!("c{tag}-s{s:03}");
            let cells = (0..spec.cells_per_slide)
                .map(|i| {
                    let features = if spec.noise_fraction > 0.0 && rng.random_bool(spec.noise_fraction) {
                        noise_center
                            .iter()
                            .map(|&m| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                T::lit(m + spec.noise_scale * z)
                            })
                            .collect()
                    } else {
                        let k = picker.sample(&mut rng);
                        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                        let x = &factors[k] * z;
                        spec.components[k]
                            .mean
                            .iter()
                            .zip(x.iter())
                            .map(|(&m, &dx)| T::lit(m + dx))
                            .collect()
                    };
                    CellRecord::new(format!("{slide_id}-{i:04}"), features)
                })
                .collect();
            slides.push(Slide {
                patient_id: format!("c{tag}-p{:03}", s / spec.slides_per_patient),
                slide_id,
                label: Some(class),
                cells,
                synthetic: false,
            });
        }
    }
    Dataset::new(slides, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_contract() {
        let spec = PlantedSpec::two_blobs(8, 10.0, [0.8, 0.2], [0.2, 0.8], 25, 400);
        let ds: Dataset = generate_planted_dataset(&spec, 1).unwrap();
        assert_eq!(ds.slides.len(), 50);
        assert_eq!(ds.feature_dim, 8);
        assert!(ds.slides.iter().all(|s| s.cells.len() == 400));
        assert_eq!(ds.slides_of(ClassLabel::Class2).count(), 25);
    }

    #[test]
    fn composition_follows_weights() {
        let spec = PlantedSpec::two_blobs(3, 20.0, [0.8, 0.2], [0.2, 0.8], 4, 2000);
        let ds: Dataset = generate_planted_dataset(&spec, 5).unwrap();
        for slide in &ds.slides {
            let far = slide.cells.iter().filter(|c| c.features[0] > 10.0).count() as f64 / 2000.0;
            let expected = if slide.label == Some(ClassLabel::Class1) {
                0.2
            } else {
                0.8
            };
            assert!((far - expected).abs() < 0.04, "{far} vs {expected}");
        }
    }

    #[test]
    fn rejects_bad_weights_and_covariance() {
        let mut spec = PlantedSpec::two_blobs(2, 5.0, [0.5, 0.4], [0.5, 0.5], 2, 10);
        assert!(matches!(
            generate_planted_dataset::<f64>(&spec, 0),
            Err(Error::InvalidSpec(_))
        ));
        spec.class1_weights = vec![0.5, 0.5];
        spec.components[1].covariance = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(
            generate_planted_dataset::<f64>(&spec, 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn singular_covariance_is_allowed() {
        let mut spec = PlantedSpec::two_blobs(2, 5.0, [0.5, 0.5], [0.5, 0.5], 2, 10);
        spec.components[0].covariance = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let ds: Dataset<f32> = generate_planted_dataset(&spec, 0).unwrap();
        assert_eq!(ds.n_cells(), 40);
    }

    #[test]
    fn patients_group_slides() {
        let mut spec = PlantedSpec::two_blobs(2, 5.0, [0.5, 0.5], [0.5, 0.5], 6, 5);
        spec.slides_per_patient = 2;
        let ds: Dataset = generate_planted_dataset(&spec, 0).unwrap();
        assert_eq!(ds.slides[0].patient_id, ds.slides[1].patient_id);
        assert_ne!(ds.slides[1].patient_id, ds.slides[2].patient_id);
    }
}
