//! Cells, slides and datasets, plus the ways of producing them: file
//! ingestion, masked average pooling, ensemble synthesis and the planted
//! composition generator.

mod ensemble;
mod io;
mod planted;

use std::collections::HashSet;
use std::fmt;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use ensemble::{synthesize_ensemble, synthesize_ensemble_picks, EnsemblePick, SynthesisConfig};
pub use io::{load_dataset, write_dataset, ManifestEntry, MANIFEST_FILE};
pub use planted::{generate_planted_dataset, MixtureComponent, PlantedSpec};

/// Binary gene-expression class of a slide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ClassLabel {
    Class1,
    Class2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Class1, ClassLabel::Class2];

    pub fn other(self) -> ClassLabel {
        match self {
            ClassLabel::Class1 => ClassLabel::Class2,
            ClassLabel::Class2 => ClassLabel::Class1,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            ClassLabel::Class1 => 1,
            ClassLabel::Class2 => 2,
        }
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(ClassLabel::Class1),
            2 => Ok(ClassLabel::Class2),
            other => Err(format!("class label must be 1 or 2, got {other}")),
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(c: ClassLabel) -> u8 {
        c.as_u8()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "class {}", self.as_u8())
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let trimmed = s.trim();
        let digits = trimmed.strip_prefix("class").map(str::trim).unwrap_or(trimmed);
        digits
            .parse::<u8>()
            .map_err(|e| format!("invalid class label `{s}`: {e}"))
            .and_then(ClassLabel::try_from)
    }
}

/// One segmented cell with its pooled appearance features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord<T = f64> {
    pub cell_id: String,
    pub features: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_ref: Option<String>,
}

impl<T: Scalar> CellRecord<T> {
    pub fn new(cell_id: impl Into<String>, features: Vec<T>) -> Self {
        CellRecord {
            cell_id: cell_id.into(),
            features,
            thumbnail_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slide<T = f64> {
    pub slide_id: String,
    pub patient_id: String,
    pub label: Option<ClassLabel>,
    pub cells: Vec<CellRecord<T>>,
    #[serde(default)]
    pub synthetic: bool,
}

impl<T: Scalar> Slide<T> {
    /// Cell features stacked into an `n_cells × D` matrix.
    pub fn feature_matrix(&self, feature_dim: usize) -> Array2<T> {
        stack_features(self.cells.iter().map(|c| c.features.as_slice()), feature_dim)
    }
}

pub(crate) fn stack_features<'a, T: Scalar>(rows: impl Iterator<Item = &'a [T]>, feature_dim: usize) -> Array2<T> {
    let flat: Vec<T> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = flat.len() / feature_dim.max(1);
    Array2::from_shape_vec((n, feature_dim), flat).expect("rows share the feature dimension")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T = f64> {
    pub slides: Vec<Slide<T>>,
    pub feature_dim: usize,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset and checks every invariant.
    pub fn new(slides: Vec<Slide<T>>, feature_dim: usize) -> Result<Self> {
        let ds = Dataset { slides, feature_dim };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::InvalidSpec("feature_dim must be positive".into()));
        }
        let mut seen = HashSet::new();
        for slide in &self.slides {
            if !seen.insert(slide.slide_id.as_str()) {
                return Err(Error::DuplicateSlideId(slide.slide_id.clone()));
            }
            if slide.cells.is_empty() {
                return Err(Error::EmptySlide(slide.slide_id.clone()));
            }
            for cell in &slide.cells {
                if cell.features.len() != self.feature_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.feature_dim,
                        found: cell.features.len(),
                    });
                }
                if cell.features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec(format!(
                        "cell `{}` of slide `{}` has non-finite features",
                        cell.cell_id, slide.slide_id
                    )));
                }
            }
        }
        if self.slides.iter().any(|s| s.label.is_some()) {
            for class in ClassLabel::ALL {
                if !self.slides.iter().any(|s| s.label == Some(class)) {
                    return Err(Error::MissingClass(class));
                }
            }
        }
        Ok(())
    }

    pub fn slide(&self, slide_id: &str) -> Option<&Slide<T>> {
        self.slides.iter().find(|s| s.slide_id == slide_id)
    }

    pub fn slide_index(&self, slide_id: &str) -> Option<usize> {
        self.slides.iter().position(|s| s.slide_id == slide_id)
    }

    pub fn slides_of(&self, class: ClassLabel) -> impl Iterator<Item = &Slide<T>> {
        self.slides.iter().filter(move |s| s.label == Some(class))
    }

    pub fn n_cells(&self) -> usize {
        self.slides.iter().map(|s| s.cells.len()).sum()
    }
}

/// A backbone feature map over one region together with a single instance mask.
#[derive(Debug, Clone)]
pub struct FeatureMap<T = f64> {
    /// `H × W × D` activations.
    pub values: Array3<T>,
    /// `H × W` instance mask.
    pub mask: Array2<bool>,
}

/// Per-channel mean of the feature map over the masked positions.
pub fn masked_average_pool<T: Scalar>(map: &FeatureMap<T>) -> Result<Vec<T>> {
    let (h, w, d) = map.values.dim();
    if map.mask.dim() != (h, w) {
        return Err(Error::DimensionMismatch {
            expected: h * w,
            found: map.mask.len(),
        });
    }
    let mut sum = vec![T::zero(); d];
    let mut count = 0usize;
    for ((i, j), &selected) in map.mask.indexed_iter() {
        if !selected {
            continue;
        }
        count += 1;
        let pixel = map.values.index_axis(Axis(0), i);
        for (acc, &v) in sum.iter_mut().zip(pixel.index_axis(Axis(0), j).iter()) {
            *acc += v;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let n = T::from_usize_lossy(count);
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Round-half-up of a non-negative real, as a count.
pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pool_all_true_mask() {
        let values = Array3::from_shape_vec((2, 2, 1), vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let map = FeatureMap {
            values,
            mask: array![[true, true], [true, true]],
        };
        assert_eq!(masked_average_pool(&map).unwrap(), vec![4.0]);
    }

    #[test]
    fn pool_single_pixel() {
        let values = Array3::from_shape_vec((2, 2, 1), vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let map = FeatureMap {
            values,
            mask: array![[true, false], [false, false]],
        };
        assert_eq!(masked_average_pool(&map).unwrap(), vec![1.0]);
    }

    #[test]
    fn pool_two_channels() {
        // (0,0) -> [2,10], (1,1) -> [4,20]; the other pixels are noise.
        let mut values = Array3::<f64>::from_elem((2, 2, 2), 99.0);
        values[[0, 0, 0]] = 2.0;
        values[[0, 0, 1]] = 10.0;
        values[[1, 1, 0]] = 4.0;
        values[[1, 1, 1]] = 20.0;
        let map = FeatureMap {
            values,
            mask: array![[true, false], [false, true]],
        };
        assert_eq!(masked_average_pool(&map).unwrap(), vec![3.0, 15.0]);
    }

    #[test]
    fn pool_empty_mask() {
        let map = FeatureMap {
            values: Array3::<f32>::zeros((2, 2, 3)),
            mask: Array2::from_elem((2, 2), false),
        };
        assert!(matches!(masked_average_pool(&map), Err(Error::EmptyMask)));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(0.5), 1);
        assert_eq!(round_half_up(2.4999), 2);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn class_label_parsing() {
        assert_eq!("1".parse::<ClassLabel>().unwrap(), ClassLabel::Class1);
        assert_eq!("class 2".parse::<ClassLabel>().unwrap(), ClassLabel::Class2);
        assert!("3".parse::<ClassLabel>().is_err());
        assert_eq!(serde_json::to_string(&ClassLabel::Class2).unwrap(), "2");
    }

    #[test]
    fn validation_rejects_single_labeled_class() {
        let slide = Slide {
            slide_id: "a".into(),
            patient_id: "p".into(),
            label: Some(ClassLabel::Class1),
            cells: vec![CellRecord::new("c", vec![0.0f64])],
            synthetic: false,
        };
        assert!(matches!(
            Dataset::new(vec![slide], 1),
            Err(Error::MissingClass(ClassLabel::Class2))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pool_matches_loop_mean(
                h in 1usize..6, w in 1usize..6, d in 1usize..4,
                seed_vals in proptest::collection::vec(-100.0f64..100.0, 150),
                mask_bits in proptest::collection::vec(any::<bool>(), 36),
            ) {
                let values = Array3::from_shape_fn((h, w, d), |(i, j, k)| seed_vals[(i * 25 + j * 4 + k) % 150]);
                let mut mask = Array2::from_shape_fn((h, w), |(i, j)| mask_bits[i * 6 + j]);
                mask[[0, 0]] = true;
                let pooled = masked_average_pool(&FeatureMap { values: values.clone(), mask: mask.clone() }).unwrap();
                for k in 0..d {
                    let mut s = 0.0;
                    let mut n = 0.0;
                    for i in 0..h {
                        for j in 0..w {
                            if mask[[i, j]] {
                                s += values[[i, j, k]];
                                n += 1.0;
                            }
                        }
                    }
                    prop_assert!((pooled[k] - s / n).abs() <= 1e-12);
                }
            }
        }
    }
}
