//! Reference classifiers on standardized chart variables: logistic regression,
//! a linear SVM and a one-hidden-layer network.

mod linear;
mod mlp;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use linear::{hinge_objective, logistic_objective, train_linear_svm, train_logistic, LinearKind, LinearModel};
pub use mlp::{mlp_objective, train_mlp, Init, MlpGradient, MlpModel, HIDDEN_UNITS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Step at epoch t is `learning_rate / (1 + decay * t)`.
    pub decay: f64,
    /// Full-batch trainers stop once the gradient norm drops below this.
    pub tolerance: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            l2: 1e-3,
            epochs: 500,
            learning_rate: 0.1,
            decay: 0.01,
            tolerance: 1e-6,
            seed: 0,
            init: Init::HeUniform,
        }
    }
}

impl BaselineConfig {
    pub fn step(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.decay * epoch as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.learning_rate > 0.0 && self.decay >= 0.0 && self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig(
                "baseline hyperparameters must be non-negative with a positive step".into(),
            ));
        }
        Ok(())
    }
}

/// Per-column z-scoring fitted on training rows. Constant columns keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardizer<T = f64> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(x: ArrayView2<T>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let n = T::from_usize_lossy(x.nrows());
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.iter().copied().sum::<T>() / n;
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
            let sd = var.sqrt();
            mean.push(m);
            scale.push(if sd > T::epsilon() { sd } else { T::one() });
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn transform_row(&self, row: ArrayView1<T>) -> Vec<T> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.scale[k];
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    #[serde(rename = "lr")]
    Logistic,
    #[serde(rename = "svm")]
    LinearSvm,
    #[serde(rename = "mlp")]
    Mlp,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Logistic, BaselineKind::LinearSvm, BaselineKind::Mlp];

    pub fn short_name(self) -> &'static str {
        match self {
            BaselineKind::Logistic => "lr",
            BaselineKind::LinearSvm => "svm",
            BaselineKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "logistic" => Ok(BaselineKind::Logistic),
            "svm" | "linear_svm" => Ok(BaselineKind::LinearSvm),
            "mlp" => Ok(BaselineKind::Mlp),
            other => Err(format!("unknown baseline `{other}` (expected lr, svm or mlp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "model", rename_all = "snake_case")]
pub enum BaselineModel<T = f64> {
    Linear(LinearModel<T>),
    Mlp(MlpModel<T>),
}

impl<T: Scalar> BaselineModel<T> {
    /// Positive iff the linear score is >= 0 or the network probability is >= 0.5.
    pub fn predict_positive(&self, z: &[T]) -> bool {
        match self {
            BaselineModel::Linear(m) => m.predict_positive(z),
            BaselineModel::Mlp(m) => m.predict_positive(z),
        }
    }
}

/// A trained baseline together with the standardization fitted on its
/// training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FittedBaseline<T = f64> {
    pub kind: BaselineKind,
    pub standardizer: Standardizer<T>,
    pub model: BaselineModel<T>,
    pub positive_class: ClassLabel,
}

impl<T: Scalar> FittedBaseline<T> {
    pub fn predict(&self, row: ArrayView1<T>) -> ClassLabel {
        let z = self.standardizer.transform_row(row);
        if self.model.predict_positive(&z) {
            self.positive_class
        } else {
            self.positive_class.other()
        }
    }

    pub fn predict_all(&self, x: ArrayView2<T>) -> Vec<ClassLabel> {
        x.rows().into_iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// 1 for `positive`, 0 otherwise; fails unless both classes occur.
pub(crate) fn binary_targets<T: Scalar>(y: &[ClassLabel], positive: ClassLabel) -> Result<Vec<T>> {
    let t: Vec<T> = y
        .iter()
        .map(|&l| if l == positive { T::one() } else { T::zero() })
        .collect();
    let n_pos = t.iter().filter(|v| **v > T::zero()).count();
    if n_pos == 0 || n_pos == t.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(t)
}

/// Standardizes `x` on itself and trains the requested model.
pub fn train_baseline<T: Scalar>(
    kind: BaselineKind,
    x: ArrayView2<T>,
    y: &[ClassLabel],
    positive_class: ClassLabel,
    cfg: &BaselineConfig,
) -> Result<FittedBaseline<T>> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let standardizer = Standardizer::fit(x)?;
    let z = standardizer.transform(x)?;
    let model = match kind {
        BaselineKind::Logistic => BaselineModel::Linear(train_logistic(z.view(), y, positive_class, cfg)?),
        BaselineKind::LinearSvm => BaselineModel::Linear(train_linear_svm(z.view(), y, positive_class, cfg)?),
        BaselineKind::Mlp => BaselineModel::Mlp(train_mlp(z.view(), y, positive_class, cfg)?),
    };
    Ok(FittedBaseline {
        kind,
        standardizer,
        model,
        positive_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standardizer_uses_training_statistics_only() {
        let train = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(train.view()).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        let test = array![[10.0, 7.0]];
        assert_eq!(s.transform(test.view()).unwrap(), array![[8.0, 2.0]]);
        assert_eq!(s.transform_row(test.row(0)), vec![8.0, 2.0]);
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("svm".parse::<BaselineKind>().unwrap(), BaselineKind::LinearSvm);
        assert_eq!("LR".parse::<BaselineKind>().unwrap(), BaselineKind::Logistic);
        assert!("knn".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn fitted_json_round_trip() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 1.0], [3.0, 0.0]];
        let y = [
            ClassLabel::Class1,
            ClassLabel::Class1,
            ClassLabel::Class2,
            ClassLabel::Class2,
        ];
        for kind in BaselineKind::ALL {
            let m = train_baseline(kind, x.view(), &y, ClassLabel::Class2, &BaselineConfig::default()).unwrap();
            let back = FittedBaseline::<f64>::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.predict_all(x.view()), m.predict_all(x.view()));
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[0.0], [1.0]];
        let y = [ClassLabel::Class2; 2];
        for kind in BaselineKind::ALL {
            assert!(matches!(
                train_baseline(kind, x.view(), &y, ClassLabel::Class2, &BaselineConfig::default()),
                Err(Error::DegenerateLabels)
            ));
        }
    }
}
