//! Interpretable slide classification from per-cell appearance features.
//!
//! Cells are embedded into a 2D neighbor-graph layout fitted on reference
//! slides, the layout is warped into the unit disc, each slide becomes a
//! 12-sector density chart, and a Bayesian rule set learned by simulated
//! annealing classifies slides from the 78 chart variables.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the common concrete types.

pub mod baselines;
pub mod brs;
pub mod chart;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod eval;
pub mod scalar;

pub use baselines::{BaselineKind, FittedBaseline};
pub use brs::{Condition, Operator, Rule, RuleSet};
pub use chart::{DensityChart, DensityFeatureVector, DistortionParams, PolarPoint};
pub use dataset::{CellRecord, ClassLabel, Dataset, FeatureMap, Slide};
pub use embed::EmbeddingModel;
pub use error::{Error, Result};
pub use eval::{Method, PipelineConfig, Report};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Slide64 = Slide<f64>;
pub type Slide32 = Slide<f32>;
pub type EmbeddingModel64 = EmbeddingModel<f64>;
pub type EmbeddingModel32 = EmbeddingModel<f32>;
pub type DensityChart64 = DensityChart<f64>;
pub type DensityChart32 = DensityChart<f32>;
pub type RuleSet64 = RuleSet<f64>;
pub type RuleSet32 = RuleSet<f32>;
pub type FittedBaseline64 = FittedBaseline<f64>;
pub type FittedBaseline32 = FittedBaseline<f32>;
