//! 2D neighbor-graph embedding of cell features.
//!
//! The layout is fitted on the cells of reference slides of one class; every
//! other cell is placed into that fixed layout by [`transform_points`].

mod knn;
mod layout;
mod spectral;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{fit_distortion, DistortionParams, DEFAULT_ANGLE_BINS};
use crate::dataset::{stack_features, ClassLabel, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use knn::{knn_graph, knn_search, smooth_knn_scale, FuzzyGraph, KnnGraph, LocalScale, Neighbors};
pub use layout::{
    layout_gradient, layout_loss, optimize_layout, LayoutCurve, Point2, NEGATIVE_SAMPLE_RATE, REPULSION_EPS,
};
pub use spectral::{random_layout, spectral_layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub n_neighbors: usize,
    pub n_epochs: usize,
    pub min_dist: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub reference_class: ClassLabel,
    /// Use only the first `n` reference-class slides (dataset order);
    /// `None` takes all of them.
    pub reference_slides: Option<usize>,
    /// Extra per-point optimization epochs after the kernel-average
    /// placement of new points.
    pub refine_epochs: usize,
    pub n_angle_bins: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            n_neighbors: 15,
            n_epochs: 200,
            min_dist: 0.1,
            learning_rate: 1.0,
            seed: 0,
            reference_class: ClassLabel::Class1,
            reference_slides: None,
            refine_epochs: 0,
            n_angle_bins: DEFAULT_ANGLE_BINS,
        }
    }
}

/// A fitted embedding together with the circular distortion of its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EmbeddingModel<T = f64> {
    pub config: EmbeddingConfig,
    pub reference_slide_ids: Vec<String>,
    pub train_features: Array2<T>,
    pub train_coords: Vec<Point2<T>>,
    pub graph: FuzzyGraph<T>,
    pub scales: Vec<LocalScale<T>>,
    pub curve: LayoutCurve<T>,
    pub distortion: DistortionParams<T>,
    pub fitted: bool,
}

impl<T: Scalar> EmbeddingModel<T> {
    pub fn feature_dim(&self) -> usize {
        self.train_features.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.train_features.nrows()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Fits the embedding on the cells of the configured reference slides.
pub fn fit_embedding<T: Scalar>(dataset: &Dataset<T>, cfg: &EmbeddingConfig) -> Result<EmbeddingModel<T>> {
    let available: Vec<_> = dataset.slides_of(cfg.reference_class).collect();
    let take = cfg.reference_slides.unwrap_or(available.len());
    if available.is_empty() || take == 0 || take > available.len() {
        return Err(Error::NotEnoughReferenceSlides {
            class: cfg.reference_class,
            requested: take.max(1),
            available: available.len(),
        });
    }
    let reference = &available[..take];
    let features = stack_features(
        reference
            .iter()
            .flat_map(|s| s.cells.iter().map(|c| c.features.as_slice())),
        dataset.feature_dim,
    );
    let mut model = fit_embedding_features(features.view(), cfg)?;
    model.reference_slide_ids = reference.iter().map(|s| s.slide_id.clone()).collect();
    Ok(model)
}

/// Fits the embedding on an explicit `N × D` feature matrix.
pub fn fit_embedding_features<T: Scalar>(
    features: ArrayView2<'_, T>,
    cfg: &EmbeddingConfig,
) -> Result<EmbeddingModel<T>> {
    if cfg.n_neighbors == 0 || cfg.n_angle_bins == 0 || !(cfg.learning_rate > 0.0) || !(cfg.min_dist >= 0.0) {
        return Err(Error::InvalidConfig(format!("invalid embedding configuration {cfg:?}")));
    }
    let n = features.nrows();
    if n <= cfg.n_neighbors {
        return Err(Error::TooFewPoints {
            needed: cfg.n_neighbors,
            found: n,
        });
    }
    let KnnGraph { graph, scales, .. } = knn_graph(features, cfg.n_neighbors)?;
    let curve = LayoutCurve::fit(cfg.min_dist, 1.0);
    let mut coords = if n < 2 * cfg.n_neighbors {
        random_layout(n, cfg.seed)
    } else {
        spectral_layout(&graph, cfg.seed)
    };
    // small seeded jitter so coincident spectral coordinates can separate
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    for p in coords.iter_mut() {
        for v in p.iter_mut() {
            *v += T::lit(rng.random_range(-1e-4..1e-4));
        }
    }
    optimize_layout(&mut coords, &graph, &curve, cfg.n_epochs, cfg.learning_rate, cfg.seed);
    if coords.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::InvalidSpec("layout optimization diverged".into()));
    }
    let distortion = fit_distortion(&coords, cfg.n_angle_bins)?;
    Ok(EmbeddingModel {
        config: cfg.clone(),
        reference_slide_ids: Vec::new(),
        train_features: features.to_owned(),
        train_coords: coords,
        graph,
        scales,
        curve,
        distortion,
        fitted: true,
    })
}

/// Places unseen cells into the fitted layout: each lands at the
/// membership-weighted mean of its `n_neighbors` nearest training cells,
/// optionally followed by `refine_epochs` of per-point optimization.
pub fn transform_points<T: Scalar>(model: &EmbeddingModel<T>, features: ArrayView2<'_, T>) -> Result<Vec<Point2<T>>> {
    if !model.fitted {
        return Err(Error::NotFitted);
    }
    if features.nrows() == 0 {
        return Ok(Vec::new());
    }
    if features.ncols() != model.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.feature_dim(),
            found: features.ncols(),
        });
    }
    let features = features.as_standard_layout();
    let neighbors = knn_search(
        features.view(),
        model.train_features.view(),
        model.config.n_neighbors,
        false,
    );
    let cfg = &model.config;
    let placed = neighbors
        .par_iter()
        .enumerate()
        .map(|(q, row)| {
            let weights: Vec<T> = row.iter().map(|&(j, d)| model.scales[j].membership(d)).collect();
            let mut total: T = weights.iter().copied().sum();
            let uniform = !(total > T::zero());
            if uniform {
                total = T::from_usize_lossy(row.len());
            }
            let mut p = [T::zero(); 2];
            for (&(j, _), &w) in row.iter().zip(&weights) {
                let w = if uniform { T::one() } else { w };
                p[0] += w * model.train_coords[j][0];
                p[1] += w * model.train_coords[j][1];
            }
            p[0] /= total;
            p[1] /= total;
            if cfg.refine_epochs > 0 {
                refine_point(&mut p, row, &weights, model, cfg.seed.wrapping_add(q as u64));
            }
            p
        })
        .collect();
    Ok(placed)
}

fn refine_point<T: Scalar>(p: &mut Point2<T>, row: &[(usize, T)], weights: &[T], model: &EmbeddingModel<T>, seed: u64) {
    let cfg = &model.config;
    let n_train = model.n_train();
    let w_max = weights.iter().copied().fold(T::zero(), T::max);
    if !(w_max > T::zero()) {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let curve = &model.curve;
    let two = T::lit(2.0);
    let clip = |v: T| v.max(T::lit(-4.0)).min(T::lit(4.0));
    for epoch in 0..cfg.refine_epochs {
        let alpha = T::lit(cfg.learning_rate * (1.0 - epoch as f64 / cfg.refine_epochs as f64));
        for (&(j, _), &w) in row.iter().zip(weights) {
            let target = model.train_coords[j];
            let c = two * curve.attract_ds(sq(p, &target));
            let mut grad = [c * (p[0] - target[0]), c * (p[1] - target[1])];
            for _ in 0..NEGATIVE_SAMPLE_RATE {
                let other = model.train_coords[rng.random_range(0..n_train)];
                let c = two * curve.repel_ds(sq(p, &other));
                grad[0] += c * (p[0] - other[0]);
                grad[1] += c * (p[1] - other[1]);
            }
            let step = alpha * w / w_max;
            p[0] -= step * clip(grad[0]);
            p[1] -= step * clip(grad[1]);
        }
    }
}

fn sq<T: Scalar>(a: &Point2<T>, b: &Point2<T>) -> T {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
}
