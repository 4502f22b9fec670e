//! L2-regularized linear classifiers trained by full-batch (sub)gradient descent.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{binary_targets, BaselineConfig};
use crate::dataset::ClassLabel;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Logistic,
    Hinge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearModel<T = f64> {
    pub weights: Vec<T>,
    pub bias: T,
    pub kind: LinearKind,
}

impl<T: Scalar> LinearModel<T> {
    pub fn score(&self, z: &[T]) -> T {
        self.weights.iter().zip(z).map(|(&w, &v)| w * v).sum::<T>() + self.bias
    }

    pub fn predict_positive(&self, z: &[T]) -> bool {
        self.score(z) >= T::zero()
    }
}

fn dot_row<T: Scalar>(w: &[T], x: ArrayView2<T>, i: usize) -> T {
    w.iter().enumerate().map(|(k, &wk)| wk * x[[i, k]]).sum()
}

/// ln(1 + e^f), stable for large |f|.
fn softplus<T: Scalar>(f: T) -> T {
    f.max(T::zero()) + (-f.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(f: T) -> T {
    T::one() / (T::one() + (-f).exp())
}

/// Mean log loss plus `l2/2 |w|^2` (bias unregularized), with its gradient
/// in `w` and `b`. Targets are 0/1.
pub fn logistic_objective<T: Scalar>(w: &[T], b: T, x: ArrayView2<T>, t: &[T], l2: f64) -> (T, Vec<T>, T) {
    let n = T::from_usize_lossy(x.nrows());
    let l2 = T::lit(l2);
    let mut loss = T::zero();
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = T::zero();
    for i in 0..x.nrows() {
        let f = dot_row(w, x, i) + b;
        loss += softplus(f) - t[i] * f;
        let r = sigmoid(f) - t[i];
        for (k, g) in gw.iter_mut().enumerate() {
            *g += r * x[[i, k]];
        }
        gb += r;
    }
    let sq: T = w.iter().map(|&v| v * v).sum();
    let loss = loss / n + l2 * T::lit(0.5) * sq;
    for (g, &wk) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wk;
    }
    (loss, gw, gb / n)
}

/// Mean hinge loss plus `l2/2 |w|^2`, with a subgradient (zero on the
/// hinge kink). Targets are 0/1 and mapped to -1/+1.
pub fn hinge_objective<T: Scalar>(w: &[T], b: T, x: ArrayView2<T>, t: &[T], l2: f64) -> (T, Vec<T>, T) {
    let n = T::from_usize_lossy(x.nrows());
    let l2 = T::lit(l2);
    let mut loss = T::zero();
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = T::zero();
    for i in 0..x.nrows() {
        let s = if t[i] > T::zero() { T::one() } else { -T::one() };
        let margin = s * (dot_row(w, x, i) + b);
        if margin < T::one() {
            loss += T::one() - margin;
            for (k, g) in gw.iter_mut().enumerate() {
                *g -= s * x[[i, k]];
            }
            gb -= s;
        }
    }
    let sq: T = w.iter().map(|&v| v * v).sum();
    let loss = loss / n + l2 * T::lit(0.5) * sq;
    for (g, &wk) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wk;
    }
    (loss, gw, gb / n)
}

fn grad_norm<T: Scalar>(gw: &[T], gb: T) -> f64 {
    (gw.iter().map(|g| g.as_f64().powi(2)).sum::<f64>() + gb.as_f64().powi(2)).sqrt()
}

pub fn train_logistic<T: Scalar>(
    z: ArrayView2<T>,
    y: &[ClassLabel],
    positive: ClassLabel,
    cfg: &BaselineConfig,
) -> Result<LinearModel<T>> {
    let t = binary_targets::<T>(y, positive)?;
    let mut w = vec![T::zero(); z.ncols()];
    let mut b = T::zero();
    for epoch in 0..cfg.epochs {
        let (_, gw, gb) = logistic_objective(&w, b, z, &t, cfg.l2);
        if grad_norm(&gw, gb) < cfg.tolerance {
            break;
        }
        let eta = T::lit(cfg.step(epoch));
        for (wk, g) in w.iter_mut().zip(&gw) {
            *wk -= eta * *g;
        }
        b -= eta * gb;
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        kind: LinearKind::Logistic,
    })
}

/// Subgradient descent; the iterate with the lowest objective is kept.
pub fn train_linear_svm<T: Scalar>(
    z: ArrayView2<T>,
    y: &[ClassLabel],
    positive: ClassLabel,
    cfg: &BaselineConfig,
) -> Result<LinearModel<T>> {
    let t = binary_targets::<T>(y, positive)?;
    let mut w = vec![T::zero(); z.ncols()];
    let mut b = T::zero();
    let mut best = (T::infinity(), w.clone(), b);
    for epoch in 0..=cfg.epochs {
        let (loss, gw, gb) = hinge_objective(&w, b, z, &t, cfg.l2);
        if loss < best.0 {
            best = (loss, w.clone(), b);
        }
        if epoch == cfg.epochs || grad_norm(&gw, gb) < cfg.tolerance {
            break;
        }
        let eta = T::lit(cfg.step(epoch));
        for (wk, g) in w.iter_mut().zip(&gw) {
            *wk -= eta * *g;
        }
        b -= eta * gb;
    }
    Ok(LinearModel {
        weights: best.1,
        bias: best.2,
        kind: LinearKind::Hinge,
    })
}
