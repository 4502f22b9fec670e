//! `fc(8) + ReLU + fc(1)` with a sigmoid output, trained by per-sample SGD.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{binary_targets, BaselineConfig};
use crate::dataset::ClassLabel;
use crate::error::Result;
use crate::scalar::Scalar;

pub const HIDDEN_UNITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Weights uniform in ±sqrt(6 / fan_in), biases zero.
    HeUniform,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpModel<T = f64> {
    /// `HIDDEN_UNITS × d`.
    pub w1: Array2<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
}

/// Same shapes as [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient<T = f64> {
    pub w1: Array2<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
}

impl<T: Scalar> MlpGradient<T> {
    fn zeros(d: usize) -> Self {
        MlpGradient {
            w1: Array2::zeros((HIDDEN_UNITS, d)),
            b1: vec![T::zero(); HIDDEN_UNITS],
            w2: vec![T::zero(); HIDDEN_UNITS],
            b2: T::zero(),
        }
    }
}

impl<T: Scalar> MlpModel<T> {
    pub fn new(d: usize, init: Init, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |fan_in: usize| -> T {
            match init {
                Init::Zero => T::zero(),
                Init::HeUniform => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    T::lit(rng.random_range(-limit..limit))
                }
            }
        };
        let w1 = Array2::from_shape_simple_fn((HIDDEN_UNITS, d), || uniform(d.max(1)));
        let w2 = (0..HIDDEN_UNITS).map(|_| uniform(HIDDEN_UNITS)).collect();
        MlpModel {
            w1,
            b1: vec![T::zero(); HIDDEN_UNITS],
            w2,
            b2: T::zero(),
        }
    }

    fn hidden(&self, z: &[T]) -> [T; HIDDEN_UNITS] {
        let mut h = [T::zero(); HIDDEN_UNITS];
        for (j, hj) in h.iter_mut().enumerate() {
            let pre = self.w1.row(j).iter().zip(z).map(|(&w, &v)| w * v).sum::<T>() + self.b1[j];
            *hj = pre.max(T::zero());
        }
        h
    }

    pub fn logit(&self, z: &[T]) -> T {
        let h = self.hidden(z);
        h.iter().zip(&self.w2).map(|(&a, &w)| a * w).sum::<T>() + self.b2
    }

    pub fn probability(&self, z: &[T]) -> T {
        T::one() / (T::one() + (-self.logit(z)).exp())
    }

    pub fn predict_positive(&self, z: &[T]) -> bool {
        self.probability(z) >= T::lit(0.5)
    }

    /// Adds `scale ×` the log-loss gradient of one sample into `g`; returns its loss.
    fn accumulate(&self, z: &[T], t: T, scale: T, g: &mut MlpGradient<T>) -> T {
        let h = self.hidden(z);
        let f = h.iter().zip(&self.w2).map(|(&a, &w)| a * w).sum::<T>() + self.b2;
        let p = T::one() / (T::one() + (-f).exp());
        let r = (p - t) * scale;
        g.b2 += r;
        for j in 0..HIDDEN_UNITS {
            g.w2[j] += r * h[j];
            if h[j] > T::zero() {
                let delta = r * self.w2[j];
                g.b1[j] += delta;
                for (gk, &zk) in g.w1.row_mut(j).iter_mut().zip(z) {
                    *gk += delta * zk;
                }
            }
        }
        f.max(T::zero()) + (-f.abs()).exp().ln_1p() - t * f
    }

    fn add_l2(&self, l2: T, scale: T, g: &mut MlpGradient<T>) -> T {
        g.w1.zip_mut_with(&self.w1, |gv, &w| *gv += l2 * scale * w);
        for (gv, &w) in g.w2.iter_mut().zip(&self.w2) {
            *gv += l2 * scale * w;
        }
        let sq = self.w1.iter().map(|&w| w * w).sum::<T>() + self.w2.iter().map(|&w| w * w).sum::<T>();
        T::lit(0.5) * l2 * sq
    }

    fn apply(&mut self, g: &MlpGradient<T>, eta: T) {
        self.w1.zip_mut_with(&g.w1, |w, &d| *w -= eta * d);
        for (w, &d) in self.b1.iter_mut().zip(&g.b1) {
            *w -= eta * d;
        }
        for (w, &d) in self.w2.iter_mut().zip(&g.w2) {
            *w -= eta * d;
        }
        self.b2 -= eta * g.b2;
    }
}

/// Mean log loss plus `l2/2` times the squared weight norm (biases free),
/// with its gradient. Targets are 0/1.
pub fn mlp_objective<T: Scalar>(model: &MlpModel<T>, x: ArrayView2<T>, t: &[T], l2: f64) -> (T, MlpGradient<T>) {
    let n = T::from_usize_lossy(x.nrows());
    let mut g = MlpGradient::zeros(x.ncols());
    let mut loss = T::zero();
    for (i, row) in x.rows().into_iter().enumerate() {
        let z = row.to_vec();
        loss += model.accumulate(&z, t[i], T::one() / n, &mut g);
    }
    let reg = model.add_l2(T::lit(l2), T::one(), &mut g);
    (loss / n + reg, g)
}

pub fn train_mlp<T: Scalar>(
    z: ArrayView2<T>,
    y: &[ClassLabel],
    positive: ClassLabel,
    cfg: &BaselineConfig,
) -> Result<MlpModel<T>> {
    let t = binary_targets::<T>(y, positive)?;
    let mut model = MlpModel::new(z.ncols(), cfg.init, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let rows: Vec<Vec<T>> = z.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let l2 = T::lit(cfg.l2);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let eta = T::lit(cfg.step(epoch));
        for &i in &order {
            let mut g = MlpGradient::zeros(z.ncols());
            model.accumulate(&rows[i], t[i], T::one(), &mut g);
            model.add_l2(l2, T::one(), &mut g);
            model.apply(&g, eta);
        }
    }
    Ok(model)
}
