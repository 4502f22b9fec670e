//! Layout objective, its gradient, and the negative-sampling SGD that
//! minimizes it.
//!
//! Low-dimensional similarity is `phi(s) = 1 / (1 + a s^b)` with `s` the
//! squared distance. The objective summed over sampled pairs is
//!
//! * attractive edge `(i, j, w)`: `w * ln(1 + a s^b)`
//! * negative pair `(i, k)`: `ln(1 + 1 / (a (s + eps)^b))`
//!
//! which is `-w ln phi` and `-ln(1 - phi)` with the repulsive term softened
//! by `eps` at coincident points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::knn::FuzzyGraph;
use crate::scalar::Scalar;

pub type Point2<T> = [T; 2];

/// Softening added to squared distances in the repulsive term.
pub const REPULSION_EPS: f64 = 1e-3;
/// Negative samples drawn per positive edge sample.
pub const NEGATIVE_SAMPLE_RATE: usize = 5;
const GRAD_CLIP: f64 = 4.0;

/// Shape parameters of the low-dimensional similarity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutCurve<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> LayoutCurve<T> {
    /// Least-squares fit of `1/(1 + a x^(2b))` to the piecewise target that
    /// is 1 below `min_dist` and `exp(-(x - min_dist) / spread)` above it.
    pub fn fit(min_dist: f64, spread: f64) -> Self {
        let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                if x < min_dist {
                    1.0
                } else {
                    (-(x - min_dist) / spread).exp()
                }
            })
            .collect();
        let sse = |a: f64, b: f64| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(&x, &y)| {
                    let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                    r * r
                })
                .sum()
        };

        // Levenberg-Marquardt on (a, b).
        let (mut a, mut b) = (1.0f64, 1.0f64);
        let mut damping = 1e-3;
        let mut cost = sse(a, b);
        for _ in 0..500 {
            let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
            for (&x, &y) in xs.iter().zip(&ys) {
                if x <= 0.0 {
                    continue;
                }
                let p = x.powf(2.0 * b);
                let den = 1.0 + a * p;
                let r = 1.0 / den - y;
                let ja = -p / (den * den);
                let jb = -2.0 * a * p * x.ln() / (den * den);
                let j = [ja, jb];
                for u in 0..2 {
                    jtr[u] += j[u] * r;
                    for v in 0..2 {
                        jtj[u][v] += j[u] * j[v];
                    }
                }
            }
            let m00 = jtj[0][0] * (1.0 + damping);
            let m11 = jtj[1][1] * (1.0 + damping);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det.abs() < 1e-300 {
                break;
            }
            let da = -(m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let db = -(m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nb) = (a + da, b + db);
            let new_cost = if na > 0.0 && nb > 0.0 {
                sse(na, nb)
            } else {
                f64::INFINITY
            };
            if new_cost < cost {
                let converged = (cost - new_cost) < 1e-15 * cost.max(1e-300);
                a = na;
                b = nb;
                cost = new_cost;
                damping = (damping * 0.3).max(1e-12);
                if converged {
                    break;
                }
            } else {
                damping *= 10.0;
                if damping > 1e12 {
                    break;
                }
            }
        }
        LayoutCurve {
            a: T::lit(a),
            b: T::lit(b),
        }
    }

    /// `d/ds` of the attractive term per unit weight.
    #[inline]
    pub(crate) fn attract_ds(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        let sb = s.powf(self.b);
        self.a * self.b * sb / s / (T::one() + self.a * sb)
    }

    /// `d/ds` of the repulsive term; always negative.
    #[inline]
    pub(crate) fn repel_ds(&self, s: T) -> T {
        let se = s + T::lit(REPULSION_EPS);
        -self.b / (se * (T::one() + self.a * se.powf(self.b)))
    }

    #[inline]
    fn attract_loss(&self, s: T) -> T {
        (T::one() + self.a * s.powf(self.b)).ln()
    }

    #[inline]
    fn repel_loss(&self, s: T) -> T {
        let se = s + T::lit(REPULSION_EPS);
        (T::one() + T::one() / (self.a * se.powf(self.b))).ln()
    }
}

#[inline]
fn sq_dist2<T: Scalar>(p: &Point2<T>, q: &Point2<T>) -> T {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    dx * dx + dy * dy
}

/// Objective value over every graph edge and the given negative pairs.
pub fn layout_loss<T: Scalar>(
    coords: &[Point2<T>],
    graph: &FuzzyGraph<T>,
    negatives: &[(usize, usize)],
    curve: &LayoutCurve<T>,
) -> T {
    let attract: T = graph
        .edges()
        .map(|(i, j, w)| w * curve.attract_loss(sq_dist2(&coords[i], &coords[j])))
        .sum();
    let repel: T = negatives
        .iter()
        .filter(|(i, k)| i != k)
        .map(|&(i, k)| curve.repel_loss(sq_dist2(&coords[i], &coords[k])))
        .sum();
    attract + repel
}

/// Analytic gradient of [`layout_loss`] with respect to every coordinate.
pub fn layout_gradient<T: Scalar>(
    coords: &[Point2<T>],
    graph: &FuzzyGraph<T>,
    negatives: &[(usize, usize)],
    curve: &LayoutCurve<T>,
) -> Vec<Point2<T>> {
    let mut grad = vec![[T::zero(); 2]; coords.len()];
    let two = T::lit(2.0);
    let mut add_pair = |i: usize, j: usize, coeff: T| {
        for d in 0..2 {
            let g = two * coeff * (coords[i][d] - coords[j][d]);
            grad[i][d] += g;
            grad[j][d] -= g;
        }
    };
    for (i, j, w) in graph.edges() {
        add_pair(i, j, w * curve.attract_ds(sq_dist2(&coords[i], &coords[j])));
    }
    for &(i, k) in negatives {
        if i != k {
            add_pair(i, k, curve.repel_ds(sq_dist2(&coords[i], &coords[k])));
        }
    }
    grad
}

#[inline]
fn clip<T: Scalar>(v: T) -> T {
    let c = T::lit(GRAD_CLIP);
    v.max(-c).min(c)
}

/// Edge-sampled SGD over the layout objective. Each directed edge is visited
/// at a rate proportional to its weight; every visit pulls both endpoints
/// together and pushes the head away from [`NEGATIVE_SAMPLE_RATE`] random
/// vertices. Sequential and fully determined by `seed`.
pub fn optimize_layout<T: Scalar>(
    coords: &mut [Point2<T>],
    graph: &FuzzyGraph<T>,
    curve: &LayoutCurve<T>,
    n_epochs: usize,
    learning_rate: f64,
    seed: u64,
) {
    let n = coords.len();
    if n < 2 || n_epochs == 0 {
        return;
    }
    let w_max = graph.edges().map(|(_, _, w)| w.as_f64()).fold(0.0f64, f64::max);
    if w_max <= 0.0 {
        return;
    }
    // directed edge list with per-edge sampling periods (in epochs)
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut period = Vec::new();
    for i in 0..n {
        for &(j, w) in graph.neighbors(i) {
            let w = w.as_f64();
            if w * n_epochs as f64 >= w_max {
                heads.push(i);
                tails.push(j);
                period.push(w_max / w);
            }
        }
    }
    let neg_period: Vec<f64> = period.iter().map(|p| p / NEGATIVE_SAMPLE_RATE as f64).collect();
    let mut next_sample = period.clone();
    let mut next_negative = neg_period.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for epoch in 0..n_epochs {
        let alpha = T::lit(learning_rate * (1.0 - epoch as f64 / n_epochs as f64));
        let now = epoch as f64;
        for e in 0..heads.len() {
            if next_sample[e] > now {
                continue;
            }
            let (i, j) = (heads[e], tails[e]);
            let s = sq_dist2(&coords[i], &coords[j]);
            let coeff = T::lit(2.0) * curve.attract_ds(s);
            for d in 0..2 {
                let step = alpha * clip(coeff * (coords[i][d] - coords[j][d]));
                coords[i][d] -= step;
                coords[j][d] += step;
            }
            next_sample[e] += period[e];

            let n_neg = ((now - next_negative[e]) / neg_period[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.random_range(0..n);
                if k == i {
                    continue;
                }
                let s = sq_dist2(&coords[i], &coords[k]);
                if s > T::zero() {
                    let coeff = T::lit(2.0) * curve.repel_ds(s);
                    for d in 0..2 {
                        coords[i][d] -= alpha * clip(coeff * (coords[i][d] - coords[k][d]));
                    }
                } else {
                    // coincident: push along a fixed direction
                    for d in 0..2 {
                        coords[i][d] += alpha * T::lit(GRAD_CLIP);
                    }
                }
            }
            next_negative[e] += n_neg as f64 * neg_period[e];
        }
    }
}
