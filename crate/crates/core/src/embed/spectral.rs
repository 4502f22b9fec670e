//! Spectral initialization from the leading non-trivial eigenvectors of the
//! normalized graph adjacency, found by orthogonal (subspace) iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::knn::FuzzyGraph;
use super::layout::Point2;
use crate::scalar::Scalar;

const ITERATIONS: usize = 300;
/// Largest absolute coordinate after rescaling.
pub(crate) const INIT_EXTENT: f64 = 10.0;

/// 2D layout from the graph's second and third eigenvectors of
/// `D^-1/2 W D^-1/2` (equivalently the low end of the normalized Laplacian),
/// rescaled so the largest coordinate has magnitude [`INIT_EXTENT`].
pub fn spectral_layout<T: Scalar>(graph: &FuzzyGraph<T>, seed: u64) -> Vec<Point2<T>> {
    let n = graph.n_vertices();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d = graph.degree(i).as_f64();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    // trivial eigenvector ~ sqrt(degree)
    let mut trivial: Vec<f64> = inv_sqrt_deg
        .iter()
        .map(|&v| if v > 0.0 { 1.0 / v } else { 0.0 })
        .collect();
    normalize(&mut trivial);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut basis, &trivial);

    // (I + M) / 2 has the same eigenvectors as M with spectrum in [0, 1].
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mx: f64 = graph
                    .neighbors(i)
                    .iter()
                    .map(|&(j, w)| w.as_f64() * inv_sqrt_deg[j] * x[j])
                    .sum::<f64>()
                    * inv_sqrt_deg[i];
                0.5 * (x[i] + mx)
            })
            .collect()
    };
    for _ in 0..ITERATIONS {
        basis = basis.iter().map(|v| apply(v)).collect();
        orthonormalize(&mut basis, &trivial);
    }

    let max_abs = basis.iter().flat_map(|v| v.iter()).fold(0.0f64, |m, &x| m.max(x.abs()));
    let scale = if max_abs > 0.0 { INIT_EXTENT / max_abs } else { 1.0 };
    (0..n)
        .map(|i| [T::lit(basis[0][i] * scale), T::lit(basis[1][i] * scale)])
        .collect()
}

/// Uniform layout in `[-INIT_EXTENT, INIT_EXTENT]^2`.
pub fn random_layout<T: Scalar>(n: usize, seed: u64) -> Vec<Point2<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            [
                T::lit(rng.random_range(-INIT_EXTENT..INIT_EXTENT)),
                T::lit(rng.random_range(-INIT_EXTENT..INIT_EXTENT)),
            ]
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Gram-Schmidt against `fixed` and then against earlier basis vectors.
fn orthonormalize(basis: &mut [Vec<f64>], fixed: &[f64]) {
    for k in 0..basis.len() {
        let (done, rest) = basis.split_at_mut(k);
        let v = &mut rest[0];
        for _ in 0..2 {
            let c = dot(v, fixed);
            v.iter_mut().zip(fixed).for_each(|(x, f)| *x -= c * f);
            for u in done.iter() {
                let c = dot(v, u);
                v.iter_mut().zip(u).for_each(|(x, f)| *x -= c * f);
            }
        }
        if normalize(v) == 0.0 {
            // degenerate direction; any unit vector orthogonal enough will do
            v.iter_mut()
                .enumerate()
                .for_each(|(i, x)| *x = if i == k { 1.0 } else { 0.0 });
        }
    }
}
