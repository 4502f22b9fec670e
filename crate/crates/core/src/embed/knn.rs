//! Exact k-nearest-neighbor search and the fuzzy neighbor graph built on it.

use std::cmp::Ordering;
use std::collections::HashMap;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sq_dist, Scalar};

/// Neighbors of one query point as `(index, distance)`, nearest first.
pub type Neighbors<T> = Vec<(usize, T)>;

/// Brute-force Euclidean kNN of every row of `queries` among the rows of
/// `data`. With `exclude_self`, `queries` must be `data` and a row never
/// lists itself. Ties in distance resolve toward the lower index.
pub fn knn_search<T: Scalar>(
    queries: ArrayView2<'_, T>,
    data: ArrayView2<'_, T>,
    k: usize,
    exclude_self: bool,
) -> Vec<Neighbors<T>> {
    let n = data.nrows();
    let k = k.min(n.saturating_sub(usize::from(exclude_self)));
    let rows: Vec<usize> = (0..queries.nrows()).collect();
    rows.par_iter()
        .map(|&q| {
            let query = queries.row(q);
            let query = query.as_slice().expect("standard layout");
            let mut cand: Vec<(usize, T)> = (0..n)
                .filter(|&j| !(exclude_self && j == q))
                .map(|j| {
                    let row = data.row(j);
                    (j, sq_dist(query, row.as_slice().expect("standard layout")))
                })
                .collect();
            if k == 0 {
                return Vec::new();
            }
            let by_dist =
                |a: &(usize, T), b: &(usize, T)| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0));
            if cand.len() > k {
                cand.select_nth_unstable_by(k - 1, by_dist);
                cand.truncate(k);
            }
            cand.sort_by(by_dist);
            cand.into_iter().map(|(j, d2)| (j, d2.sqrt())).collect()
        })
        .collect()
}

/// Per-point scale parameters of the membership kernel
/// `exp(-max(0, d - rho) / sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalScale<T> {
    pub rho: T,
    pub sigma: T,
}

impl<T: Scalar> LocalScale<T> {
    #[inline]
    pub fn membership(&self, distance: T) -> T {
        let excess = distance - self.rho;
        if excess <= T::zero() {
            T::one()
        } else {
            (-excess / self.sigma).exp()
        }
    }
}

const BISECTION_STEPS: usize = 64;

/// Finds `rho` (nearest distance) and the `sigma` that makes the kernel
/// row-sum equal `log2(k)` by bisection.
pub fn smooth_knn_scale<T: Scalar>(distances: &[T]) -> LocalScale<T> {
    let rho = distances.first().copied().unwrap_or_else(T::zero);
    let target = T::from_usize_lossy(distances.len().max(1)).log2();
    let row_sum = |sigma: T| -> T { distances.iter().map(|&d| LocalScale { rho, sigma }.membership(d)).sum() };
    let tol = T::epsilon() * T::lit(16.0) * target.max(T::one());
    let mut lo = T::zero();
    let mut hi = T::infinity();
    let mut mid = T::one();
    for _ in 0..BISECTION_STEPS {
        let diff = row_sum(mid) - target;
        if diff.abs() <= tol {
            break;
        }
        if diff > T::zero() {
            hi = mid;
            mid = (lo + hi) / T::lit(2.0);
        } else {
            lo = mid;
            mid = if hi.is_infinite() {
                mid * T::lit(2.0)
            } else {
                (lo + hi) / T::lit(2.0)
            };
        }
    }
    LocalScale { rho, sigma: mid }
}

/// Undirected weighted graph with weights in `[0, 1]` and no self-edges.
/// Serialized as the node count plus `(i, j, w)` triplets with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphDoc<T>", try_from = "GraphDoc<T>")]
#[serde(bound = "T: Scalar")]
pub struct FuzzyGraph<T> {
    n: usize,
    adjacency: Vec<Vec<(usize, T)>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct GraphDoc<T> {
    n_vertices: usize,
    triplets: Vec<(usize, usize, T)>,
}

impl<T: Scalar> From<FuzzyGraph<T>> for GraphDoc<T> {
    fn from(g: FuzzyGraph<T>) -> Self {
        GraphDoc {
            n_vertices: g.n,
            triplets: g.edges().collect(),
        }
    }
}

impl<T: Scalar> TryFrom<GraphDoc<T>> for FuzzyGraph<T> {
    type Error = String;

    fn try_from(doc: GraphDoc<T>) -> std::result::Result<Self, String> {
        FuzzyGraph::from_edges(doc.n_vertices, doc.triplets)
    }
}

impl<T: Scalar> FuzzyGraph<T> {
    /// Builds a graph from undirected edges. Each unordered pair may appear once.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> std::result::Result<Self, String> {
        let mut adjacency = vec![Vec::new(); n];
        for (i, j, w) in edges {
            if i >= n || j >= n || i == j {
                return Err(format!("invalid edge ({i}, {j}) for {n} vertices"));
            }
            if !(w >= T::zero() && w <= T::one()) {
                return Err(format!("edge ({i}, {j}) weight {w} outside [0, 1]"));
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err("duplicate edge".into());
            }
        }
        Ok(FuzzyGraph { n, adjacency })
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, T)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|p| self.adjacency[i][p].1)
            .unwrap_or_else(|_| T::zero())
    }

    /// Undirected edges `(i, j, w)` with `i < j`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |&&(j, _)| j > i).map(move |&(j, w)| (i, j, w)))
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> T {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }
}

/// kNN graph plus the local scales used to weight it.
#[derive(Debug, Clone)]
pub struct KnnGraph<T> {
    pub graph: FuzzyGraph<T>,
    pub scales: Vec<LocalScale<T>>,
    pub neighbors: Vec<Neighbors<T>>,
}

/// Builds the symmetrized fuzzy kNN graph: directed memberships
/// `exp(-max(0, d - rho_i) / sigma_i)` combined as `a + b - a*b`.
pub fn knn_graph<T: Scalar>(features: ArrayView2<'_, T>, k: usize) -> Result<KnnGraph<T>> {
    let n = features.nrows();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if n <= k {
        return Err(Error::TooFewPoints { needed: k, found: n });
    }
    let features = features.as_standard_layout();
    let neighbors = knn_search(features.view(), features.view(), k, true);
    let scales: Vec<LocalScale<T>> = neighbors
        .iter()
        .map(|row| {
            let d: Vec<T> = row.iter().map(|&(_, d)| d).collect();
            smooth_knn_scale(&d)
        })
        .collect();

    // (lo, hi) -> (w lo->hi, w hi->lo)
    let mut directed: HashMap<(usize, usize), (T, T)> = HashMap::new();
    for (i, row) in neighbors.iter().enumerate() {
        for &(j, d) in row {
            let w = scales[i].membership(d);
            let slot = directed.entry((i.min(j), i.max(j))).or_insert((T::zero(), T::zero()));
            if i < j {
                slot.0 = w;
            } else {
                slot.1 = w;
            }
        }
    }
    let mut edges: Vec<(usize, usize, T)> = directed
        .into_iter()
        .map(|((i, j), (a, b))| (i, j, a + b - a * b))
        .collect();
    edges.sort_by_key(|&(i, j, _)| (i, j));
    let graph = FuzzyGraph::from_edges(n, edges).map_err(Error::InvalidSpec)?;
    Ok(KnnGraph {
        graph,
        scales,
        neighbors,
    })
}
