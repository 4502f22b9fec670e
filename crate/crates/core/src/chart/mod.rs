//! Circular distortion of the embedding and the 12-sector density charts
//! computed on it.
//!
//! Angles are measured counterclockwise from the positive x axis in
//! `[0, 2π)`. Sector `i` (0-based) covers `[i·π/6, (i+1)·π/6)`; its display
//! name is `D{i+1}`.

mod io;

use serde::{Deserialize, Serialize};

use crate::embed::Point2;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use io::{
    read_features_csv, read_labels_csv, write_charts_csv, write_features_csv, write_labels_csv, FeatureTable,
};

pub const DEFAULT_ANGLE_BINS: usize = 360;
pub const N_SECTORS: usize = 12;
/// 12 densities plus the 66 ordered-pair ratios.
pub const N_FEATURES: usize = N_SECTORS + N_SECTORS * (N_SECTORS - 1) / 2;
pub const DEFAULT_RATIO_EPSILON: f64 = 1e-6;
/// Bin radius used when the reference set has no point away from its centroid.
pub const FALLBACK_RADIUS: f64 = 1.0;

/// A point in polar form about the distortion origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint<T> {
    pub r: T,
    pub theta: T,
}

impl<T: Scalar> PolarPoint<T> {
    pub fn to_cartesian(self) -> Point2<T> {
        [self.r * self.theta.cos(), self.r * self.theta.sin()]
    }
}

/// Radius and angle in `[0, 2π)` of `p` about `origin`; the origin itself
/// maps to `(0, 0)`.
pub fn to_polar<T: Scalar>(origin: &Point2<T>, p: &Point2<T>) -> PolarPoint<T> {
    let dx = p[0] - origin[0];
    let dy = p[1] - origin[1];
    let r = dx.hypot(dy);
    if r == T::zero() {
        return PolarPoint { r, theta: T::zero() };
    }
    PolarPoint {
        r,
        theta: normalize_angle(dy.atan2(dx)),
    }
}

fn normalize_angle<T: Scalar>(theta: T) -> T {
    let tau = T::TAU();
    let mut t = theta;
    if t < T::zero() {
        t += tau;
    }
    if t >= tau || t < T::zero() {
        T::zero()
    } else {
        t
    }
}

/// Index of the equal-width angular bin containing `theta`, out of `n`.
#[inline]
pub fn angle_bin<T: Scalar>(theta: T, n: usize) -> usize {
    let width = T::TAU() / T::from_usize_lossy(n);
    let idx = (theta / width).floor().to_usize().unwrap_or(0);
    idx.min(n - 1)
}

/// 0-based density sector of an angle.
#[inline]
pub fn sector_of<T: Scalar>(theta: T) -> usize {
    angle_bin(theta, N_SECTORS)
}

/// Centroid and per-angle maximum radius of the reference layout. Fixed
/// once fitted; new slides are distorted with the same parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DistortionParams<T> {
    pub origin: Point2<T>,
    pub n_angle_bins: usize,
    pub bin_max_radius: Vec<T>,
}

/// Fits the distortion on reference points.
///
/// Each angular bin takes the largest radius among its points. Bins with no
/// point away from the origin borrow the value of the nearest populated bin
/// (circular distance, ties to the lower bin index); with no populated bin at
/// all every bin gets [`FALLBACK_RADIUS`].
pub fn fit_distortion<T: Scalar>(reference_points: &[Point2<T>], n_angle_bins: usize) -> Result<DistortionParams<T>> {
    if reference_points.is_empty() {
        return Err(Error::NoPoints);
    }
    if n_angle_bins == 0 {
        return Err(Error::InvalidConfig("n_angle_bins must be positive".into()));
    }
    let n = T::from_usize_lossy(reference_points.len());
    let (sx, sy) = reference_points
        .iter()
        .fold((T::zero(), T::zero()), |(x, y), p| (x + p[0], y + p[1]));
    let origin = [sx / n, sy / n];

    let mut max_r: Vec<Option<T>> = vec![None; n_angle_bins];
    for p in reference_points {
        let polar = to_polar(&origin, p);
        if polar.r > T::zero() {
            let slot = &mut max_r[angle_bin(polar.theta, n_angle_bins)];
            *slot = Some(slot.map_or(polar.r, |m: T| m.max(polar.r)));
        }
    }

    let bin_max_radius = if max_r.iter().all(Option::is_none) {
        vec![T::lit(FALLBACK_RADIUS); n_angle_bins]
    } else {
        (0..n_angle_bins)
            .map(|b| {
                max_r[b].unwrap_or_else(|| {
                    (1..=n_angle_bins / 2 + 1)
                        .find_map(|step| {
                            let down = (b + n_angle_bins - step % n_angle_bins) % n_angle_bins;
                            let up = (b + step) % n_angle_bins;
                            let (first, second) = if down <= up { (down, up) } else { (up, down) };
                            max_r[first].or(max_r[second])
                        })
                        .expect("at least one populated bin")
                })
            })
            .collect()
    };

    Ok(DistortionParams {
        origin,
        n_angle_bins,
        bin_max_radius,
    })
}

impl<T: Scalar> DistortionParams<T> {
    /// Maps one point into the unit disc. Radii beyond the bin maximum are
    /// clipped to 1 with the angle kept, which places the point in the
    /// nearest region.
    pub fn distort_point(&self, p: &Point2<T>) -> PolarPoint<T> {
        let polar = to_polar(&self.origin, p);
        if polar.r == T::zero() {
            return polar;
        }
        let max = self.bin_max_radius[angle_bin(polar.theta, self.n_angle_bins)];
        let r = if max > T::zero() {
            (polar.r / max).min(T::one())
        } else {
            T::one()
        };
        PolarPoint { r, theta: polar.theta }
    }
}

pub fn distort<T: Scalar>(params: &DistortionParams<T>, points: &[Point2<T>]) -> Vec<PolarPoint<T>> {
    points.iter().map(|p| params.distort_point(p)).collect()
}

/// Share of a slide's cells in each of the 12 sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DensityChart<T = f64> {
    pub slide_id: String,
    pub densities: [T; N_SECTORS],
    pub cell_count: usize,
}

pub fn density_chart<T: Scalar>(
    polar_points: &[PolarPoint<T>],
    slide_id: impl Into<String>,
) -> Result<DensityChart<T>> {
    if polar_points.is_empty() {
        return Err(Error::NoPoints);
    }
    let mut counts = [0usize; N_SECTORS];
    for p in polar_points {
        counts[sector_of(p.theta)] += 1;
    }
    let total = T::from_usize_lossy(polar_points.len());
    Ok(DensityChart {
        slide_id: slide_id.into(),
        densities: counts.map(|c| T::from_usize_lossy(c) / total),
        cell_count: polar_points.len(),
    })
}

/// Position of the ratio `D_i / D_j` (0-based sectors, `i < j`) in the
/// 78-variable vector.
pub fn ratio_index(i: usize, j: usize) -> usize {
    assert!(i < j && j < N_SECTORS, "ratio needs i < j < {N_SECTORS}");
    // pairs before row i: sum_{r<i} (11 - r)
    N_SECTORS + i * (2 * N_SECTORS - i - 1) / 2 + (j - i - 1)
}

/// Inverse of [`ratio_index`]; `None` for density positions or out of range.
pub fn ratio_pair(index: usize) -> Option<(usize, usize)> {
    if !(N_SECTORS..N_FEATURES).contains(&index) {
        return None;
    }
    let mut k = index - N_SECTORS;
    for i in 0..N_SECTORS {
        let row = N_SECTORS - 1 - i;
        if k < row {
            return Some((i, i + 1 + k));
        }
        k -= row;
    }
    None
}

/// Display name: `D3` for densities, `D6/D11` for ratios (1-based).
pub fn variable_name(index: usize) -> String {
    match ratio_pair(index) {
        Some((i, j)) => format!("D{}/D{}", i + 1, j + 1),
        None => format!("D{}", index + 1),
    }
}

/// Parses a [`variable_name`] back into its index.
pub fn parse_variable(name: &str) -> Option<usize> {
    let sector = |s: &str| -> Option<usize> {
        let n: usize = s.trim().strip_prefix('D')?.parse().ok()?;
        (1..=N_SECTORS).contains(&n).then_some(n - 1)
    };
    match name.split_once('/') {
        None => sector(name),
        Some((a, b)) => {
            let (i, j) = (sector(a)?, sector(b)?);
            (i < j).then(|| ratio_index(i, j))
        }
    }
}

/// The 78 classifier inputs of one slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DensityFeatureVector<T = f64> {
    pub values: Vec<T>,
}

impl<T: Scalar> DensityFeatureVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }
}

/// Densities followed by `D_i / max(D_j, epsilon)` for every `i < j`.
pub fn feature_vector<T: Scalar>(chart: &DensityChart<T>, epsilon: T) -> DensityFeatureVector<T> {
    let d = &chart.densities;
    let mut values = Vec::with_capacity(N_FEATURES);
    values.extend_from_slice(d);
    for i in 0..N_SECTORS {
        for j in (i + 1)..N_SECTORS {
            values.push(d[i] / d[j].max(epsilon));
        }
    }
    DensityFeatureVector { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_6, PI, TAU};

    #[test]
    fn colinear_reference_points() {
        let params = fit_distortion(&[[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]], 360).unwrap();
        assert_eq!(params.origin, [2.0, 0.0]);
        assert_eq!(params.bin_max_radius[0], 2.0);
        assert_eq!(params.bin_max_radius[180], 2.0);
        let polar = distort(&params, &[[4.0, 0.0], [0.0, 0.0], [2.0, 0.0]]);
        assert_eq!(polar[0], PolarPoint { r: 1.0, theta: 0.0 });
        assert_eq!(polar[1].r, 1.0);
        assert!((polar[1].theta - PI).abs() < 1e-12);
        assert_eq!(polar[2], PolarPoint { r: 0.0, theta: 0.0 });
    }

    #[test]
    fn single_point_uses_fallback() {
        let params = fit_distortion(&[[3.0f32, -1.0]], 360).unwrap();
        assert_eq!(params.origin, [3.0, -1.0]);
        assert!(params.bin_max_radius.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn no_points() {
        assert!(matches!(fit_distortion::<f64>(&[], 360), Err(Error::NoPoints)));
        assert!(matches!(density_chart::<f64>(&[], "s"), Err(Error::NoPoints)));
    }

    #[test]
    fn empty_bins_take_nearest_populated_value() {
        // centroid (-1, 0); quarter bins 0, 1 and 3 are populated, bin 2 is not.
        let pts = [[2.0, 0.5], [-5.0, 0.5], [0.0, -1.0]];
        let params = fit_distortion(&pts, 4).unwrap();
        let o = params.origin;
        assert_eq!(o, [-1.0, 0.0]);
        let r = |p: [f64; 2]| (p[0] - o[0]).hypot(p[1] - o[1]);
        assert_eq!(params.bin_max_radius[0], r(pts[0]));
        assert_eq!(params.bin_max_radius[1], r(pts[1]));
        assert_eq!(params.bin_max_radius[3], r(pts[2]));
        // equidistant from bins 1 and 3: lower index wins
        assert_eq!(params.bin_max_radius[2], r(pts[1]));
    }

    #[test]
    fn tie_break_across_wraparound() {
        // centroid (0, 0); bin 3 is empty and one step from both bin 2 and bin 0.
        let params = fit_distortion(&[[2.0, 0.0], [-1.0, 0.001], [-1.0, -0.001]], 4).unwrap();
        assert_eq!(params.bin_max_radius[3], params.bin_max_radius[0]);
        assert_eq!(params.bin_max_radius[0], 2.0);
    }

    #[test]
    fn clipping_preserves_angle() {
        let params = DistortionParams {
            origin: [0.0, 0.0],
            n_angle_bins: 360,
            bin_max_radius: vec![2.0; 360],
        };
        let p = params.distort_point(&[0.0, 4.0]);
        assert_eq!(p.r, 1.0);
        assert!((p.theta - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn one_point_per_sector_is_uniform() {
        let pts: Vec<_> = (0..12)
            .map(|i| PolarPoint {
                r: 0.5,
                theta: (i as f64 + 0.5) * FRAC_PI_6,
            })
            .collect();
        let chart = density_chart(&pts, "u").unwrap();
        assert!(chart.densities.iter().all(|&d| (d - 1.0 / 12.0).abs() < 1e-15));
        let fv = feature_vector(&chart, 1e-6);
        assert_eq!(fv.values.len(), 78);
        assert!(fv.values[..12].iter().all(|&d| d == 1.0 / 12.0));
        assert!(fv.values[12..].iter().all(|&r| r == 1.0));
    }

    #[test]
    fn all_at_zero_angle() {
        let pts = vec![PolarPoint { r: 0.3, theta: 0.0 }; 7];
        let chart = density_chart(&pts, "z").unwrap();
        assert_eq!(chart.densities[0], 1.0);
        assert!(chart.densities[1..].iter().all(|&d| d == 0.0));
        assert_eq!(chart.cell_count, 7);
    }

    #[test]
    fn sector_boundaries_are_half_open() {
        assert_eq!(sector_of(FRAC_PI_6), 1);
        assert_eq!(sector_of(0.0), 0);
        assert_eq!(sector_of(TAU - 1e-12), 11);
        assert_eq!(sector_of(FRAC_PI_6 as f32), 1);
    }

    #[test]
    fn ratio_entries() {
        let mut densities = [0.05; 12];
        densities[5] = 0.3;
        densities[10] = 0.1;
        densities[3] = 0.0;
        let chart: DensityChart<f64> = DensityChart {
            slide_id: "r".into(),
            densities,
            cell_count: 10,
        };
        let fv = feature_vector(&chart, 1e-6);
        assert!((fv.values[ratio_index(5, 10)] - 3.0).abs() < 1e-12);
        assert!(fv.values.iter().all(|v| v.is_finite()));
        assert!((fv.values[ratio_index(0, 3)] - 0.05 / 1e-6).abs() < 1e-3);
    }

    #[test]
    fn variable_names() {
        assert_eq!(variable_name(0), "D1");
        assert_eq!(variable_name(11), "D12");
        assert_eq!(variable_name(12), "D1/D2");
        assert_eq!(variable_name(77), "D11/D12");
        assert_eq!(parse_variable("D6/D11"), Some(ratio_index(5, 10)));
        assert_eq!(parse_variable("D11/D6"), None);
        assert_eq!(parse_variable("D13"), None);
        for k in 0..N_FEATURES {
            assert_eq!(parse_variable(&variable_name(k)), Some(k));
        }
    }

    #[test]
    fn monte_carlo_disk() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let c = [3.0, -7.0];
        let pts: Vec<[f64; 2]> = (0..1000)
            .map(|_| {
                let r = 5.0 * rng.random::<f64>().sqrt();
                let t = rng.random_range(0.0..TAU);
                [c[0] + r * t.cos(), c[1] + r * t.sin()]
            })
            .collect();
        // 36 bins (10°) leave ~28 points per bin; with 1° bins most bins hold
        // fewer than three points and their maxima fall well below 4.
        let params = fit_distortion(&pts, 36).unwrap();
        let offset = (params.origin[0] - c[0]).hypot(params.origin[1] - c[1]);
        assert!(offset < 0.3);
        // measured from the fitted origin the disk extends to at most 5 + offset
        let ok = params
            .bin_max_radius
            .iter()
            .filter(|r| (4.0..=5.0 + offset).contains(*r))
            .count();
        assert!(ok as f64 >= 0.95 * 36.0, "{ok}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = [f64; 2]> {
            (-50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y)| [x, y])
        }

        proptest! {
            #[test]
            fn reference_points_inside_unit_disc(pts in proptest::collection::vec(point(), 1..200)) {
                let params = fit_distortion(&pts, 360).unwrap();
                for p in &pts {
                    let d = params.distort_point(p);
                    prop_assert!(d.r <= 1.0);
                    prop_assert_eq!(d.theta, to_polar(&params.origin, p).theta);
                }
            }

            #[test]
            fn densities_sum_to_one(thetas in proptest::collection::vec(0.0f64..TAU, 1..300)) {
                let pts: Vec<_> = thetas.iter().map(|&t| PolarPoint { r: 1.0, theta: t }).collect();
                let chart = density_chart(&pts, "p").unwrap();
                prop_assert!((chart.densities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn sector_ignores_radial_scale(p in point(), s in 1e-3f64..1e3) {
                let o = [0.0, 0.0];
                let a = to_polar(&o, &p);
                let b = to_polar(&o, &[p[0] * s, p[1] * s]);
                prop_assert_eq!(sector_of(a.theta), sector_of(b.theta));
            }
        }
    }
}
