//! Threshold conditions mined from per-variable empirical quantiles.

use ndarray::ArrayView2;

use super::{Condition, Operator};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Linear-interpolation quantile of an ascending slice (`h = (n-1)p`).
pub fn quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty slice");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = T::lit(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// For every column, one `>` and one `<=` condition per distinct quantile
/// threshold. Ordered by variable, then threshold, then operator.
pub fn candidate_conditions<T: Scalar>(train: ArrayView2<T>, levels: &[f64]) -> Result<Vec<Condition<T>>> {
    if train.nrows() < 2 {
        return Err(Error::EmptyTrainingSet);
    }
    if levels.is_empty() || levels.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidConfig(
            "quantile levels must be non-empty and lie in [0, 1]".into(),
        ));
    }
    let mut out = Vec::new();
    for (v, column) in train.columns().into_iter().enumerate() {
        let mut sorted: Vec<T> = column.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        let mut thresholds: Vec<T> = levels.iter().map(|&p| quantile(&sorted, p)).collect();
        thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        thresholds.dedup();
        for t in thresholds {
            out.push(Condition::new(v, Operator::Gt, t));
            out.push(Condition::new(v, Operator::Le, t));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Axis};

    #[test]
    fn constant_column_gives_two_conditions() {
        let x = Array2::from_elem((5, 1), 0.3);
        let c = candidate_conditions(x.view(), &DEFAULT_LEVELS).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0], Condition::new(0, Operator::Gt, 0.3));
        assert_eq!(c[1], Condition::new(0, Operator::Le, 0.3));
    }

    #[test]
    fn median_of_one_to_ten() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| (i + 1) as f64);
        let c = candidate_conditions(x.view(), &[0.5]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].threshold, 5.5);
        assert_eq!(c[0].op, Operator::Gt);
        assert_eq!(c[1].op, Operator::Le);
    }

    #[test]
    fn counting_bound_on_distinct_columns() {
        let x = Array2::from_shape_fn((40, 78), |(i, j)| ((i * 31 + j * 17) % 97) as f64 + j as f64 * 0.001);
        let c = candidate_conditions(x.view(), &DEFAULT_LEVELS).unwrap();
        assert!(c.len() <= 78 * 9 * 2);
        assert!(c.len() > 78 * 2);
        for cond in &c {
            let col = x.index_axis(Axis(1), cond.variable);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(cond.threshold >= lo && cond.threshold <= hi);
        }
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        assert_eq!(quantile(&[4.0f32], 0.9), 4.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 1.0), 3.0);
    }

    #[test]
    fn too_few_rows() {
        let x = Array2::<f64>::zeros((1, 3));
        assert!(matches!(
            candidate_conditions(x.view(), &DEFAULT_LEVELS),
            Err(Error::EmptyTrainingSet)
        ));
    }
}
