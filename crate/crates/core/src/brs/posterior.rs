//! Beta-Bernoulli coverage likelihood plus a Poisson complexity prior.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use super::RuleSet;
use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BrsPrior {
    /// Beta prior on the positive rate among covered rows.
    pub alpha_plus: f64,
    pub beta_plus: f64,
    /// Beta prior on the positive rate among uncovered rows.
    pub alpha_minus: f64,
    pub beta_minus: f64,
    /// Poisson mean of the rule count.
    pub expected_rules: f64,
    /// Unnormalized weights for rule lengths `1..=len()`.
    pub length_weights: Vec<f64>,
}

impl Default for BrsPrior {
    fn default() -> Self {
        BrsPrior {
            alpha_plus: 100.0,
            beta_plus: 1.0,
            alpha_minus: 1.0,
            beta_minus: 100.0,
            expected_rules: 3.0,
            length_weights: vec![1.0, 1.0],
        }
    }
}

impl BrsPrior {
    pub fn validate(&self, max_len: usize) -> Result<()> {
        let params = [
            self.alpha_plus,
            self.beta_plus,
            self.alpha_minus,
            self.beta_minus,
            self.expected_rules,
        ];
        if params.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidConfig("prior parameters must be positive".into()));
        }
        if self.length_weights.len() < max_len
            || self.length_weights[..max_len]
                .iter()
                .any(|w| !(w.is_finite() && *w > 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "length prior needs {max_len} positive weights"
            )));
        }
        Ok(())
    }

    pub fn log_likelihood(&self, c: &Confusion) -> f64 {
        ln_beta(c.tp as f64 + self.alpha_plus, c.fp as f64 + self.beta_plus) - ln_beta(self.alpha_plus, self.beta_plus)
            + ln_beta(c.fn_ as f64 + self.alpha_minus, c.tn as f64 + self.beta_minus)
            - ln_beta(self.alpha_minus, self.beta_minus)
    }

    /// Log prior of a rule set given the lengths of its rules and the size of
    /// the condition pool.
    pub fn log_prior(&self, lengths: impl IntoIterator<Item = usize>, n_candidates: usize) -> f64 {
        let total: f64 = self.length_weights.iter().sum();
        let mut m = 0usize;
        let mut lp = 0.0;
        for l in lengths {
            m += 1;
            lp += (self.length_weights[l - 1] / total).ln() - ln_binomial(n_candidates as u64, l as u64);
        }
        let m = m as f64;
        lp + m * self.expected_rules.ln() - self.expected_rules - ln_gamma(m + 1.0)
    }
}

/// Coverage counts with respect to the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_coverage(covered: impl IntoIterator<Item = bool>, positive: impl IntoIterator<Item = bool>) -> Self {
        let mut c = Confusion::default();
        for (cov, pos) in covered.into_iter().zip(positive) {
            match (cov, pos) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.tp + self.fp + self.fn_ + self.tn;
        if n == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / n as f64
    }
}

/// Unnormalized log posterior of `ruleset` on labeled rows.
pub fn log_posterior<T: Scalar>(
    ruleset: &RuleSet<T>,
    x: ArrayView2<T>,
    y: &[ClassLabel],
    prior: &BrsPrior,
    n_candidates: usize,
) -> Result<f64> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let covered = x.rows().into_iter().map(|r| {
        let row = r.to_vec();
        ruleset.covers(&row)
    });
    let conf = Confusion::from_coverage(covered, y.iter().map(|&l| l == ruleset.positive_class));
    Ok(prior.log_likelihood(&conf) + prior.log_prior(ruleset.rules.iter().map(|r| r.len()), n_candidates))
}
