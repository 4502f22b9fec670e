//! Aggregated accuracies over repeated splits.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Method, SplitOutcome};
use crate::dataset::ClassLabel;
use crate::error::Result;
use crate::scalar::Scalar;

/// Normal-approximation multiplier for the 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub label: String,
    pub mean: f64,
    /// Sample standard deviation; zero for a single split.
    pub sd: f64,
    /// `mean ± 1.96·sd`.
    pub interval: [f64; 2],
    pub mean_rules: Option<f64>,
    pub sd_rules: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub index: usize,
    pub seed: u64,
    pub n_train_slides: usize,
    pub n_test_slides: usize,
    pub n_train_rows: usize,
    pub accuracies: BTreeMap<Method, f64>,
    pub rules: Vec<String>,
    pub rule_log_posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub reference_class: ClassLabel,
    pub seed: u64,
    pub summaries: Vec<MethodSummary>,
    pub splits: Vec<SplitRecord>,
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Report {
    pub fn from_outcomes<T: Scalar>(
        outcomes: &[(u64, SplitOutcome<T>)],
        reference_class: ClassLabel,
        seed: u64,
    ) -> Self {
        let splits: Vec<SplitRecord> = outcomes
            .iter()
            .enumerate()
            .map(|(index, (s, o))| SplitRecord {
                index,
                seed: *s,
                n_train_slides: o.split.train.len(),
                n_test_slides: o.split.test.len(),
                n_train_rows: o.n_train_rows,
                accuracies: o.accuracies.clone(),
                rules: o.ruleset.render(),
                rule_log_posterior: o.rule_log_posterior,
            })
            .collect();
        let rule_counts: Vec<f64> = splits.iter().map(|r| r.rules.len() as f64).collect();
        let summaries = Method::ALL
            .iter()
            .map(|&method| {
                let acc: Vec<f64> = splits
                    .iter()
                    .filter_map(|r| r.accuracies.get(&method).copied())
                    .collect();
                let (mean, sd) = mean_sd(&acc);
                let (mean_rules, sd_rules) = if method == Method::RuleSet {
                    let (m, s) = mean_sd(&rule_counts);
                    (Some(m), Some(s))
                } else {
                    (None, None)
                };
                MethodSummary {
                    method,
                    label: method.label(reference_class),
                    mean,
                    sd,
                    interval: [mean - Z_95 * sd, mean + Z_95 * sd],
                    mean_rules,
                    sd_rules,
                }
            })
            .collect();
        Report {
            reference_class,
            seed,
            summaries,
            splits,
        }
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plain-text table: method, accuracy, 95% interval, rule count.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>15} {:>18} {:>13}",
            "Method", "Accuracy", "95% interval", "# of rules"
        );
        for s in &self.summaries {
            let rules = match (s.mean_rules, s.sd_rules) {
                (Some(m), Some(sd)) => format!("{m:.2} ± {sd:.2}"),
                _ => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<20} {:>15} {:>18} {:>13}",
                s.label,
                format!("{:.3} ± {:.3}", s.mean, s.sd),
                format!("[{:.3}, {:.3}]", s.interval[0], s.interval[1]),
                rules
            );
        }
        let _ = write!(out, "{} splits, seed {}", self.splits.len(), self.seed);
        out
    }
}
