//! Repeated patient-level evaluation of the rule set against the baselines.

mod pipeline;
mod report;
mod split;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::dataset::{ClassLabel, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use pipeline::{
    chart_slides, embed_slides, project_slides, run_pipeline_once, PipelineAudit, PipelineConfig, SplitOutcome,
};
pub use report::{mean_sd, MethodSummary, Report, SplitRecord, Z_95};
pub use split::{patient_level_split, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Augment each training fold with synthetic slides.
    pub use_ensemble: bool,
    pub embedding_reference_class: ClassLabel,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            repeats: 100,
            seed: 0,
            use_ensemble: true,
            embedding_reference_class: ClassLabel::Class1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RuleSet,
    LogisticRegression,
    LinearSvm,
    Mlp,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::RuleSet,
        Method::LogisticRegression,
        Method::LinearSvm,
        Method::Mlp,
    ];

    /// Row label in rendered tables.
    pub fn label(self, reference_class: ClassLabel) -> String {
        match self {
            Method::RuleSet => format!("Rule Set (class {})", reference_class.as_u8()),
            Method::LogisticRegression => "LR".into(),
            Method::LinearSvm => "SVM".into(),
            Method::Mlp => "fc(8)+ReLU+fc(1)".into(),
        }
    }
}

impl From<BaselineKind> for Method {
    fn from(kind: BaselineKind) -> Self {
        match kind {
            BaselineKind::Logistic => Method::LogisticRegression,
            BaselineKind::LinearSvm => Method::LinearSvm,
            BaselineKind::Mlp => Method::Mlp,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::RuleSet => "rule_set",
            Method::LogisticRegression => "logistic_regression",
            Method::LinearSvm => "linear_svm",
            Method::Mlp => "mlp",
        };
        f.write_str(s)
    }
}

/// SplitMix64 of `master` mixed with `stream`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        ^ stream
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs `cfg.split.repeats` independent splits in parallel and aggregates.
pub fn run_experiment<T: Scalar>(dataset: &Dataset<T>, cfg: &PipelineConfig) -> Result<Report> {
    Ok(run_experiment_detailed(dataset, cfg)?.0)
}

/// As [`run_experiment`], also returning each split's full outcome.
pub fn run_experiment_detailed<T: Scalar>(
    dataset: &Dataset<T>,
    cfg: &PipelineConfig,
) -> Result<(Report, Vec<SplitOutcome<T>>)> {
    if cfg.split.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    let outcomes = (0..cfg.split.repeats)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(cfg.split.seed, k as u64);
            let split = patient_level_split(dataset, cfg.split.train_fraction, derive_seed(seed, 0))?;
            Ok((seed, run_pipeline_once(dataset, &split, cfg, seed)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = Report::from_outcomes(&outcomes, cfg.split.embedding_reference_class, cfg.split.seed);
    Ok((report, outcomes.into_iter().map(|(_, o)| o).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_planted_dataset, PlantedSpec};

    fn small_config(repeats: usize) -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.split.repeats = repeats;
        cfg.embedding.n_neighbors = 10;
        cfg.embedding.n_epochs = 60;
        cfg.synthesis.count_per_class = 20;
        cfg.rules.schedule.iterations = 800;
        cfg.baselines.epochs = 100;
        cfg
    }

    fn planted(w1: [f64; 2], w2: [f64; 2]) -> Dataset {
        let spec = PlantedSpec::two_blobs(4, 6.0, w1, w2, 8, 80);
        generate_planted_dataset(&spec, 5).unwrap()
    }

    #[test]
    fn pipeline_separates_shifted_compositions_without_leakage() {
        let ds = planted([0.85, 0.15], [0.15, 0.85]);
        let cfg = small_config(1);
        let split = patient_level_split(&ds, 0.75, 1).unwrap();
        let out = run_pipeline_once(&ds, &split, &cfg, 7).unwrap();
        assert!(out.accuracies[&Method::RuleSet] >= 0.9, "{:?}", out.accuracies);
        assert!(out.audit.leaked().is_empty());
        assert_eq!(out.audit.synthetic_slides.len(), 40);
        assert_eq!(out.n_train_rows, split.train.len() + 40);
        for id in &out.audit.embedding_slides {
            assert_eq!(ds.slide(id).unwrap().label, Some(ClassLabel::Class1));
        }
    }

    #[test]
    fn report_aggregates_splits() {
        let ds = planted([0.85, 0.15], [0.15, 0.85]);
        let cfg = small_config(3);
        let report = run_experiment(&ds, &cfg).unwrap();
        assert_eq!(report.splits.len(), 3);
        for s in &report.summaries {
            let acc: Vec<f64> = report.splits.iter().map(|r| r.accuracies[&s.method]).collect();
            let mean = acc.iter().sum::<f64>() / acc.len() as f64;
            assert!((s.mean - mean).abs() < 1e-12);
        }
        let back = Report::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
        let table = report.render_table();
        assert!(table.contains("Rule Set (class 1)"));
        assert!(table.contains("fc(8)+ReLU+fc(1)"));
        assert_eq!(run_experiment(&ds, &cfg).unwrap(), report);
    }

    #[test]
    fn single_split_interval_is_degenerate() {
        let ds = planted([0.85, 0.15], [0.15, 0.85]);
        let report = run_experiment(&ds, &small_config(1)).unwrap();
        for s in &report.summaries {
            assert_eq!(s.sd, 0.0);
            assert_eq!(s.interval, [s.mean, s.mean]);
        }
    }

    #[test]
    fn mean_sd_matches_hand_values() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..50).map(|k| derive_seed(3, k)).collect();
        let unique: std::collections::HashSet<_> = a.iter().collect();
        assert_eq!(unique.len(), 50);
        assert_ne!(derive_seed(3, 0), derive_seed(4, 0));
    }
}
