//! One train/test pass of the full pipeline: embedding, distortion, charts,
//! optional ensemble augmentation, rule set and baselines.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{derive_seed, Method, Split, SplitConfig};
use crate::baselines::{train_baseline, BaselineConfig, BaselineKind};
use crate::brs::{learn, learn_chains, LearnConfig, RuleSet};
use crate::chart::{
    density_chart, feature_vector, DensityChart, DensityFeatureVector, PolarPoint, DEFAULT_RATIO_EPSILON,
};
use crate::dataset::{stack_features, synthesize_ensemble_picks, ClassLabel, Dataset, Slide, SynthesisConfig};
use crate::embed::{fit_embedding_features, transform_points, EmbeddingConfig, EmbeddingModel, Point2};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub split: SplitConfig,
    pub embedding: EmbeddingConfig,
    pub synthesis: SynthesisConfig,
    pub rules: LearnConfig,
    pub baselines: BaselineConfig,
    pub ratio_epsilon: f64,
    /// Independent annealing chains per rule-set fit.
    pub rule_chains: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            split: SplitConfig::default(),
            embedding: EmbeddingConfig::default(),
            synthesis: SynthesisConfig::default(),
            rules: LearnConfig::default(),
            baselines: BaselineConfig::default(),
            ratio_epsilon: DEFAULT_RATIO_EPSILON,
            rule_chains: 1,
        }
    }
}

/// Slide ids whose cells or rows fed each fitted statistic of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineAudit {
    pub test_slides: Vec<String>,
    pub embedding_slides: Vec<String>,
    pub distortion_slides: Vec<String>,
    /// Training rows handed to the rule learner (real and synthetic ids).
    pub candidate_rows: Vec<String>,
    pub standardizer_rows: Vec<String>,
    /// Real slides whose cells were copied into synthetic slides.
    pub ensemble_sources: Vec<String>,
    pub synthetic_slides: Vec<String>,
}

impl PipelineAudit {
    /// Test slide ids that reached any fitted statistic; empty when clean.
    pub fn leaked(&self) -> Vec<String> {
        let fitted: BTreeSet<&String> = self
            .embedding_slides
            .iter()
            .chain(&self.distortion_slides)
            .chain(&self.candidate_rows)
            .chain(&self.standardizer_rows)
            .chain(&self.ensemble_sources)
            .collect();
        self.test_slides
            .iter()
            .filter(|t| fitted.contains(t))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SplitOutcome<T = f64> {
    pub split: Split,
    pub accuracies: BTreeMap<Method, f64>,
    pub ruleset: RuleSet<T>,
    pub rule_log_posterior: f64,
    pub n_train_rows: usize,
    pub audit: PipelineAudit,
}

/// Layout coordinates of every cell of the requested slides. Cells of the
/// model's reference slides keep their fitted coordinates; all others are
/// placed with [`transform_points`].
pub fn embed_slides<T: Scalar>(
    model: &EmbeddingModel<T>,
    dataset: &Dataset<T>,
    slides: &[usize],
) -> Result<Vec<Vec<Point2<T>>>> {
    let mut offsets: HashMap<&str, usize> = HashMap::new();
    let mut cursor = 0;
    for id in &model.reference_slide_ids {
        let slide = dataset.slide(id).ok_or_else(|| Error::UnknownSlide(id.clone()))?;
        offsets.insert(id, cursor);
        cursor += slide.cells.len();
    }
    if cursor != model.n_train() {
        offsets.clear();
    }
    let pending: Vec<&Slide<T>> = slides
        .iter()
        .map(|&i| &dataset.slides[i])
        .filter(|s| !offsets.contains_key(s.slide_id.as_str()))
        .collect();
    let features = stack_features(
        pending
            .iter()
            .flat_map(|s| s.cells.iter().map(|c| c.features.as_slice())),
        dataset.feature_dim,
    );
    let mut placed = transform_points(model, features.view())?.into_iter();
    Ok(slides
        .iter()
        .map(|&i| {
            let s = &dataset.slides[i];
            match offsets.get(s.slide_id.as_str()) {
                Some(&o) => model.train_coords[o..o + s.cells.len()].to_vec(),
                None => placed.by_ref().take(s.cells.len()).collect(),
            }
        })
        .collect())
}

/// Distorted polar coordinates of every cell of the requested slides.
pub fn project_slides<T: Scalar>(
    model: &EmbeddingModel<T>,
    dataset: &Dataset<T>,
    slides: &[usize],
) -> Result<Vec<Vec<PolarPoint<T>>>> {
    Ok(embed_slides(model, dataset, slides)?
        .into_iter()
        .map(|pts| pts.iter().map(|p| model.distortion.distort_point(p)).collect())
        .collect())
}

/// Chart and 78-vector for each requested slide.
pub fn chart_slides<T: Scalar>(
    model: &EmbeddingModel<T>,
    dataset: &Dataset<T>,
    slides: &[usize],
    ratio_epsilon: f64,
) -> Result<Vec<(DensityChart<T>, DensityFeatureVector<T>)>> {
    project_slides(model, dataset, slides)?
        .iter()
        .zip(slides)
        .map(|(polar, &i)| {
            let chart = density_chart(polar, dataset.slides[i].slide_id.clone())?;
            let fv = feature_vector(&chart, T::lit(ratio_epsilon));
            Ok((chart, fv))
        })
        .collect()
}

fn lookup<T: Scalar>(dataset: &Dataset<T>, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| dataset.slide_index(id).ok_or_else(|| Error::UnknownSlide(id.clone())))
        .collect()
}

fn to_matrix<T: Scalar>(rows: &[Vec<T>]) -> Array2<T> {
    let d = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

/// Runs the pipeline on one split. Only training slides reach any fitted
/// statistic; `seed` drives every random component of the run.
pub fn run_pipeline_once<T: Scalar>(
    dataset: &Dataset<T>,
    split: &Split,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<SplitOutcome<T>> {
    let train_idx = lookup(dataset, &split.train)?;
    let test_idx = lookup(dataset, &split.test)?;
    let mut audit = PipelineAudit {
        test_slides: split.test.clone(),
        ..PipelineAudit::default()
    };

    // embedding and distortion from training slides of the reference class
    let reference_class = cfg.split.embedding_reference_class;
    let mut reference: Vec<usize> = train_idx
        .iter()
        .copied()
        .filter(|&i| dataset.slides[i].label == Some(reference_class) && !dataset.slides[i].synthetic)
        .collect();
    let available = reference.len();
    let wanted = cfg.embedding.reference_slides.unwrap_or(available);
    if wanted == 0 || wanted > available {
        return Err(Error::NotEnoughReferenceSlides {
            class: reference_class,
            requested: wanted.max(1),
            available,
        });
    }
    reference.truncate(wanted);
    let features = stack_features(
        reference
            .iter()
            .flat_map(|&i| dataset.slides[i].cells.iter().map(|c| c.features.as_slice())),
        dataset.feature_dim,
    );
    let mut ecfg = cfg.embedding.clone();
    ecfg.reference_class = reference_class;
    ecfg.seed = derive_seed(seed, 1);
    let mut model = fit_embedding_features(features.view(), &ecfg)?;
    model.reference_slide_ids = reference.iter().map(|&i| dataset.slides[i].slide_id.clone()).collect();
    audit.embedding_slides = model.reference_slide_ids.clone();
    audit.distortion_slides = model.reference_slide_ids.clone();

    let train_polar = project_slides(&model, dataset, &train_idx)?;
    let test_polar = project_slides(&model, dataset, &test_idx)?;
    let eps = T::lit(cfg.ratio_epsilon);
    let row_of = |polar: &[PolarPoint<T>], id: &str| -> Result<Vec<T>> {
        Ok(feature_vector(&density_chart(polar, id)?, eps).values)
    };

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, &i) in train_idx.iter().enumerate() {
        let s = &dataset.slides[i];
        let label = s
            .label
            .ok_or_else(|| Error::InvalidConfig(format!("training slide `{}` is unlabeled", s.slide_id)))?;
        rows.push(row_of(&train_polar[k], &s.slide_id)?);
        labels.push(label);
        audit.candidate_rows.push(s.slide_id.clone());
    }

    if cfg.split.use_ensemble {
        let mut sources_seen = BTreeSet::new();
        for class in ClassLabel::ALL {
            let members: Vec<usize> = (0..train_idx.len())
                .filter(|&k| {
                    let s = &dataset.slides[train_idx[k]];
                    s.label == Some(class) && !s.synthetic
                })
                .collect();
            let slides: Vec<&Slide<T>> = members.iter().map(|&k| &dataset.slides[train_idx[k]]).collect();
            let scfg = SynthesisConfig {
                seed: derive_seed(seed, 2 + class.as_u8() as u64),
                ..cfg.synthesis.clone()
            };
            let picks = synthesize_ensemble_picks(&slides, &scfg)?;
            for (n, pick) in picks.iter().enumerate() {
                let polar: Vec<PolarPoint<T>> = pick
                    .cells
                    .iter()
                    .map(|&(s, c)| {
                        sources_seen.insert(slides[s].slide_id.clone());
                        train_polar[members[s]][c]
                    })
                    .collect();
                let id = format!("ens-c{}-{n:04}", class.as_u8());
                rows.push(row_of(&polar, &id)?);
                labels.push(class);
                audit.candidate_rows.push(id.clone());
                audit.synthetic_slides.push(id);
            }
        }
        audit.ensemble_sources = sources_seen.into_iter().collect();
    }
    audit.standardizer_rows = audit.candidate_rows.clone();

    let x = to_matrix(&rows);
    let mut rcfg = cfg.rules.clone();
    rcfg.schedule.seed = derive_seed(seed, 10);
    let outcome = if cfg.rule_chains > 1 {
        let seeds: Vec<u64> = (0..cfg.rule_chains as u64)
            .map(|c| derive_seed(seed, 100 + c))
            .collect();
        learn_chains(x.view(), &labels, &rcfg, &seeds)?
    } else {
        learn(x.view(), &labels, &rcfg)?
    };

    let test_rows: Vec<Vec<T>> = test_idx
        .iter()
        .zip(&test_polar)
        .map(|(&i, polar)| row_of(polar, &dataset.slides[i].slide_id))
        .collect::<Result<_>>()?;
    let truth: Vec<ClassLabel> = test_idx
        .iter()
        .map(|&i| {
            dataset.slides[i]
                .label
                .ok_or_else(|| Error::InvalidConfig("test slide is unlabeled".into()))
        })
        .collect::<Result<_>>()?;
    let accuracy = |pred: &mut dyn FnMut(&[T]) -> ClassLabel| -> f64 {
        if truth.is_empty() {
            return 0.0;
        }
        let hits = test_rows.iter().zip(&truth).filter(|(r, &t)| pred(r) == t).count();
        hits as f64 / truth.len() as f64
    };

    let mut accuracies = BTreeMap::new();
    accuracies.insert(Method::RuleSet, accuracy(&mut |r| outcome.ruleset.predict(r).label));
    let test_x = to_matrix(&test_rows);
    for kind in BaselineKind::ALL {
        let bcfg = BaselineConfig {
            seed: derive_seed(seed, 20 + kind as u64),
            ..cfg.baselines.clone()
        };
        let model = train_baseline(kind, x.view(), &labels, rcfg.positive_class, &bcfg)?;
        let preds = model.predict_all(test_x.view());
        let mut it = preds.into_iter();
        accuracies.insert(
            Method::from(kind),
            accuracy(&mut |_| it.next().expect("one prediction per row")),
        );
    }

    Ok(SplitOutcome {
        split: split.clone(),
        accuracies,
        ruleset: outcome.ruleset,
        rule_log_posterior: outcome.log_posterior,
        n_train_rows: rows.len(),
        audit,
    })
}
