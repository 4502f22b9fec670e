//! Immutable session built from fitted artifacts, and the queries it answers.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use cytopie::chart::{variable_name, DEFAULT_RATIO_EPSILON, N_SECTORS};
use cytopie::dataset::{load_dataset, MANIFEST_FILE};
use cytopie::eval::{chart_slides, project_slides};
use cytopie::{ClassLabel, Dataset, DensityChart, EmbeddingModel, RuleSet};
use serde::{Deserialize, Serialize};

use crate::index::GridIndex;
use crate::ServiceError;

pub const MODEL_FILE: &str = "model.json";
pub const RULES_FILE: &str = "rules.json";
pub const DEFAULT_K: usize = 8;

/// Where a cell lives and where it lands in the unit disc.
#[derive(Debug, Clone, Copy)]
struct CellLoc {
    slide: usize,
    cell: usize,
    xy: [f64; 2],
    r: f64,
    theta: f64,
}

pub struct SessionState {
    pub dataset: Dataset,
    pub model: EmbeddingModel,
    pub ruleset: RuleSet,
    pub charts: Vec<DensityChart>,
    pub features: Vec<Vec<f64>>,
    root: PathBuf,
    cells: Vec<CellLoc>,
    by_cell_id: HashMap<String, usize>,
    global: GridIndex,
    per_slide: Vec<(Vec<usize>, GridIndex)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestCellsQuery {
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub slide_id: Option<String>,
}

fn default_k() -> usize {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlideSummary {
    pub slide_id: String,
    pub patient_id: String,
    pub label: Option<ClassLabel>,
    pub n_cells: usize,
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sector {
    pub index: usize,
    pub name: String,
    pub start_deg: f64,
    pub end_deg: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartPayload {
    pub slide_id: String,
    pub cell_count: usize,
    pub densities: [f64; N_SECTORS],
    pub sectors: Vec<Sector>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellPoint {
    pub cell_id: String,
    pub x: f64,
    pub y: f64,
    pub r: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointsPayload {
    pub slide_id: String,
    pub points: Vec<CellPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub cell_id: String,
    pub slide_id: String,
    pub distance: f64,
    pub x: f64,
    pub y: f64,
    pub features: Vec<f64>,
    pub thumbnail_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearestPayload {
    /// Query point after clamping to the unit disc.
    pub x: f64,
    pub y: f64,
    pub k: usize,
    pub slide_id: Option<String>,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub text: String,
    pub variable: String,
    pub op: String,
    pub threshold: f64,
    pub value: f64,
    pub holds: bool,
    /// Signed distance to the threshold; positive when the condition holds.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleReport {
    pub index: usize,
    pub text: String,
    pub fired: bool,
    pub conditions: Vec<ConditionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub slide_id: String,
    pub true_label: Option<ClassLabel>,
    pub chart: ChartPayload,
    pub variables: Vec<String>,
    pub features: Vec<f64>,
    pub predicted_class: ClassLabel,
    pub positive_class: ClassLabel,
    /// Zero-based indices of the rules that fired.
    pub fired: Vec<usize>,
    pub rules: Vec<RuleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleSetPayload {
    pub positive_class: ClassLabel,
    pub rules: Vec<String>,
    pub text: String,
    pub document: RuleSet,
}

impl SessionState {
    /// Loads `manifest.json`, `model.json` and `rules.json` from `dir`.
    /// Thumbnail references resolve against `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref();
        let load_err = |what: &str, e: &dyn std::fmt::Display| ServiceError::ArtifactLoad(format!("{what}: {e}"));
        let dataset = load_dataset(dir.join(MANIFEST_FILE)).map_err(|e| load_err(MANIFEST_FILE, &e))?;
        let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| load_err(name, &e));
        let model = EmbeddingModel::from_json(&read(MODEL_FILE)?).map_err(|e| load_err(MODEL_FILE, &e))?;
        let ruleset = RuleSet::from_json(&read(RULES_FILE)?).map_err(|e| load_err(RULES_FILE, &e))?;
        Self::from_parts(dataset, model, ruleset, dir)
    }

    pub fn from_parts(
        dataset: Dataset,
        model: EmbeddingModel,
        ruleset: RuleSet,
        root: impl Into<PathBuf>,
    ) -> Result<Self, ServiceError> {
        if model.feature_dim() != dataset.feature_dim {
            return Err(ServiceError::ArtifactLoad(format!(
                "model expects {} features, dataset has {}",
                model.feature_dim(),
                dataset.feature_dim
            )));
        }
        let all: Vec<usize> = (0..dataset.slides.len()).collect();
        let fail = |e: cytopie::Error| ServiceError::ArtifactLoad(e.to_string());
        let polar = project_slides(&model, &dataset, &all).map_err(fail)?;
        let (charts, features): (Vec<_>, Vec<_>) = chart_slides(&model, &dataset, &all, DEFAULT_RATIO_EPSILON)
            .map_err(fail)?
            .into_iter()
            .map(|(c, f)| (c, f.values))
            .unzip();

        let mut cells = Vec::with_capacity(dataset.n_cells());
        let mut by_cell_id = HashMap::with_capacity(dataset.n_cells());
        for (s, pts) in polar.iter().enumerate() {
            for (c, p) in pts.iter().enumerate() {
                let id = &dataset.slides[s].cells[c].cell_id;
                if by_cell_id.insert(id.clone(), cells.len()).is_some() {
                    return Err(ServiceError::ArtifactLoad(format!("duplicate cell id `{id}`")));
                }
                cells.push(CellLoc {
                    slide: s,
                    cell: c,
                    xy: p.to_cartesian(),
                    r: p.r,
                    theta: p.theta,
                });
            }
        }

        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&a, &b| cell_id(&dataset, &cells[a]).cmp(cell_id(&dataset, &cells[b])));
        let mut rank = vec![0; cells.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let xy: Vec<[f64; 2]> = cells.iter().map(|c| c.xy).collect();
        let global = GridIndex::build(&xy, &rank);
        let mut per_slide = Vec::with_capacity(dataset.slides.len());
        let mut start = 0;
        for slide in &dataset.slides {
            let range = start..start + slide.cells.len();
            start = range.end;
            let idx = GridIndex::build(&xy[range.clone()], &rank[range.clone()]);
            per_slide.push((range.collect(), idx));
        }

        Ok(SessionState {
            dataset,
            model,
            ruleset,
            charts,
            features,
            root: root.into(),
            cells,
            by_cell_id,
            global,
            per_slide,
        })
    }

    fn slide_index(&self, id: &str) -> Result<usize, ServiceError> {
        self.dataset
            .slide_index(id)
            .ok_or_else(|| ServiceError::UnknownSlide(id.to_string()))
    }

    pub fn slides(&self) -> Vec<SlideSummary> {
        self.dataset
            .slides
            .iter()
            .map(|s| SlideSummary {
                slide_id: s.slide_id.clone(),
                patient_id: s.patient_id.clone(),
                label: s.label,
                n_cells: s.cells.len(),
                synthetic: s.synthetic,
            })
            .collect()
    }

    pub fn chart(&self, slide_id: &str) -> Result<ChartPayload, ServiceError> {
        let chart = &self.charts[self.slide_index(slide_id)?];
        let width = 360.0 / N_SECTORS as f64;
        Ok(ChartPayload {
            slide_id: chart.slide_id.clone(),
            cell_count: chart.cell_count,
            densities: chart.densities,
            sectors: (0..N_SECTORS)
                .map(|i| Sector {
                    index: i,
                    name: variable_name(i),
                    start_deg: i as f64 * width,
                    end_deg: (i + 1) as f64 * width,
                    density: chart.densities[i],
                })
                .collect(),
        })
    }

    pub fn points(&self, slide_id: &str) -> Result<PointsPayload, ServiceError> {
        let s = self.slide_index(slide_id)?;
        let points = self.per_slide[s]
            .0
            .iter()
            .map(|&i| {
                let c = &self.cells[i];
                CellPoint {
                    cell_id: cell_id(&self.dataset, c).to_string(),
                    x: c.xy[0],
                    y: c.xy[1],
                    r: c.r,
                    theta: c.theta,
                }
            })
            .collect();
        Ok(PointsPayload {
            slide_id: slide_id.to_string(),
            points,
        })
    }

    /// The `k` cells closest to the query in unit-disc coordinates. Points
    /// outside the disc are pulled onto its boundary first.
    pub fn nearest_cells(&self, q: &NearestCellsQuery) -> Result<NearestPayload, ServiceError> {
        if !(q.x.is_finite() && q.y.is_finite()) {
            return Err(ServiceError::BadRequest("query coordinates must be finite".into()));
        }
        let norm = q.x.hypot(q.y);
        let (x, y) = if norm > 1.0 {
            (q.x / norm, q.y / norm)
        } else {
            (q.x, q.y)
        };
        let hits: Vec<(usize, f64)> = match &q.slide_id {
            None => self
                .global
                .nearest([x, y], q.k)
                .into_iter()
                .map(|h| (h.item, h.distance))
                .collect(),
            Some(id) => {
                let (members, idx) = &self.per_slide[self.slide_index(id)?];
                idx.nearest([x, y], q.k)
                    .into_iter()
                    .map(|h| (members[h.item], h.distance))
                    .collect()
            }
        };
        let neighbors = hits
            .into_iter()
            .map(|(i, distance)| {
                let loc = &self.cells[i];
                let slide = &self.dataset.slides[loc.slide];
                let cell = &slide.cells[loc.cell];
                Neighbor {
                    cell_id: cell.cell_id.clone(),
                    slide_id: slide.slide_id.clone(),
                    distance,
                    x: loc.xy[0],
                    y: loc.xy[1],
                    features: cell.features.clone(),
                    thumbnail_ref: cell.thumbnail_ref.clone(),
                }
            })
            .collect();
        Ok(NearestPayload {
            x,
            y,
            k: q.k,
            slide_id: q.slide_id.clone(),
            neighbors,
        })
    }

    pub fn explain(&self, slide_id: &str) -> Result<Explanation, ServiceError> {
        let s = self.slide_index(slide_id)?;
        let x = &self.features[s];
        let prediction = self.ruleset.predict(x);
        let rules = self
            .ruleset
            .rules
            .iter()
            .enumerate()
            .map(|(r, rule)| RuleReport {
                index: r,
                text: rule.to_string(),
                fired: prediction.fired.contains(&r),
                conditions: rule
                    .conditions()
                    .iter()
                    .zip(&prediction.slacks[r])
                    .map(|(c, &slack)| ConditionReport {
                        text: c.to_string(),
                        variable: variable_name(c.variable),
                        op: c.op.symbol().to_string(),
                        threshold: c.threshold,
                        value: x[c.variable],
                        holds: c.holds(x),
                        slack,
                    })
                    .collect(),
            })
            .collect();
        Ok(Explanation {
            slide_id: slide_id.to_string(),
            true_label: self.dataset.slides[s].label,
            chart: self.chart(slide_id)?,
            variables: (0..x.len()).map(variable_name).collect(),
            features: x.clone(),
            predicted_class: prediction.label,
            positive_class: self.ruleset.positive_class,
            fired: prediction.fired,
            rules,
        })
    }

    pub fn ruleset_payload(&self) -> RuleSetPayload {
        RuleSetPayload {
            positive_class: self.ruleset.positive_class,
            rules: self.ruleset.render(),
            text: self.ruleset.to_string(),
            document: self.ruleset.clone(),
        }
    }

    /// Resolved thumbnail file for a cell, confined to the artifact root.
    pub fn thumbnail_path(&self, cell_id: &str) -> Result<PathBuf, ServiceError> {
        let loc = self
            .by_cell_id
            .get(cell_id)
            .ok_or_else(|| ServiceError::UnknownCell(cell_id.to_string()))?;
        let cell = &self.dataset.slides[self.cells[*loc].slide].cells[self.cells[*loc].cell];
        let reference = cell
            .thumbnail_ref
            .as_deref()
            .ok_or_else(|| ServiceError::NoThumbnail(cell_id.to_string()))?;
        let root = self
            .root
            .canonicalize()
            .map_err(|_| ServiceError::NoThumbnail(cell_id.to_string()))?;
        let path = root
            .join(reference)
            .canonicalize()
            .map_err(|_| ServiceError::NoThumbnail(cell_id.to_string()))?;
        if !path.starts_with(&root) {
            return Err(ServiceError::NoThumbnail(cell_id.to_string()));
        }
        Ok(path)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

fn cell_id<'a>(dataset: &'a Dataset, loc: &CellLoc) -> &'a str {
    &dataset.slides[loc.slide].cells[loc.cell].cell_id
}
