use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CellRecord, ClassLabel, Dataset, Slide};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "manifest.json";

/// One manifest line: a slide and the CSV file holding its cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slide_id: String,
    pub patient_id: String,
    pub label: Option<ClassLabel>,
    /// Relative paths resolve against the manifest's directory.
    pub cells_file: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ManifestDoc {
    Wrapped { slides: Vec<ManifestEntry> },
    Bare(Vec<ManifestEntry>),
}

/// Reads a manifest and every cells file it references.
///
/// Slides keep manifest order. Each cells file is a CSV with header
/// `cell_id,f0,...,f{D-1}` and an optional trailing `thumbnail` column.
pub fn load_dataset<T: Scalar>(manifest_path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::parse(manifest_path, e))?;
    let entries = match serde_json::from_str::<ManifestDoc>(&text).map_err(|e| Error::parse(manifest_path, e))? {
        ManifestDoc::Wrapped { slides } => slides,
        ManifestDoc::Bare(slides) => slides,
    };
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut feature_dim: Option<usize> = None;
    let mut slides = Vec::with_capacity(entries.len());
    for entry in entries {
        let cells_path = base.join(&entry.cells_file);
        let (dim, cells) = read_cells::<T>(&cells_path)?;
        match feature_dim {
            None => feature_dim = Some(dim),
            Some(d) if d != dim => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: dim,
                })
            }
            Some(_) => {}
        }
        slides.push(Slide {
            slide_id: entry.slide_id,
            patient_id: entry.patient_id,
            label: entry.label,
            cells,
            synthetic: entry.synthetic,
        });
    }
    let feature_dim = feature_dim.ok_or_else(|| Error::parse(manifest_path, "manifest lists no slides"))?;
    Dataset::new(slides, feature_dim)
}

fn read_cells<T: Scalar>(path: &Path) -> Result<(usize, Vec<CellRecord<T>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e))?.clone();
    let columns: Vec<&str> = headers.iter().collect();
    if columns.first() != Some(&"cell_id") {
        return Err(Error::parse(path, "first column must be `cell_id`"));
    }
    let has_thumbnail = columns.last() == Some(&"thumbnail");
    let dim = columns.len() - 1 - usize::from(has_thumbnail);
    for (k, name) in columns[1..=dim].iter().enumerate() {
        if *name != format!("f{k}") {
            return Err(Error::parse(path, format!("expected column `f{k}`, found `{name}`")));
        }
    }

    let mut cells = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        if record.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len() - 1,
                found: record.len().saturating_sub(1),
            });
        }
        let features = (1..=dim)
            .map(|k| {
                record[k]
                    .trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::parse(path, format!("row {}: column f{}: {e}", line + 2, k - 1)))
            })
            .collect::<Result<Vec<T>>>()?;
        let thumbnail_ref = if has_thumbnail {
            Some(record[dim + 1].to_string()).filter(|s| !s.is_empty())
        } else {
            None
        };
        cells.push(CellRecord {
            cell_id: record[0].to_string(),
            features,
            thumbnail_ref,
        });
    }
    Ok((dim, cells))
}

/// Writes `manifest.json` and one `cells/NNNN_<slide>.csv` per slide into
/// `dir`. Output bytes depend only on the dataset.
pub fn write_dataset<T: Scalar>(dataset: &Dataset<T>, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("cells"))?;
    let mut entries = Vec::with_capacity(dataset.slides.len());
    for (idx, slide) in dataset.slides.iter().enumerate() {
        let file = format!("cells/{idx:04}_{}.csv", sanitize(&slide.slide_id));
        write_cells(slide, dataset.feature_dim, &dir.join(&file))?;
        entries.push(ManifestEntry {
            slide_id: slide.slide_id.clone(),
            patient_id: slide.patient_id.clone(),
            label: slide.label,
            cells_file: file,
            synthetic: slide.synthetic,
        });
    }
    let manifest = dir.join(MANIFEST_FILE);
    let doc = ManifestDoc::Wrapped { slides: entries };
    fs::write(&manifest, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(manifest)
}

fn write_cells<T: Scalar>(slide: &Slide<T>, dim: usize, path: &Path) -> Result<()> {
    let has_thumbnail = slide.cells.iter().any(|c| c.thumbnail_ref.is_some());
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut header = vec!["cell_id".to_string()];
    header.extend((0..dim).map(|k| format!("f{k}")));
    if has_thumbnail {
        header.push("thumbnail".into());
    }
    writer.write_record(&header).map_err(|e| Error::parse(path, e))?;
    for cell in &slide.cells {
        let mut row = Vec::with_capacity(dim + 2);
        row.push(cell.cell_id.clone());
        // f64's Display is the shortest string that parses back exactly.
        row.extend(cell.features.iter().map(|v| v.as_f64().to_string()));
        if has_thumbnail {
            row.push(cell.thumbnail_ref.clone().unwrap_or_default());
        }
        writer.write_record(&row).map_err(|e| Error::parse(path, e))?;
    }
    writer.flush()?;
    Ok(())
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
