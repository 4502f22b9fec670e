//! CSV exchange formats for charts, feature vectors and slide labels.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{variable_name, DensityChart, N_FEATURES, N_SECTORS};
use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Writes `slide_id,D1..D12,count`.
pub fn write_charts_csv<T: Scalar, W: Write>(charts: &[DensityChart<T>], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    let mut header = vec!["slide_id".to_string()];
    header.extend((0..N_SECTORS).map(variable_name));
    header.push("count".into());
    w.write_record(&header).map_err(csv_err)?;
    for chart in charts {
        let mut row = vec![chart.slide_id.clone()];
        row.extend(chart.densities.iter().map(|d| d.as_f64().to_string()));
        row.push(chart.cell_count.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Slide ids with their 78-variable rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable<T = f64> {
    pub slide_ids: Vec<String>,
    pub rows: Vec<Vec<T>>,
}

impl<T: Scalar> FeatureTable<T> {
    /// Rows stacked into an `n × 78` matrix.
    pub fn matrix(&self) -> Array2<T> {
        Array2::from_shape_fn((self.rows.len(), N_FEATURES), |(i, j)| self.rows[i][j])
    }

    /// Labels aligned with the rows; every slide must have one.
    pub fn aligned_labels(&self, labels: &HashMap<String, ClassLabel>) -> Result<Vec<ClassLabel>> {
        self.slide_ids
            .iter()
            .map(|id| labels.get(id).copied().ok_or_else(|| Error::UnknownSlide(id.clone())))
            .collect()
    }
}

/// Writes `slide_id` followed by the 78 named variables.
pub fn write_features_csv<T: Scalar, W: Write>(table: &FeatureTable<T>, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    let mut header = vec!["slide_id".to_string()];
    header.extend((0..N_FEATURES).map(variable_name));
    w.write_record(&header).map_err(csv_err)?;
    for (id, row) in table.slide_ids.iter().zip(&table.rows) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.as_f64().to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureTable<T>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let headers = r.headers().map_err(|e| Error::parse(path, e))?.clone();
    if headers.len() != N_FEATURES + 1 || &headers[0] != "slide_id" {
        return Err(Error::parse(
            path,
            format!(
                "expected slide_id plus {N_FEATURES} feature columns, found {} columns",
                headers.len()
            ),
        ));
    }
    let mut table = FeatureTable {
        slide_ids: Vec::new(),
        rows: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let row = (1..rec.len())
            .map(|k| {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::parse(path, e))
            })
            .collect::<Result<Vec<T>>>()?;
        table.slide_ids.push(rec[0].to_string());
        table.rows.push(row);
    }
    Ok(table)
}

/// Writes `slide_id,label` with labels as `1`/`2`.
pub fn write_labels_csv<W: Write>(labels: &[(String, ClassLabel)], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["slide_id", "label"]).map_err(csv_err)?;
    for (id, label) in labels {
        w.write_record([id.as_str(), &label.as_u8().to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<HashMap<String, ClassLabel>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        if rec.len() != 2 {
            return Err(Error::parse(path, "expected two columns: slide_id,label"));
        }
        let label: ClassLabel = rec[1].parse().map_err(|e: String| Error::parse(path, e))?;
        out.insert(rec[0].to_string(), label);
    }
    Ok(out)
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_csv_layout() {
        let mut densities = [0.0; 12];
        densities[0] = 0.25;
        densities[11] = 0.75;
        let chart = DensityChart {
            slide_id: "s1".into(),
            densities,
            cell_count: 4,
        };
        let mut buf = Vec::new();
        write_charts_csv(&[chart], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "slide_id,D1,D2,D3,D4,D5,D6,D7,D8,D9,D10,D11,D12,count"
        );
        assert_eq!(lines.next().unwrap(), "s1,0.25,0,0,0,0,0,0,0,0,0,0,0.75,4");
    }

    #[test]
    fn features_and_labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let table = FeatureTable {
            slide_ids: vec!["a".into(), "b".into()],
            rows: vec![(0..78).map(|k| k as f64 / 7.0).collect(), vec![0.5; 78]],
        };
        let fpath = dir.path().join("f.csv");
        write_features_csv(&table, std::fs::File::create(&fpath).unwrap()).unwrap();
        assert_eq!(read_features_csv::<f64>(&fpath).unwrap(), table);

        let lpath = dir.path().join("l.csv");
        let labels = vec![
            ("a".to_string(), ClassLabel::Class1),
            ("b".to_string(), ClassLabel::Class2),
        ];
        write_labels_csv(&labels, std::fs::File::create(&lpath).unwrap()).unwrap();
        let back = read_labels_csv(&lpath).unwrap();
        assert_eq!(back["b"], ClassLabel::Class2);
        assert_eq!(
            table.aligned_labels(&back).unwrap(),
            vec![ClassLabel::Class1, ClassLabel::Class2]
        );
        assert_eq!(table.matrix()[[0, 7]], 1.0);

        let partial: HashMap<String, ClassLabel> = [("a".to_string(), ClassLabel::Class1)].into();
        assert!(matches!(table.aligned_labels(&partial), Err(Error::UnknownSlide(id)) if id == "b"));
    }
}
