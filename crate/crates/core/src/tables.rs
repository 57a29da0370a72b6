//! CSV files exchanged between commands: feature tables (`id,<names>`),
//! assignments (`id,label`, 1-based labels) and plain numeric grids.

use std::path::Path;

use nalgebra::DMatrix;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// A feature matrix together with the sample id of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub features: FeatureMatrix,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, features: FeatureMatrix) -> Result<Self> {
        if ids.len() != features.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                features.nrows()
            )));
        }
        Ok(Self { ids, features })
    }

    pub fn to_csv(&self) -> String {
        let a = &self.features;
        let mut out = String::from("id");
        for j in 0..a.ncols() {
            out.push(',');
            out.push_str(&a.name(j));
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..a.ncols() {
                out.push(',');
                out.push_str(&a.matrix()[(i, j)].to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = open_csv(path)?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::malformed(path, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if header.first().map(String::as_str) != Some("id") || header.len() < 2 {
            return Err(Error::malformed(path, "expected header `id,<feature names>`"));
        }
        let n = header.len() - 1;
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::malformed(path, e.to_string()))?;
            if rec.len() != n + 1 {
                return Err(Error::malformed(path, format!("row {} has {} fields, expected {}", row + 1, rec.len(), n + 1)));
            }
            ids.push(rec[0].to_owned());
            for field in rec.iter().skip(1) {
                values.push(parse_f64(path, row, field)?);
            }
        }
        let features = FeatureMatrix::new(DMatrix::from_row_slice(ids.len(), n, &values))?
            .with_names(header[1..].to_vec())?;
        Self::new(ids, features)
    }
}

fn parse_f64(path: &Path, row: usize, field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::malformed(path, format!("row {}: `{field}` is not a number", row + 1)))
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::malformed(path, e.to_string()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn assignment_csv(ids: &[String], assignment: &ClusterAssignment) -> String {
    let mut out = String::from("id,label\n");
    for (id, l) in ids.iter().zip(assignment.labels_one_based()) {
        out.push_str(&format!("{id},{l}\n"));
    }
    out
}

pub fn write_assignment(path: &Path, ids: &[String], assignment: &ClusterAssignment) -> Result<()> {
    write_text(path, &assignment_csv(ids, assignment))
}

/// Read `id,label` rows; labels come back 1-based as written.
pub fn read_assignment(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let mut reader = open_csv(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::malformed(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != ["id", "label"] {
        return Err(Error::malformed(path, "expected header `id,label`"));
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::malformed(path, e.to_string()))?;
        let label: usize = rec
            .get(1)
            .unwrap_or_default()
            .parse()
            .ok()
            .filter(|&l| l >= 1)
            .ok_or_else(|| Error::malformed(path, format!("row {}: labels are integers >= 1", row + 1)))?;
        ids.push(rec[0].to_owned());
        labels.push(label);
    }
    if ids.is_empty() {
        return Err(Error::malformed(path, "no rows"));
    }
    Ok((ids, labels))
}

/// Comma-separated rows under a header line.
pub fn rows_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_table_round_trip_is_exact() {
        let a = FeatureMatrix::new(DMatrix::from_row_slice(3, 2, &[0.1, -2.5e-17, 1.0 / 3.0, 7.0, 1e300, -0.0]))
            .unwrap()
            .with_names(vec!["fpc1".into(), "fpc2".into()])
            .unwrap();
        let t = FeatureTable::new(vec!["a".into(), "b".into(), "c".into()], a).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        t.save(&p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("id,fpc1,fpc2\na,0.1,"));
        assert_eq!(FeatureTable::load(&p).unwrap(), t);
    }

    #[test]
    fn assignment_is_one_based_on_disk() {
        let a = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let asg = ClusterAssignment::from_labels(&a, vec![1, 1, 0], 2).unwrap();
        let ids: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        assert_eq!(assignment_csv(&ids, &asg), "id,label\nx,2\ny,2\nz,1\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_assignment(&p, &ids, &asg).unwrap();
        assert_eq!(read_assignment(&p).unwrap(), (ids, vec![2, 2, 1]));
    }

    #[test]
    fn bad_files_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "id,label\nx,0\n").unwrap();
        assert!(matches!(read_assignment(&p), Err(Error::MalformedFile { .. })));
        std::fs::write(&p, "name,v\nx,1\n").unwrap();
        assert!(matches!(FeatureTable::load(&p), Err(Error::MalformedFile { .. })));
        std::fs::write(&p, "id,v\nx,abc\ny,1\n").unwrap();
        assert!(matches!(FeatureTable::load(&p), Err(Error::MalformedFile { .. })));
        assert!(matches!(
            FeatureTable::load(&dir.path().join("nope.csv")),
            Err(Error::MissingFile(_))
        ));
    }
}
