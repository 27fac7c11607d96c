use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Load a CSV with a header row, one `label` column and numeric features in
/// every other column. Classes are `0..=max(label)`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let fail = |field: &str, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        field: field.to_string(),
        message,
    };
    let mut reader = ::csv::Reader::from_path(path).map_err(|e| fail("file", e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| fail("header", e.to_string()))?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| fail("label", "no `label` column in header".into()))?;
    let dim = headers.len() - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fail("record", e.to_string()))?;
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if col == label_col {
                let l: usize = cell
                    .parse()
                    .map_err(|_| fail("label", format!("row {}: `{cell}` is not a class index", row_no + 1)))?;
                labels.push(l);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    fail(&headers[col], format!("row {}: `{cell}` is not numeric", row_no + 1))
                })?;
                features.push(v);
            }
        }
    }
    let num_classes = labels
        .iter()
        .max()
        .map(|m| m + 1)
        .ok_or_else(|| fail("record", "no data rows".into()))?;
    LabeledDataset::new(features, dim, labels, num_classes)
        .map_err(|e| fail("record", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_label_column_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "x0,label,x1\n0.5,1,2\n-1,0,3.25\n").unwrap();
        let d = load_csv(&p).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.labels(), &[1, 0]);
        assert_eq!(d.features(), &[0.5, 2.0, -1.0, 3.25]);
    }

    #[test]
    fn missing_label_column_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::Ingestion { field, .. }) if field == "label"));
    }
}
