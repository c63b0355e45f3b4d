//! CSV ingestion: comma-delimited, `.` decimal separator, UTF-8.
//!
//! A column is numeric when its first data cell parses as a number; any later
//! cell of a numeric column that does not parse is an error. Other feature
//! columns are one-hot encoded with levels in first-appearance order. Labels
//! are mapped to `0..C` in first-appearance order. Row and column numbers in
//! errors are 1-based and count the header line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::nn::Tensor2;
use crate::{Error, Result};

/// Label column by 0-based position or header name. In JSON: a number or a
/// string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    /// Requires a header row.
    Name(String),
}

#[derive(Debug, Clone)]
pub struct CsvDataset {
    pub dataset: LabeledDataset,
    /// `label_names[k]` is the raw label mapped to class `k`.
    pub label_names: Vec<String>,
    /// Names of the produced feature columns (`column=level` for one-hot).
    pub feature_names: Vec<String>,
}

enum ColumnKind {
    Numeric,
    Categorical(Vec<String>),
}

pub fn load_csv(path: &Path, label_column: &LabelColumn, has_header: bool) -> Result<CsvDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .delimiter(b',')
        .from_path(path)?;
    let header: Option<Vec<String>> = if has_header {
        Some(reader.headers()?.iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let first_line = if has_header { 2 } else { 1 };
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        rows.push(record.iter().map(|s| s.trim().to_string()).collect());
        let row = &rows[i];
        for (c, cell) in row.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Ingestion {
                    row: first_line + i,
                    column: c + 1,
                    message: "missing value".into(),
                });
            }
        }
    }
    let width = rows.first().map(Vec::len).or(header.as_ref().map(Vec::len)).unwrap_or(0);
    let names: Vec<String> = header.unwrap_or_else(|| (1..=width).map(|c| format!("col{c}")).collect());
    let label_idx = match label_column {
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => {
            return Err(Error::Config(format!("label column {i} out of range for {width} columns")))
        }
        LabelColumn::Name(name) => names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("no column named {name:?}")))?,
    };
    if rows.is_empty() {
        return Err(Error::Ingestion {
            row: first_line,
            column: 1,
            message: "no data rows".into(),
        });
    }

    let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
    let mut kinds: Vec<ColumnKind> = rows[0]
        .iter()
        .map(|cell| match parse(cell) {
            Some(_) => ColumnKind::Numeric,
            None => ColumnKind::Categorical(Vec::new()),
        })
        .collect();
    let mut label_names: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(rows.len());
    for row in &rows {
        let raw = &row[label_idx];
        let k = match label_names.iter().position(|l| l == raw) {
            Some(k) => k,
            None => {
                label_names.push(raw.clone());
                label_names.len() - 1
            }
        };
        labels.push(k);
        for (c, cell) in row.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            if let ColumnKind::Categorical(levels) = &mut kinds[c] {
                if !levels.contains(cell) {
                    levels.push(cell.clone());
                }
            }
        }
    }

    let mut feature_names = Vec::new();
    for (c, kind) in kinds.iter().enumerate() {
        if c == label_idx {
            continue;
        }
        match kind {
            ColumnKind::Numeric => feature_names.push(names[c].clone()),
            ColumnKind::Categorical(levels) => {
                feature_names.extend(levels.iter().map(|l| format!("{}={l}", names[c])))
            }
        }
    }
    let mut data = Vec::with_capacity(rows.len() * feature_names.len());
    for (i, row) in rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            match &kinds[c] {
                ColumnKind::Numeric => data.push(parse(cell).ok_or_else(|| Error::Ingestion {
                    row: first_line + i,
                    column: c + 1,
                    message: format!("cannot parse {cell:?} as a number"),
                })?),
                ColumnKind::Categorical(levels) => {
                    data.extend(levels.iter().map(|l| if l == cell { 1.0 } else { 0.0 }))
                }
            }
        }
    }
    let dataset = LabeledDataset::new(
        Tensor2::new(rows.len(), feature_names.len(), data)?,
        labels,
        label_names.len(),
    )?;
    Ok(CsvDataset {
        dataset,
        label_names,
        feature_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn numeric_with_header() {
        let f = write("a,b,label\n1.0,2.0,a\n3.5,-1,b\n0,0,a\n");
        let d = load_csv(f.path(), &LabelColumn::Name("label".into()), true).unwrap();
        assert_eq!(d.dataset.len(), 3);
        assert_eq!(d.dataset.feature_count(), 2);
        assert_eq!(d.dataset.labels(), &[0, 1, 0]);
        assert_eq!(d.dataset.class_count(), 2);
        assert_eq!(d.label_names, vec!["a", "b"]);
        assert_eq!(d.dataset.features().row(1), &[3.5, -1.0]);
    }

    #[test]
    fn categorical_feature_is_one_hot() {
        let f = write("red,1,x\nblue,2,y\ngreen,3,x\nred,4,y\n");
        let d = load_csv(f.path(), &LabelColumn::Index(2), false).unwrap();
        assert_eq!(d.dataset.feature_count(), 4);
        assert_eq!(d.feature_names, vec!["col1=red", "col1=blue", "col1=green", "col2"]);
        assert_eq!(d.dataset.features().row(2), &[0.0, 0.0, 1.0, 3.0]);
    }

    #[test]
    fn bad_numeric_cell_reports_position() {
        let f = write("a,label\n1,x\noops,y\n");
        match load_csv(f.path(), &LabelColumn::Index(1), true) {
            Err(Error::Ingestion { row, column, .. }) => assert_eq!((row, column), (3, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_value_rejected() {
        let f = write("1,,x\n");
        assert!(matches!(
            load_csv(f.path(), &LabelColumn::Index(2), false),
            Err(Error::Ingestion { row: 1, column: 2, .. })
        ));
    }
}
