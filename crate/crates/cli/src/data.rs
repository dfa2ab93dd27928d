//! CSV ingestion: a header row, one count response and numeric covariates.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use bellreg_core::model::ModelError;
use bellreg_core::Dataset;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV near data row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("no rows: the file has a header but no data")]
    NoRows,
    #[error("no header row")]
    NoHeader,
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("column {0:?} appears more than once")]
    DuplicateColumn(String),
    #[error("row {row}, column {column:?}: response {value:?} is not a nonnegative integer")]
    BadResponse { row: usize, column: String, value: String },
    #[error("row {row}, column {column:?}: {value:?} is not a finite number")]
    BadCovariate { row: usize, column: String, value: String },
    #[error("column {0:?} is constant and cannot be standardized")]
    ConstantColumn(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How to turn a table into a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetOptions {
    pub response: String,
    /// Covariate columns in design order; `None` takes every other column.
    pub covariates: Option<Vec<String>>,
    pub add_intercept: bool,
    /// Centre and scale every non-intercept column to unit variance.
    pub standardize: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            response: "y".into(),
            covariates: None,
            add_intercept: true,
            standardize: false,
        }
    }
}

/// A dataset with the name of each design column.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub names: Vec<String>,
}

pub const INTERCEPT_NAME: &str = "intercept";

fn parse_count(raw: &str) -> Option<u64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Some(v);
    }
    // allow "3.0" from spreadsheet exports
    let v: f64 = s.parse().ok()?;
    (v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 9.0e15).then_some(v as u64)
}

fn parse_value(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a CSV document; data rows are numbered from 1 in errors.
pub fn parse_dataset<R: Read>(reader: R, options: &DatasetOptions) -> Result<LoadedData, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(DataError::NoHeader);
    }
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let response = find(&options.response)?;
    let covariates: Vec<usize> = match &options.covariates {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_, _>>()?,
        None => (0..header.len()).filter(|&i| i != response).collect(),
    };

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| DataError::Csv {
            row,
            message: e.to_string(),
        })?;
        let cell = |col: usize| record.get(col).unwrap_or("");
        let raw = cell(response);
        y.push(parse_count(raw).ok_or_else(|| DataError::BadResponse {
            row,
            column: header[response].clone(),
            value: raw.to_string(),
        })?);
        let values = covariates
            .iter()
            .map(|&c| {
                parse_value(cell(c)).ok_or_else(|| DataError::BadCovariate {
                    row,
                    column: header[c].clone(),
                    value: cell(c).to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(values);
    }
    if y.is_empty() {
        return Err(DataError::NoRows);
    }

    let mut names: Vec<String> = covariates.iter().map(|&c| header[c].clone()).collect();
    if options.standardize {
        let skip = usize::from(!options.add_intercept);
        for j in skip..names.len() {
            standardize_column(&mut rows, j).map_err(|()| DataError::ConstantColumn(names[j].clone()))?;
        }
    }
    let dataset = if options.add_intercept {
        names.insert(0, INTERCEPT_NAME.to_string());
        Dataset::with_intercept(y, &rows)?
    } else {
        let flat: Vec<f64> = rows.concat();
        Dataset::new(y, DMatrix::from_row_slice(rows.len(), covariates.len(), &flat))?
    };
    Ok(LoadedData { dataset, names })
}

fn standardize_column(rows: &mut [Vec<f64>], j: usize) -> Result<(), ()> {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(());
    }
    for r in rows.iter_mut() {
        r[j] = (r[j] - mean) / sd;
    }
    Ok(())
}

pub fn parse_dataset_str(text: &str, options: &DatasetOptions) -> Result<LoadedData, DataError> {
    parse_dataset(text.as_bytes(), options)
}

pub fn load_dataset(path: &Path, options: &DatasetOptions) -> Result<LoadedData, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(file, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> DatasetOptions {
        DatasetOptions::default()
    }

    #[test]
    fn basic_table() {
        let d = parse_dataset_str("y,a,b\n1,0.5,2\n0,1.5,-1\n3,2.5,0\n", &opts()).unwrap();
        assert_eq!(d.names, ["intercept", "a", "b"]);
        assert_eq!(d.dataset.y(), &[1, 0, 3]);
        assert_eq!(d.dataset.x()[(1, 1)], 1.5);
        assert_eq!(d.dataset.x()[(2, 0)], 1.0);
    }

    #[test]
    fn column_selection_and_order() {
        let o = DatasetOptions {
            response: "count".into(),
            covariates: Some(vec!["b".into()]),
            ..opts()
        };
        let d = parse_dataset_str("a,count,b\n9,1,2\n9,0,3\n", &o).unwrap();
        assert_eq!(d.names, ["intercept", "b"]);
        assert_eq!(d.dataset.x()[(1, 1)], 3.0);
    }

    #[test]
    fn errors_name_the_cell() {
        assert!(matches!(parse_dataset_str("", &opts()), Err(DataError::NoHeader | DataError::MissingColumn(_))));
        assert!(matches!(parse_dataset_str("y,a\n", &opts()), Err(DataError::NoRows)));
        let e = parse_dataset_str("y,a\n1,0\n2.5,1\n", &opts()).unwrap_err();
        assert!(matches!(&e, DataError::BadResponse { row: 2, column, value } if column == "y" && value == "2.5"));
        assert!(e.to_string().contains("row 2"));
        let e = parse_dataset_str("y,a\n1,0\n-1,1\n", &opts()).unwrap_err();
        assert!(matches!(e, DataError::BadResponse { row: 2, .. }));
        let e = parse_dataset_str("y,a\n1,nan\n2,1\n", &opts()).unwrap_err();
        assert!(matches!(&e, DataError::BadCovariate { row: 1, column, .. } if column == "a"));
        let e = parse_dataset_str("x,a\n1,0\n", &opts()).unwrap_err();
        assert!(matches!(e, DataError::MissingColumn(c) if c == "y"));
        assert!(matches!(
            parse_dataset_str("y,a,a\n1,0,0\n", &opts()),
            Err(DataError::DuplicateColumn(_))
        ));
        assert!(matches!(parse_dataset_str("y,a\n1,0,3\n", &opts()), Err(DataError::Csv { row: 1, .. })));
    }

    #[test]
    fn integral_floats_are_counts() {
        let d = parse_dataset_str("y,a\n3.0,1\n 4 ,2\n", &opts()).unwrap();
        assert_eq!(d.dataset.y(), &[3, 4]);
    }

    #[test]
    fn without_intercept_requires_a_ones_column() {
        let o = DatasetOptions {
            add_intercept: false,
            ..opts()
        };
        let d = parse_dataset_str("y,one,a\n1,1,2\n2,1,3\n", &o).unwrap();
        assert_eq!(d.names, ["one", "a"]);
        assert!(matches!(
            parse_dataset_str("y,a\n1,2\n2,3\n", &o),
            Err(DataError::Model(ModelError::MissingIntercept { .. }))
        ));
    }

    #[test]
    fn standardized_columns() {
        let o = DatasetOptions {
            standardize: true,
            ..opts()
        };
        let d = parse_dataset_str("y,a\n1,1\n2,2\n3,3\n", &o).unwrap();
        let col: Vec<f64> = d.dataset.x().column(1).iter().copied().collect();
        assert_eq!(col, [-1.0, 0.0, 1.0]);
        assert!(matches!(
            parse_dataset_str("y,a\n1,1\n2,1\n", &o),
            Err(DataError::ConstantColumn(_))
        ));
    }

    #[test]
    fn shipped_mine_data() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mine_fracture.csv");
        let d = load_dataset(&path, &opts()).unwrap();
        assert_eq!((d.dataset.n(), d.dataset.p()), (44, 5));
        assert_eq!(d.dataset.y().iter().sum::<u64>(), 98);
        assert_eq!(d.names, ["intercept", "x1", "x2", "x3", "x4"]);
    }
}
