//! CSV ingestion and the feature-kind rule.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use reluctant_core::spline_basis::FeatureKind;
use reluctant_core::Error;

use crate::CliError;

/// Features with more than this many distinct values get a spline basis.
pub const NONLINEAR_UNIQUE_THRESHOLD: usize = 40;

const MISSING: [&str; 6] = ["", "na", "nan", "null", "none", "?"];

#[derive(Debug, Clone)]
pub struct Dataset {
    pub names: Vec<String>,
    pub response: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Rows removed by listwise deletion.
    pub dropped: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn from_path(path: &Path, response: &str) -> Result<Self, CliError> {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::Usage(format!("cannot open dataset {}: {e}", path.display())))?;
        Self::from_reader(file, response)
    }

    pub fn from_reader<R: Read>(input: R, response: &str) -> Result<Self, CliError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let y_col = header
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| CliError::Usage(format!("response column '{response}' not found")))?;
        let width = header.len();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut dropped = 0;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != width {
                return Err(CliError::Run(Error::InvalidArgument(format!(
                    "row {} has {} fields, header has {width}",
                    line + 2,
                    rec.len()
                ))));
            }
            let mut row = Vec::with_capacity(width);
            let mut missing = false;
            for (c, field) in rec.iter().enumerate() {
                if MISSING.contains(&field.to_ascii_lowercase().as_str()) {
                    missing = true;
                    row.push(f64::NAN);
                    continue;
                }
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    _ => {
                        return Err(CliError::Run(Error::InvalidArgument(format!(
                            "non-numeric column '{}' (value '{field}' on row {})",
                            header[c],
                            line + 2
                        ))))
                    }
                }
            }
            if missing {
                dropped += 1;
            } else {
                rows.push(row);
            }
        }
        if rows.is_empty() {
            return Err(CliError::Run(Error::EmptyInput("dataset rows")));
        }
        let feature_cols: Vec<usize> = (0..width).filter(|&c| c != y_col).collect();
        let n = rows.len();
        let x = DMatrix::from_fn(n, feature_cols.len(), |i, j| rows[i][feature_cols[j]]);
        let y = DVector::from_fn(n, |i, _| rows[i][y_col]);
        let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
        let data = Self {
            names,
            response: response.to_string(),
            x,
            y,
            dropped,
        };
        data.check_degenerate()?;
        Ok(data)
    }

    fn check_degenerate(&self) -> Result<(), CliError> {
        for (j, name) in self.names.iter().enumerate() {
            let col = self.x.column(j);
            if col.iter().all(|&v| v == col[0]) {
                return Err(CliError::Run(Error::DegenerateFeature { name: Some(name.clone()) }));
            }
        }
        Ok(())
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        (0..self.p()).map(|j| classify(self.x.column(j).iter().copied())).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            response: self.response.clone(),
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            dropped: 0,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.names.clone();
        header.push(self.response.clone());
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(CliError::Io)
    }
}

/// More than [`NONLINEAR_UNIQUE_THRESHOLD`] distinct values means nonlinear.
pub fn classify(values: impl Iterator<Item = f64>) -> FeatureKind {
    let distinct: HashSet<u64> = values.map(|v| (v + 0.0).to_bits()).collect();
    if distinct.len() > NONLINEAR_UNIQUE_THRESHOLD {
        FeatureKind::Nonlinear
    } else {
        FeatureKind::Linear
    }
}

pub(crate) fn csv_err(e: csv::Error) -> CliError {
    CliError::Run(Error::InvalidArgument(format!("csv: {e}")))
}
