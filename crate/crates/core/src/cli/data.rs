use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::estimators::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadOptions {
    /// Map outcome values `0 -> -1` and `1 -> +1`.
    pub remap_binary: bool,
}

/// Header and numeric cells of a CSV file. Rows are 1-based in errors,
/// counting data rows only.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("column `{name}` not found in header")))
    }
}

/// Reads a comma-separated file with a header row. Every cell must parse as
/// a finite number; empty cells are rejected as missing values.
pub fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if h.is_empty() {
            return Err(Error::InvalidInput("empty column name in header".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate column name `{h}`")));
        }
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let mut values = Vec::with_capacity(header.len());
        for (cell, name) in record.iter().zip(&header) {
            if cell.is_empty() {
                return Err(Error::Data {
                    row,
                    column: name.clone(),
                    message: "missing value".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                row,
                column: name.clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    column: name.clone(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("`{}` has no data rows", path.display())));
    }
    Ok(Table { header, rows })
}

fn outcome_value(v: f64, row: usize, column: &str, options: LoadOptions) -> Result<f64> {
    let negative = if options.remap_binary { 0.0 } else { -1.0 };
    if v == 1.0 {
        Ok(1.0)
    } else if v == negative {
        Ok(-1.0)
    } else {
        Err(Error::Data {
            row,
            column: column.to_owned(),
            message: if options.remap_binary {
                format!("outcome value {v} is not 0 or 1")
            } else {
                format!("outcome value {v} is not -1 or 1")
            },
        })
    }
}

/// Builds a dataset from `table`: `outcomes[0]` is the target, the rest are
/// auxiliary, and every other column is a covariate (in file order).
pub fn dataset_from_table(table: &Table, outcomes: &[String], options: LoadOptions) -> Result<Dataset> {
    let outcome_idx: Vec<usize> = outcomes
        .iter()
        .map(|name| table.column_index(name))
        .collect::<Result<_>>()?;
    let mut unique = HashSet::new();
    if let Some(dup) = outcomes.iter().find(|o| !unique.insert(o.as_str())) {
        return Err(Error::InvalidInput(format!("outcome column `{dup}` given twice")));
    }
    let covariate_idx: Vec<usize> = (0..table.header.len())
        .filter(|j| !outcome_idx.contains(j))
        .collect();
    if covariate_idx.is_empty() {
        return Err(Error::InvalidInput("no covariate columns left".into()));
    }
    let n = table.rows.len();
    let x = Array2::from_shape_fn((n, covariate_idx.len()), |(i, q)| table.rows[i][covariate_idx[q]]);
    let mut y = Array2::zeros((n, outcome_idx.len()));
    for i in 0..n {
        for (k, &j) in outcome_idx.iter().enumerate() {
            y[[i, k]] = outcome_value(table.rows[i][j], i + 1, &table.header[j], options)?;
        }
    }
    Dataset::new(x, y)?.with_names(
        covariate_idx.iter().map(|&j| table.header[j].clone()).collect(),
        outcomes.to_vec(),
    )
}

/// Loads a dataset with `target` as outcome 0 followed by `auxiliary`.
pub fn load_dataset(
    path: &Path,
    target: &str,
    auxiliary: &[String],
    options: LoadOptions,
) -> Result<Dataset> {
    let mut outcomes = vec![target.to_owned()];
    outcomes.extend(auxiliary.iter().cloned());
    dataset_from_table(&read_table(path)?, &outcomes, options)
}
