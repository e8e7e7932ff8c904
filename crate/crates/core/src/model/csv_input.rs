use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{Dataset, Label};
use crate::error::{DmlError, Result};

/// Binds CSV columns to dataset roles by header name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub outcomes: Vec<String>,
    pub treatment: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Covariates holding category names; each is expanded into indicators
    /// for every level except the first in sorted order.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Declared treatment label set. Cells are matched as strings first and
    /// numerically second, so `1` and `1.0` both match label `"1"`.
    pub labels: Vec<String>,
    #[serde(default)]
    pub weights: Option<String>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| DmlError::Ingestion {
            row: 0,
            column: name.to_string(),
            message: "column missing from header".into(),
        })
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Err(DmlError::Ingestion {
            row,
            column: column.to_string(),
            message: "blank cell".into(),
        });
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DmlError::Ingestion {
            row,
            column: column.to_string(),
            message: format!("`{trimmed}` is not a finite number"),
        }),
    }
}

fn match_label(cell: &str, labels: &[String]) -> Option<Label> {
    let cell = cell.trim();
    if let Some(i) = labels.iter().position(|l| l == cell) {
        return Some(Label(i));
    }
    let value = cell.parse::<f64>().ok()?;
    labels
        .iter()
        .position(|l| l.trim().parse::<f64>().ok() == Some(value))
        .map(Label)
}

/// Reads a headered, comma-separated UTF-8 file into a [`Dataset`].
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path.as_ref())
        .map_err(|e| DmlError::Ingestion {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| DmlError::Ingestion {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();

    let outcome_idx: Vec<usize> = schema
        .outcomes
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_>>()?;
    let treat_idx = column_index(&headers, &schema.treatment)?;
    let cov_idx: Vec<usize> = schema
        .covariates
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_>>()?;
    let cat_idx: Vec<usize> = schema
        .categorical
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<_>>()?;
    let weight_idx = schema
        .weights
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;

    let mut records = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DmlError::Ingestion {
            row: r + 1,
            column: String::new(),
            message: e.to_string(),
        })?;
        records.push(rec);
    }

    // Levels of each categorical column, sorted.
    let levels: Vec<Vec<String>> = cat_idx
        .iter()
        .zip(&schema.categorical)
        .map(|(&c, name)| {
            let mut set = BTreeSet::new();
            for (r, rec) in records.iter().enumerate() {
                let cell = rec.get(c).unwrap_or("").trim();
                if cell.is_empty() {
                    return Err(DmlError::Ingestion {
                        row: r + 1,
                        column: name.clone(),
                        message: "blank cell".into(),
                    });
                }
                set.insert(cell.to_string());
            }
            Ok(set.into_iter().collect())
        })
        .collect::<Result<_>>()?;
    let k = cov_idx.len()
        + levels
            .iter()
            .map(|l| l.len().saturating_sub(1))
            .sum::<usize>();

    let n = records.len();
    let mut outcomes = Vec::with_capacity(n * outcome_idx.len());
    let mut covariates = Vec::with_capacity(n * k);
    let mut treatment = Vec::with_capacity(n);
    let mut weights = weight_idx.map(|_| Vec::with_capacity(n));
    for (r, rec) in records.iter().enumerate() {
        let row = r + 1;
        for (&c, name) in outcome_idx.iter().zip(&schema.outcomes) {
            outcomes.push(parse_number(rec.get(c).unwrap_or(""), row, name)?);
        }
        let cell = rec.get(treat_idx).unwrap_or("");
        let label = match_label(cell, &schema.labels).ok_or_else(|| DmlError::Ingestion {
            row,
            column: schema.treatment.clone(),
            message: format!("unknown treatment label \"{}\"", cell.trim()),
        })?;
        treatment.push(label);
        for (&c, name) in cov_idx.iter().zip(&schema.covariates) {
            covariates.push(parse_number(rec.get(c).unwrap_or(""), row, name)?);
        }
        for (&c, lv) in cat_idx.iter().zip(&levels) {
            let cell = rec.get(c).unwrap_or("").trim();
            for level in lv.iter().skip(1) {
                covariates.push(if cell == level { 1.0 } else { 0.0 });
            }
        }
        if let (Some(w), Some(c)) = (weights.as_mut(), weight_idx) {
            w.push(parse_number(
                rec.get(c).unwrap_or(""),
                row,
                schema.weights.as_deref().unwrap(),
            )?);
        }
    }
    Dataset::new(
        outcomes,
        outcome_idx.len(),
        treatment,
        schema.labels.clone(),
        covariates,
        k,
        weights,
    )
}
