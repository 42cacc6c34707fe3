//! CSV ingestion and column data-type inference.

use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::Serialize;
use thiserror::Error;

use crate::schema::{DataType, SourceColumn};

/// Default number of values kept per column.
pub const DEFAULT_SAMPLE_LIMIT: usize = 6;

/// Fraction of non-empty values a type must accept to be inferred.
pub const INFERENCE_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("input is empty (no header row)")]
    Empty,
    #[error("sample_limit must be at least 1")]
    BadSampleLimit,
    #[error("header cell {0} is empty")]
    EmptyHeader(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestWarnings {
    /// 1-based data-row indices whose cell count differed from the header.
    pub ragged_rows: Vec<usize>,
    /// Cells beyond the header width that were discarded.
    pub dropped_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedTable {
    pub columns: Vec<SourceColumn>,
    pub warnings: IngestWarnings,
}

pub fn ingest_csv(path: impl AsRef<Path>, sample_limit: usize) -> Result<IngestedTable, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_reader(file, sample_limit)
}

pub fn ingest_reader(reader: impl Read, sample_limit: usize) -> Result<IngestedTable, IngestError> {
    if sample_limit == 0 {
        return Err(IngestError::BadSampleLimit);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(IngestError::Empty),
    };
    if header.iter().all(|h| h.trim().is_empty()) {
        return Err(IngestError::Empty);
    }
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let h = h.trim().trim_start_matches('\u{feff}').to_string();
            if h.is_empty() {
                Err(IngestError::EmptyHeader(i))
            } else {
                Ok(h)
            }
        })
        .collect::<Result<_, _>>()?;

    let width = names.len();
    let mut samples: Vec<Vec<String>> = vec![Vec::new(); width];
    let mut profiles: Vec<TypeProfile> = vec![TypeProfile::default(); width];
    let mut warnings = IngestWarnings::default();

    for (row, record) in records.enumerate() {
        let record = record?;
        if record.len() != width {
            warnings.ragged_rows.push(row + 1);
            warnings.dropped_cells += record.len().saturating_sub(width);
        }
        for col in 0..width {
            let cell = record.get(col).unwrap_or("");
            profiles[col].observe(cell);
            if samples[col].len() < sample_limit {
                samples[col].push(cell.to_string());
            }
        }
    }
    if !warnings.ragged_rows.is_empty() {
        tracing::warn!(
            rows = warnings.ragged_rows.len(),
            dropped = warnings.dropped_cells,
            "ragged CSV rows"
        );
    }

    let columns = names
        .into_iter()
        .zip(samples)
        .zip(profiles)
        .map(|((name, samples), profile)| SourceColumn {
            name,
            declared_dtype: profile.infer(),
            samples,
        })
        .collect();
    Ok(IngestedTable { columns, warnings })
}

/// Candidate types in order of specificity.
const CANDIDATES: [DataType; 5] = [
    DataType::Integer,
    DataType::Float,
    DataType::Boolean,
    DataType::Date,
    DataType::Timestamp,
];

#[derive(Debug, Clone, Copy, Default)]
struct TypeProfile {
    non_empty: usize,
    accepted: [usize; 5],
}

impl TypeProfile {
    fn observe(&mut self, value: &str) {
        let v = value.trim();
        if v.is_empty() {
            return;
        }
        self.non_empty += 1;
        for (slot, ty) in self.accepted.iter_mut().zip(CANDIDATES) {
            if accepts(ty, v) {
                *slot += 1;
            }
        }
    }

    fn infer(&self) -> Option<DataType> {
        if self.non_empty == 0 {
            return None;
        }
        let need = INFERENCE_THRESHOLD * self.non_empty as f64;
        Some(
            CANDIDATES
                .iter()
                .zip(self.accepted)
                .find(|(_, n)| *n as f64 >= need)
                .map(|(t, _)| *t)
                .unwrap_or(DataType::String),
        )
    }
}

/// Infers a column type from raw values; `None` when every value is empty.
pub fn infer_dtype<S: AsRef<str>>(values: &[S]) -> Option<DataType> {
    let mut p = TypeProfile::default();
    for v in values {
        p.observe(v.as_ref());
    }
    p.infer()
}

fn accepts(ty: DataType, v: &str) -> bool {
    match ty {
        DataType::Integer => v.parse::<i64>().is_ok(),
        DataType::Float => {
            v.bytes().any(|b| b.is_ascii_digit())
                && !v.chars().any(|c| c.is_alphabetic() && c != 'e' && c != 'E')
                && v.parse::<f64>().is_ok()
        }
        DataType::Boolean => v.eq_ignore_ascii_case("true") || v.eq_ignore_ascii_case("false"),
        DataType::Date => NaiveDate::parse_from_str(v, "%Y-%m-%d").is_ok(),
        DataType::Timestamp => {
            DateTime::parse_from_rfc3339(v).is_ok()
                || ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
                    .iter()
                    .any(|f| NaiveDateTime::parse_from_str(v, f).is_ok())
        }
        DataType::String => true,
    }
}
