//! Per-step diagnostics tables with named, unit-annotated columns.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("row has {got} entries, table has {expected} columns")]
    RowLength { expected: usize, got: usize },
    #[error("missing diagnostics column {0}")]
    MissingColumn(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub description: String,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            description: description.into(),
        }
    }
}

/// A column-named table of per-step records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

impl DiagnosticsSeries {
    pub fn new(columns: Vec<Column>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<(), DiagnosticsError> {
        if row.len() != self.columns.len() {
            return Err(DiagnosticsError::RowLength {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, DiagnosticsError> {
        let i = self
            .column_index(name)
            .ok_or_else(|| DiagnosticsError::MissingColumn(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.rows.last().map(|r| r.as_slice())
    }

    /// Writes `<stem>.csv` and a `<stem>.columns.json` sidecar carrying units.
    pub fn write_csv(&self, stem: &Path) -> Result<[PathBuf; 2], DiagnosticsError> {
        let csv_path = stem.with_extension("csv");
        let json_path = stem.with_extension("columns.json");
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            // `{:?}` keeps the shortest round-tripping representation.
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        fs::write(&json_path, serde_json::to_string_pretty(&self.columns)?)?;
        Ok([csv_path, json_path])
    }

    pub fn read_csv(stem: &Path) -> Result<Self, DiagnosticsError> {
        let columns: Vec<Column> =
            serde_json::from_str(&fs::read_to_string(stem.with_extension("columns.json"))?)?;
        let mut r = csv::Reader::from_path(stem.with_extension("csv"))?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|e| {
                        DiagnosticsError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let mut out = Self::new(columns);
        for row in rows {
            out.push(row)?;
        }
        Ok(out)
    }
}
