//! Field snapshots: raw little-endian f64 in row-major order plus a JSON
//! sidecar `{dim, N, L, time, quantity}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FieldError, PeriodicGrid, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub time: f64,
    pub quantity: String,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Writes raw little-endian values to `path`.
pub fn write_raw(path: &Path, values: &[f64]) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn write_field(
    stem: &Path,
    field: &ScalarField,
    time: f64,
    quantity: &str,
) -> Result<[PathBuf; 2], FieldError> {
    let g = field.grid();
    let bin = with_ext(stem, ".bin");
    let json = with_ext(stem, ".json");
    write_raw(&bin, field.values())?;
    let meta = SnapshotMeta {
        dim: g.dim(),
        n: g.n(),
        length: g.length(),
        time,
        quantity: quantity.to_string(),
    };
    fs::write(&json, serde_json::to_string_pretty(&meta)?)?;
    Ok([bin, json])
}

pub fn read_field(stem: &Path) -> Result<(ScalarField, SnapshotMeta), FieldError> {
    let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(with_ext(stem, ".json"))?)?;
    let grid = PeriodicGrid::new(meta.dim, meta.n, meta.length)?;
    let bytes = fs::read(with_ext(stem, ".bin"))?;
    if bytes.len() != grid.len() * 8 {
        return Err(FieldError::LengthMismatch {
            expected: grid.len() * 8,
            got: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ScalarField::new(grid, values)?, meta))
}
