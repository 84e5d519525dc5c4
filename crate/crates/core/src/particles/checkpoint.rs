//! Ensemble checkpoints: columnar little-endian f64 plus a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Particle, ParticleEnsemble, ParticleError};
use crate::fields::PeriodicGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    #[serde(rename = "N_p")]
    pub n_p: usize,
    #[serde(rename = "M")]
    pub mass: f64,
    pub seed: u64,
    pub step: u64,
    pub time: f64,
    pub dim: usize,
    #[serde(rename = "N")]
    pub grid_n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    /// Column names in storage order; each column holds `N_p` values.
    pub columns: Vec<String>,
}

fn column_names(dim: usize) -> Vec<String> {
    let mut names = Vec::new();
    for prefix in ["x", "v"] {
        for a in 0..dim {
            names.push(format!("{prefix}{a}"));
        }
    }
    names.extend(["y1", "y2"].map(String::from));
    for a in 0..dim {
        names.push(format!("disp{a}"));
    }
    names.extend(["clock", "last_tumble"].map(String::from));
    names
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

type Column = Box<dyn Fn(&Particle) -> f64>;

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn write_checkpoint(ens: &ParticleEnsemble, stem: &Path) -> Result<[PathBuf; 2], ParticleError> {
    let dim = ens.grid().dim();
    let ps = ens.particles();
    let mut cols: Vec<Column> = Vec::new();
    for a in 0..dim {
        cols.push(Box::new(move |p: &Particle| p.x[a]));
    }
    for a in 0..dim {
        cols.push(Box::new(move |p: &Particle| p.v[a]));
    }
    cols.push(Box::new(|p: &Particle| p.y[0]));
    cols.push(Box::new(|p: &Particle| p.y[1]));
    for a in 0..dim {
        cols.push(Box::new(move |p: &Particle| p.disp[a]));
    }
    cols.push(Box::new(|p: &Particle| p.clock));
    cols.push(Box::new(|p: &Particle| p.last_tumble.unwrap_or(f64::NAN)));
    let mut bytes = Vec::with_capacity(cols.len() * ps.len() * 8);
    for col in &cols {
        for p in ps {
            bytes.extend_from_slice(&col(p).to_le_bytes());
        }
    }
    let bin = with_ext(stem, ".bin");
    let json = with_ext(stem, ".json");
    fs::write(&bin, bytes)?;
    let meta = CheckpointMeta {
        n_p: ps.len(),
        mass: ens.mass(),
        seed: ens.seed(),
        step: ens.step,
        time: ens.time,
        dim,
        grid_n: ens.grid().n(),
        length: ens.grid().length(),
        columns: column_names(dim),
    };
    fs::write(&json, serde_json::to_string_pretty(&meta)?)?;
    Ok([bin, json])
}

pub fn read_checkpoint(stem: &Path) -> Result<ParticleEnsemble, ParticleError> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(with_ext(stem, ".json"))?)?;
    let grid = PeriodicGrid::new(meta.dim, meta.grid_n, meta.length)?;
    let names = column_names(meta.dim);
    if meta.columns != names {
        return Err(ParticleError::Invalid(format!("unexpected checkpoint columns {:?}", meta.columns)));
    }
    let bytes = fs::read(with_ext(stem, ".bin"))?;
    let n = meta.n_p;
    if bytes.len() != names.len() * n * 8 {
        return Err(ParticleError::Invalid(format!(
            "checkpoint holds {} bytes, expected {}",
            bytes.len(),
            names.len() * n * 8
        )));
    }
    let value = |col: usize, i: usize| {
        let o = (col * n + i) * 8;
        f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"))
    };
    let d = meta.dim;
    let particles = (0..n)
        .map(|i| {
            let mut p = Particle {
                x: [0.0; 3],
                v: [0.0; 3],
                y: [value(2 * d, i), value(2 * d + 1, i)],
                disp: [0.0; 3],
                clock: value(3 * d + 2, i),
                last_tumble: Some(value(3 * d + 3, i)).filter(|t| !t.is_nan()),
            };
            for a in 0..d {
                p.x[a] = value(a, i);
                p.v[a] = value(d + a, i);
                p.disp[a] = value(2 * d + 2 + a, i);
            }
            p
        })
        .collect();
    Ok(ParticleEnsemble::from_parts(grid, particles, meta.mass, meta.seed, meta.step, meta.time))
}
