//! Dataset directories: `manifest.json` plus flat little-endian binaries.
//!
//! Matrices are stored as `f64` in column-major order. Index lists are stored
//! per column as a `u64` count followed by that many `u64` indices; outlier
//! columns append one `f64` value per index.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::masks::OutlierColumn;
use super::truth::{assemble_observations, DataConfig, Dataset, GroundTruth, TruthStats};
use crate::error::{Error, Result};
use crate::linalg::Basis;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub alpha: usize,
    pub seed: u64,
    pub config: DataConfig,
    pub change_batches: Vec<usize>,
    pub stats: TruthStats,
    pub files: Vec<String>,
}

const FILES: [&str; 6] = ["y.bin", "ltilde.bin", "coefficients.bin", "subspaces.bin", "masks.bin", "outliers.bin"];

pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &ds.config;
    let mut y = Array2::<f64>::zeros((cfg.n, cfg.d));
    for b in &ds.batches {
        y.slice_mut(s![.., b.start..b.start + b.alpha()]).assign(&b.y);
    }
    write_file(&dir.join("y.bin"), &matrix_bytes(y.view()))?;
    write_file(&dir.join("ltilde.bin"), &matrix_bytes(ds.truth.ltilde.view()))?;
    write_file(&dir.join("coefficients.bin"), &matrix_bytes(ds.truth.coefficients.view()))?;
    let mut sub = Vec::new();
    for p in &ds.truth.subspaces {
        sub.extend(matrix_bytes(p.view()));
    }
    write_file(&dir.join("subspaces.bin"), &sub)?;
    let mut masks = Vec::new();
    for m in &ds.masks {
        push_indices(&mut masks, m);
    }
    write_file(&dir.join("masks.bin"), &masks)?;
    let mut out = Vec::new();
    for o in &ds.outliers {
        push_indices(&mut out, &o.support);
        for v in &o.values {
            out.extend(v.to_le_bytes());
        }
    }
    write_file(&dir.join("outliers.bin"), &out)?;
    let manifest = Manifest {
        schema_version: DATASET_SCHEMA_VERSION,
        n: cfg.n,
        d: cfg.d,
        r: cfg.r,
        alpha: cfg.alpha,
        seed: cfg.seed,
        config: cfg.clone(),
        change_batches: ds.truth.change_batches.clone(),
        stats: ds.truth.stats.clone(),
        files: FILES.iter().map(|f| f.to_string()).collect(),
    };
    write_file(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_slice(&read_file(&dir.join("manifest.json"))?)?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "dataset schema version {} (expected {DATASET_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let (n, d, r, alpha) = (manifest.n, manifest.d, manifest.r, manifest.alpha);
    if alpha == 0 || d % alpha != 0 {
        return Err(Error::Schema(format!("d = {d} is not a multiple of alpha = {alpha}")));
    }
    let y = read_matrix(&dir.join("y.bin"), n, d)?;
    let ltilde = read_matrix(&dir.join("ltilde.bin"), n, d)?;
    let coefficients = read_matrix(&dir.join("coefficients.bin"), r, d)?;
    let sub = read_file(&dir.join("subspaces.bin"))?;
    let per = n * r * 8;
    if sub.len() != per * (d / alpha) {
        return Err(Error::Schema(format!("subspaces.bin has {} bytes", sub.len())));
    }
    let subspaces = sub
        .chunks(per)
        .map(|c| Basis::new(matrix_from_bytes(c, n, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut cursor = Cursor::new(read_file(&dir.join("masks.bin"))?);
    let masks = (0..d).map(|_| cursor.indices()).collect::<Result<Vec<_>>>()?;
    cursor.finish("masks.bin")?;
    let mut cursor = Cursor::new(read_file(&dir.join("outliers.bin"))?);
    let mut outliers = Vec::new();
    if !cursor.done() {
        for _ in 0..d {
            let support = cursor.indices()?;
            let values = (0..support.len()).map(|_| cursor.f64()).collect::<Result<Vec<_>>>()?;
            outliers.push(OutlierColumn { support, values });
        }
    }
    cursor.finish("outliers.bin")?;
    let mut batches = assemble_observations(ltilde.view(), alpha, &masks, &outliers)?;
    // observed values come from y.bin, not from re-assembly
    for b in &mut batches {
        b.y.assign(&y.slice(s![.., b.start..b.start + alpha]));
    }
    let truth = GroundTruth {
        subspaces,
        ltilde,
        coefficients,
        alpha,
        change_batches: manifest.change_batches,
        stats: manifest.stats,
    };
    Ok(Dataset { config: manifest.config, truth, masks, outliers, batches })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

fn matrix_bytes(m: ArrayView2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * 8);
    for col in m.columns() {
        for v in col {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

fn matrix_from_bytes(bytes: &[u8], rows: usize, cols: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for (k, chunk) in bytes.chunks_exact(8).enumerate() {
        m[[k % rows, k / rows]] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    m
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let bytes = read_file(path)?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Schema(format!(
            "{} has {} bytes, expected {}",
            path.display(),
            bytes.len(),
            rows * cols * 8
        )));
    }
    Ok(matrix_from_bytes(&bytes, rows, cols))
}

fn push_indices(out: &mut Vec<u8>, idx: &[usize]) {
    out.extend((idx.len() as u64).to_le_bytes());
    for &i in idx {
        out.extend((i as u64).to_le_bytes());
    }
}

struct Cursor {
    bytes: Vec<u8>,
    pos: usize,
}

impl Cursor {
    fn new(bytes: Vec<u8>) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn word(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let w = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Schema("truncated index file".into()))?;
        self.pos = end;
        Ok(w.try_into().unwrap())
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.word()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.word()?))
    }

    fn indices(&mut self) -> Result<Vec<usize>> {
        let len = self.u64()? as usize;
        (0..len).map(|_| Ok(self.u64()? as usize)).collect()
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn finish(&self, name: &str) -> Result<()> {
        if self.done() {
            Ok(())
        } else {
            Err(Error::Schema(format!("{name} has trailing bytes")))
        }
    }
}
