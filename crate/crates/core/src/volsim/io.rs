//! Path files.
//!
//! Binary layout: the 8-byte magic `RHPATHS\0`, a little-endian `u32`
//! format version, a little-endian `u64` header length, the JSON header,
//! then the `x` matrix followed by the `sigma` matrix as little-endian `f64`,
//! path-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::market::PathBatch;
use super::model::GridSpec;
use super::sampler::SamplerMethod;
use super::VolsimError;

const MAGIC: &[u8; 8] = b"RHPATHS\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFileHeader {
    pub grid: GridSpec,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub model_hash: String,
    pub method: SamplerMethod,
}

impl PathFileHeader {
    pub fn of(batch: &PathBatch) -> Self {
        Self {
            grid: batch.grid,
            n_paths: batch.n_paths,
            seed: batch.seed,
            x0: batch.x0,
            model_hash: batch.model_hash.clone(),
            method: batch.method,
        }
    }
}

pub fn write_binary(batch: &PathBatch, path: &Path) -> Result<(), VolsimError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = serde_json::to_vec(&PathFileHeader::of(batch)).map_err(|e| VolsimError::Format(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for v in batch.x.iter().chain(&batch.sigma) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<PathBatch, VolsimError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(VolsimError::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(VolsimError::Format(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    if len > 1 << 20 {
        return Err(VolsimError::Format(format!("header length {len} too large")));
    }
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let header: PathFileHeader =
        serde_json::from_slice(&header).map_err(|e| VolsimError::Format(e.to_string()))?;
    let count = header
        .n_paths
        .checked_mul(header.grid.steps + 1)
        .ok_or_else(|| VolsimError::Format("matrix size overflows".into()))?;
    let mut read_matrix = || -> Result<Vec<f64>, VolsimError> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            out.push(f64::from_le_bytes(b8));
        }
        Ok(out)
    };
    let x = read_matrix()?;
    let sigma = read_matrix()?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(VolsimError::Format("trailing bytes after the sigma matrix".into()));
    }
    Ok(PathBatch {
        grid: header.grid,
        n_paths: header.n_paths,
        x,
        sigma,
        seed: header.seed,
        x0: header.x0,
        model_hash: header.model_hash,
        method: header.method,
    })
}

/// Long-format CSV: `path_id,step,t,x,sigma`, preceded by `#` comment lines
/// with the header fields.
pub fn write_csv(batch: &PathBatch, path: &Path) -> Result<(), VolsimError> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# model_hash={}", batch.model_hash)?;
    writeln!(file, "# seed={}", batch.seed)?;
    writeln!(file, "# x0={}", batch.x0)?;
    writeln!(file, "# maturity={} steps={}", batch.grid.maturity, batch.grid.steps)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["path_id", "step", "t", "x", "sigma"])
        .map_err(|e| VolsimError::Format(e.to_string()))?;
    for i in 0..batch.n_paths {
        let (x, s) = (batch.x_path(i), batch.sigma_path(i));
        for k in 0..=batch.grid.steps {
            w.serialize((i, k, batch.grid.time(k), x[k], s[k]))
                .map_err(|e| VolsimError::Format(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}
