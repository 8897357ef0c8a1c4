//! Deterministic file output: CSV tables, PGM carpets and run manifests.
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::MomentumDensity;
use crate::error::{Error, Result};
use crate::observables::Carpet;

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Fixed 9-significant-digit scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.8e}")
}

/// CSV text with a header row; every value in [`fmt_num`] format.
pub fn format_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_atomic(path, format_table(header, rows).as_bytes())
}

pub fn format_density_csv(density: &MomentumDensity) -> String {
    let rows: Vec<Vec<f64>> = density
        .density
        .iter()
        .enumerate()
        .map(|(i, rho)| vec![density.grid.q_over_k(i), *rho])
        .collect();
    format_table(&["q_over_k", "density"], &rows)
}

pub fn write_density_csv(path: &Path, density: &MomentumDensity) -> Result<()> {
    write_atomic(path, format_density_csv(density).as_bytes())
}

/// Binary graymap, one row per time. Each row is scaled to its own maximum so
/// that the densest point is 255.
pub fn format_carpet_pgm(carpet: &Carpet) -> Result<Vec<u8>> {
    if carpet.rows.is_empty() {
        return Err(Error::EmptyCarpet);
    }
    let width = carpet.grid.n_q;
    let mut out = format!("P5\n{} {}\n255\n", width, carpet.rows.len()).into_bytes();
    for row in &carpet.rows {
        let max = row.density.iter().cloned().fold(0.0, f64::max);
        out.extend(row.density.iter().map(|v| {
            if max > 0.0 {
                (255.0 * v / max).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        }));
    }
    Ok(out)
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".axes.txt");
    PathBuf::from(s)
}

pub fn format_carpet_axes(carpet: &Carpet) -> String {
    let mut s = String::new();
    let n = carpet.grid.n_q;
    let _ = writeln!(s, "columns {n}");
    let _ = writeln!(s, "rows {}", carpet.rows.len());
    let _ = writeln!(s, "q_over_k_first {}", fmt_num(carpet.grid.q_over_k(0)));
    let _ = writeln!(s, "q_over_k_last {}", fmt_num(carpet.grid.q_over_k(n - 1)));
    let _ = writeln!(s, "t_first_s {}", fmt_num(carpet.times.first().copied().unwrap_or(0.0)));
    let _ = writeln!(s, "t_last_s {}", fmt_num(carpet.times.last().copied().unwrap_or(0.0)));
    s
}

/// Writes the graymap and its axis sidecar; returns the sidecar path.
pub fn write_carpet_pgm(path: &Path, carpet: &Carpet) -> Result<PathBuf> {
    let bytes = format_carpet_pgm(carpet)?;
    write_atomic(path, &bytes)?;
    let side = sidecar_path(path);
    write_atomic(&side, format_carpet_axes(carpet).as_bytes())?;
    Ok(side)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub seed: u64,
    /// Configuration as written by the config writer.
    pub config: String,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<OutputDigest> {
    let bytes = fs::read(path)?;
    Ok(OutputDigest {
        path: path.display().to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn new(command: Vec<String>, seed: u64, config: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            seed,
            config,
            outputs: Vec::new(),
        }
    }

    /// Digests the given files, in order.
    pub fn record(&mut self, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            self.outputs.push(digest_file(p)?);
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).map_err(|e| Error::Validation(e.to_string()))?;
        json.push('\n');
        write_atomic(path, json.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Paths whose current contents no longer match their recorded digest.
    pub fn mismatches(&self) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| digest_file(Path::new(&o.path)).map_or(true, |d| d != **o))
            .map(|o| o.path.clone())
            .collect()
    }
}
