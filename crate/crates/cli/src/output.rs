//! Result persistence: atomic file writes, the run manifest, and report
//! comparison.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{CliError, ExperimentConfig};

/// Everything needed to reproduce the run: config echo, tool version, and
/// the seed actually used, plus digests of the files written.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub config: &'a ExperimentConfig,
    pub version: &'static str,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Writes through a temp file in the target directory and renames, so a
/// crash never leaves a partial result file.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, contents)?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub fn write_outputs(
    out_dir: &Path,
    files: &[(&str, Vec<u8>)],
    cfg: &ExperimentConfig,
    started: Instant,
) -> Result<Vec<PathBuf>, CliError> {
    let mut digests = Vec::new();
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = out_dir.join(name);
        atomic_write(&path, contents)?;
        digests.push(FileDigest {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
        });
        written.push(path);
    }
    let manifest = RunManifest {
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: digests,
    };
    let manifest_json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let path = out_dir.join("run_manifest.json");
    atomic_write(&path, &manifest_json)?;
    written.push(path);
    Ok(written)
}

/// Field-by-field CSV comparison: headers must match exactly, numeric
/// cells within `tolerance`, non-numeric cells equal.
pub fn compare_reports(a: &Path, b: &Path, tolerance: f64) -> Result<(), CliError> {
    let ta = std::fs::read_to_string(a)?;
    let tb = std::fs::read_to_string(b)?;
    let la: Vec<&str> = ta.lines().collect();
    let lb: Vec<&str> = tb.lines().collect();
    if la.first() != lb.first() {
        return Err(CliError::SchemaMismatch(format!(
            "headers differ: {:?} vs {:?}",
            la.first(),
            lb.first()
        )));
    }
    if la.len() != lb.len() {
        return Err(CliError::SchemaMismatch(format!(
            "row counts differ: {} vs {}",
            la.len().saturating_sub(1),
            lb.len().saturating_sub(1)
        )));
    }
    for (row, (ra, rb)) in la.iter().zip(&lb).enumerate().skip(1) {
        let ca: Vec<&str> = ra.split(',').collect();
        let cb: Vec<&str> = rb.split(',').collect();
        if ca.len() != cb.len() {
            return Err(CliError::SchemaMismatch(format!(
                "row {row}: field counts differ"
            )));
        }
        for (col, (va, vb)) in ca.iter().zip(&cb).enumerate() {
            match (va.parse::<f64>(), vb.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    if (x - y).abs() > tolerance {
                        return Err(CliError::CompareFailed(format!(
                            "row {row} col {col}: |{x} - {y}| > {tolerance}"
                        )));
                    }
                }
                _ => {
                    if va != vb {
                        return Err(CliError::CompareFailed(format!(
                            "row {row} col {col}: {va:?} != {vb:?}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}
