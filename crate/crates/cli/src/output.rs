use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gptd_core::experiments::ExperimentConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of the effective configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("configuration serializes");
    hex::encode(&Sha256::digest(&canonical)[..8])
}

/// Writes `# config_hash=<hash>`, a header row and one row per record.
pub fn write_csv<T: Serialize>(path: &Path, hash: &str, rows: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# config_hash={hash}")?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn output_file(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_configuration() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.episodes += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 16);
    }

    #[test]
    fn comment_line_precedes_header() {
        #[derive(Serialize)]
        struct Row {
            a: u32,
            b: f64,
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, "00ff", &[Row { a: 1, b: 0.5 }]).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "# config_hash=00ff\na,b\n1,0.5\n");
    }
}
