//! Manifest-based dataset storage.
//!
//! A manifest is a CSV file with header `record_id,path,label,fs`. Paths are
//! resolved relative to the manifest's directory. Signal files are either raw
//! little-endian f32 samples (`.f32`, no header) or one sample per line
//! (`.csv`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassCounts, RawLabel, Record};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub record_id: String,
    pub path: String,
    pub label: String,
    pub fs: f64,
}

fn read_signal(path: &Path, id: &str) -> Result<Vec<f64>> {
    let missing = |e: std::io::Error| Error::Data(format!("record '{id}': cannot read {}: {e}", path.display()));
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let signal: Vec<f64> = match ext {
        "f32" => {
            let bytes = fs::read(path).map_err(missing)?;
            if bytes.len() % 4 != 0 {
                return Err(Error::Data(format!("record '{id}': file size {} is not a multiple of 4", bytes.len())));
            }
            bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()
        }
        "csv" => {
            let text = fs::read_to_string(path).map_err(missing)?;
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| l.parse::<f64>().map_err(|_| Error::Data(format!("record '{id}': bad sample '{l}'"))))
                .collect::<Result<_>>()?
        }
        other => return Err(Error::Data(format!("record '{id}': unsupported signal extension '{other}'"))),
    };
    if signal.is_empty() {
        return Err(Error::Data(format!("record '{id}': empty signal")));
    }
    Ok(signal)
}

/// Load every record of a manifest, in manifest order.
pub fn load_dataset(manifest: &Path) -> Result<Vec<Record>> {
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::Reader::from_path(manifest).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(manifest, io),
        other => Error::Data(format!("{}: {other:?}", manifest.display())),
    })?;
    let mut records = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row?;
        let label: RawLabel = row
            .label
            .parse()
            .map_err(|_| Error::Data(format!("record '{}': bad label token '{}'", row.record_id, row.label)))?;
        if !(row.fs > 0.0) {
            return Err(Error::Data(format!("record '{}': sampling rate must be > 0", row.record_id)));
        }
        let signal = read_signal(&base.join(&row.path), &row.record_id)?;
        records.push(Record { id: row.record_id, signal, fs: row.fs, label });
    }
    let counts = ClassCounts::of(&records);
    log::info!("loaded {} records from {} ({counts})", records.len(), manifest.display());
    Ok(records)
}

/// Write records as `.f32` files under `dir/signals` plus `dir/manifest.csv`.
/// Returns the manifest path.
pub fn write_dataset(records: &[Record], dir: &Path) -> Result<PathBuf> {
    let sig_dir = dir.join("signals");
    fs::create_dir_all(&sig_dir).map_err(|e| Error::io(&sig_dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest)?;
    for r in records {
        let rel = format!("signals/{}.f32", r.id);
        let bytes: Vec<u8> = r.signal.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        let p = dir.join(&rel);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        w.serialize(ManifestRow { record_id: r.id.clone(), path: rel, label: r.label.token().into(), fs: r.fs })?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
