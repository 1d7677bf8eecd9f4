//! Mel matrix import: CSV (one row per band, one column per frame) or raw
//! little-endian `f64` with a JSON sidecar.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Contents of `<name>.json` next to a `<name>.bin` mel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelSidecar {
    /// Number of mel bands (rows).
    pub mels: usize,
    /// Number of frames (columns).
    pub frames: usize,
    pub sample_rate: u32,
    /// Window length in samples.
    pub window: usize,
    /// Hop length in samples.
    pub hop: usize,
}

#[derive(Debug, Clone)]
pub struct ImportedMel {
    pub mel: Array2<f64>,
    pub sidecar: Option<MelSidecar>,
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn read_mel(path: &Path) -> Result<ImportedMel> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(ImportedMel {
            mel: read_csv(path)?,
            sidecar: None,
        }),
        Some("bin") => read_bin(path),
        _ => bail!("{}: expected a .csv or .bin mel matrix", path.display()),
    }
}

fn read_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| cell.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}: bad number", path.display(), lineno + 1))?;
        if let Some(first) = rows.first() {
            ensure!(
                row.len() == first.len(),
                "{}:{}: {} columns, expected {}",
                path.display(),
                lineno + 1,
                row.len(),
                first.len()
            );
        }
        rows.push(row);
    }
    ensure!(!rows.is_empty(), "{}: no data", path.display());
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.concat();
    Ok(Array2::from_shape_vec((flat.len() / cols, cols), flat)?)
}

fn read_bin(path: &Path) -> Result<ImportedMel> {
    let side = sidecar_path(path);
    let sidecar: MelSidecar = serde_json::from_str(
        &std::fs::read_to_string(&side).with_context(|| format!("cannot read sidecar {}", side.display()))?,
    )
    .with_context(|| format!("bad sidecar {}", side.display()))?;
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let expected = sidecar.mels * sidecar.frames * 8;
    ensure!(
        bytes.len() == expected,
        "{}: {} bytes, sidecar implies {expected}",
        path.display(),
        bytes.len()
    );
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ImportedMel {
        mel: Array2::from_shape_vec((sidecar.mels, sidecar.frames), values)?,
        sidecar: Some(sidecar),
    })
}

/// Writes `mel` as `<path>` (raw `f64`) plus its sidecar.
pub fn write_bin(path: &Path, mel: &Array2<f64>, sidecar: &MelSidecar) -> Result<()> {
    ensure!(
        mel.dim() == (sidecar.mels, sidecar.frames),
        "sidecar shape does not match the matrix"
    );
    let bytes: Vec<u8> = mel.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

pub fn write_csv(path: &Path, mel: &Array2<f64>) -> Result<()> {
    let mut text = String::new();
    for row in mel.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
