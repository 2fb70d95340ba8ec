//! File formats: ASCII PLY point clouds, binary PPM/PGM images, and the JSON
//! sidecars used next to score maps and depth frames.

mod ply;
mod pnm;

pub use ply::{read_ply, write_ply};
pub use pnm::{
    read_depth_pgm, read_mask_pgm, read_pgm16, read_ppm, write_depth_pgm, write_mask_pgm,
    write_pgm16, write_ppm,
};

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::image::ScoreMap;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl IoError {
    pub(crate) fn format(path: &Path, message: impl Into<String>) -> IoError {
        IoError::Format {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

/// Sidecar describing the affine mapping of a 16-bit score PGM:
/// `value = min + (raw / 65535) * (max - min)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoreSidecar {
    pub min: f64,
    pub max: f64,
}

/// Write a score image as 16-bit PGM plus its `[min, max]` sidecar JSON.
pub fn write_score_map(
    pgm_path: &Path,
    sidecar_path: &Path,
    scores: &ScoreMap,
) -> Result<ScoreSidecar, IoError> {
    let (min, max) = scores.value_range().unwrap_or((0.0, 0.0));
    let span = if max > min { max - min } else { 1.0 };
    let raw: Vec<u16> = scores
        .values
        .iter()
        .map(|&v| (((v - min) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16)
        .collect();
    write_pgm16(pgm_path, scores.width, scores.height, &raw)?;
    let sidecar = ScoreSidecar { min, max };
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(sidecar)
}

/// Read a score image written by [`write_score_map`] back into real values.
pub fn read_score_map(pgm_path: &Path, sidecar_path: &Path) -> Result<ScoreMap, IoError> {
    let (width, height, raw) = read_pgm16(pgm_path)?;
    let sidecar: ScoreSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let span = sidecar.max - sidecar.min;
    Ok(ScoreMap {
        width,
        height,
        values: raw
            .iter()
            .map(|&r| sidecar.min + (r as f64 / 65535.0) * span)
            .collect(),
    })
}

/// Read a confidence map stored as a plain 16-bit PGM with `value / 65535`
/// semantics (no sidecar).
pub fn read_confidence_pgm(path: &Path) -> Result<ScoreMap, IoError> {
    let (width, height, raw) = read_pgm16(path)?;
    Ok(ScoreMap {
        width,
        height,
        values: raw.iter().map(|&r| r as f64 / 65535.0).collect(),
    })
}

/// Write a confidence map in `[0, 1]` as a plain 16-bit PGM.
pub fn write_confidence_pgm(path: &Path, scores: &ScoreMap) -> Result<(), IoError> {
    let raw: Vec<u16> = scores
        .values
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    write_pgm16(path, scores.width, scores.height, &raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_map_round_trip() {
        let dir = std::env::temp_dir().join("harvest_core_io_test_scores");
        std::fs::create_dir_all(&dir).unwrap();
        let mut s = ScoreMap::new(3, 2);
        for (i, v) in s.values.iter_mut().enumerate() {
            *v = -4.0 + i as f64 * 1.7;
        }
        let pgm = dir.join("s.pgm");
        let side = dir.join("s.json");
        write_score_map(&pgm, &side, &s).unwrap();
        let back = read_score_map(&pgm, &side).unwrap();
        for (a, b) in s.values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
