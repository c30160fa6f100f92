//! Ingestion of externally produced patch predictions.
//!
//! Prediction files are CSV with the exact header `tile_id,row,col,score`
//! and one row per grid origin. A lookup-backed scorer serves the scores
//! during inference; a missing origin is an error, never a default.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ClassifyError, PatchScorer, PatchView};
use crate::patchset::PatchGeometry;

pub const PREDICTION_HEADER: &str = "tile_id,row,col,score";

/// Scores keyed by `(tile_id, row, col)`.
#[derive(Debug, Clone)]
pub struct PredictionTable {
    map: HashMap<(String, u32, u32), f64>,
}

impl PredictionTable {
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, tile_id: &str, origin: (u32, u32)) -> Option<f64> {
        self.map
            .get(&(tile_id.to_string(), origin.0, origin.1))
            .copied()
    }
}

impl PatchScorer for PredictionTable {
    fn score(&self, patch: &PatchView<'_>) -> Result<f64, ClassifyError> {
        self.get(patch.tile_id, patch.origin)
            .ok_or_else(|| ClassifyError::MissingPrediction {
                tile_id: patch.tile_id.to_string(),
                row: patch.origin.0,
                col: patch.origin.1,
            })
    }
}

/// Parse a prediction CSV, validating scores and grid alignment against `g`.
pub fn ingest_predictions(
    path: impl AsRef<Path>,
    g: &PatchGeometry,
) -> Result<PredictionTable, ClassifyError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ClassifyError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let bad = |line: usize, detail: String| ClassifyError::MalformedPrediction {
        path: path.display().to_string(),
        line,
        detail,
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == PREDICTION_HEADER => {}
        Some((_, header)) => {
            return Err(bad(1, format!("expected header '{PREDICTION_HEADER}', got '{header}'")))
        }
        None => return Err(bad(1, "empty file".into())),
    }

    let mut map = HashMap::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(line_no, format!("expected 4 fields, got {}", fields.len())));
        }
        let tile_id = fields[0].trim().to_string();
        if tile_id.is_empty() {
            return Err(bad(line_no, "empty tile id".into()));
        }
        let row: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| bad(line_no, format!("bad row '{}'", fields[1])))?;
        let col: u32 = fields[2]
            .trim()
            .parse()
            .map_err(|_| bad(line_no, format!("bad col '{}'", fields[2])))?;
        let score: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| bad(line_no, format!("bad score '{}'", fields[3])))?;
        if !(0.0..=1.0).contains(&score) || !score.is_finite() {
            return Err(bad(line_no, format!("score {score} outside [0, 1]")));
        }
        let stride = g.stride as u32;
        if !row.is_multiple_of(stride) || !col.is_multiple_of(stride) {
            return Err(bad(
                line_no,
                format!("origin ({row},{col}) not on the stride-{stride} grid"),
            ));
        }
        if map.insert((tile_id.clone(), row, col), score).is_some() {
            return Err(bad(
                line_no,
                format!("duplicate origin ({row},{col}) for tile '{tile_id}'"),
            ));
        }
    }
    Ok(PredictionTable { map })
}

/// Write rows in the prediction CSV format consumed by
/// [`ingest_predictions`]. Scores print with full round-trip precision.
pub fn write_predictions(
    path: impl AsRef<Path>,
    rows: &[(String, u32, u32, f64)],
) -> Result<(), ClassifyError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "{PREDICTION_HEADER}").expect("vec write");
    for (tile_id, row, col, score) in rows {
        writeln!(out, "{tile_id},{row},{col},{score}").expect("vec write");
    }
    fs::write(path, out).map_err(|e| ClassifyError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
