//! Ground-truth annotations as delivered by an annotator: crack polylines
//! with stroke widths plus the four tile corner points, rasterized onto a
//! binary mask.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BinaryMask, ImagingError};

/// One annotated crack: a polyline in `[row, col]` coordinates drawn with a
/// fixed stroke width in pixels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<[f64; 2]>,
    pub stroke_width: f64,
}

/// Digital annotation for one tile.
///
/// Corner points are carried for registration tooling; nothing in this
/// pipeline consumes them beyond storage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Annotation {
    pub tile_id: String,
    pub width: usize,
    pub height: usize,
    pub polylines: Vec<Polyline>,
    pub corners: [[f64; 2]; 4],
}

impl Annotation {
    fn validate(&self) -> Result<(), ImagingError> {
        if self.width == 0 || self.height == 0 {
            return Err(ImagingError::InvalidAnnotation(
                "zero image dimensions".into(),
            ));
        }
        for (i, line) in self.polylines.iter().enumerate() {
            if line.vertices.is_empty() {
                return Err(ImagingError::InvalidAnnotation(format!(
                    "polyline {i} has no vertices"
                )));
            }
            if !(line.stroke_width.is_finite() && line.stroke_width >= 1.0) {
                return Err(ImagingError::InvalidAnnotation(format!(
                    "polyline {i} stroke width {} below 1 pixel",
                    line.stroke_width
                )));
            }
        }
        Ok(())
    }
}

pub fn load_annotation(path: impl AsRef<Path>) -> Result<Annotation, ImagingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ImagingError::FileNotFound(path.display().to_string())
        } else {
            ImagingError::Io {
                path: path.display().to_string(),
                source: e,
            }
        }
    })?;
    let ann: Annotation = serde_json::from_str(&text).map_err(|e| ImagingError::Malformed {
        format: "annotation JSON",
        detail: e.to_string(),
    })?;
    ann.validate()?;
    Ok(ann)
}

pub fn save_annotation(ann: &Annotation, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let path = path.as_ref();
    ann.validate()?;
    let text = serde_json::to_string_pretty(ann).expect("annotation serializes");
    fs::write(path, text).map_err(|e| ImagingError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Stamp a polyline onto a mask: a pixel is set when its lattice point lies
/// within `stroke_width / 2` of any segment (round caps included). A single
/// vertex stamps a disc.
pub fn draw_polyline(mask: &mut BinaryMask, vertices: &[[f64; 2]], stroke_width: f64) {
    let radius = stroke_width / 2.0;
    let r2 = radius * radius;
    let segments: Vec<([f64; 2], [f64; 2])> = if vertices.len() == 1 {
        vec![(vertices[0], vertices[0])]
    } else {
        vertices.windows(2).map(|w| (w[0], w[1])).collect()
    };
    for (a, b) in segments {
        let min_r = (a[0].min(b[0]) - radius).floor().max(0.0) as usize;
        let max_r = (a[0].max(b[0]) + radius).ceil().min(mask.height() as f64 - 1.0) as usize;
        let min_c = (a[1].min(b[1]) - radius).floor().max(0.0) as usize;
        let max_c = (a[1].max(b[1]) + radius).ceil().min(mask.width() as f64 - 1.0) as usize;
        if min_r > max_r || min_c > max_c {
            continue;
        }
        let (dr, dc) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dr * dr + dc * dc;
        for r in min_r..=max_r {
            for c in min_c..=max_c {
                let (pr, pc) = (r as f64, c as f64);
                let t = if len2 == 0.0 {
                    0.0
                } else {
                    (((pr - a[0]) * dr + (pc - a[1]) * dc) / len2).clamp(0.0, 1.0)
                };
                let (qr, qc) = (a[0] + t * dr, a[1] + t * dc);
                let d2 = (pr - qr) * (pr - qr) + (pc - qc) * (pc - qc);
                if d2 <= r2 {
                    mask.set(r, c, true);
                }
            }
        }
    }
}

/// Rasterize all polylines of an annotation onto a fresh mask.
pub fn rasterize_annotation(ann: &Annotation) -> Result<BinaryMask, ImagingError> {
    ann.validate()?;
    let mut mask = BinaryMask::zeros(ann.width, ann.height);
    for line in &ann.polylines {
        draw_polyline(&mut mask, &line.vertices, line.stroke_width);
    }
    Ok(mask)
}
