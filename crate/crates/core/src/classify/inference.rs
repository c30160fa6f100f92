//! Sliding-window inference: score every window, stitch the per-patch
//! scores into a per-pixel mean score map, and threshold it into a
//! detection mask.

use super::{ClassifyError, PatchScorer, PatchView};
use crate::imaging::{BinaryMask, GrayImage};
use crate::par;
use crate::patchset::PatchGeometry;

/// A window origin `(row, col)` paired with its patch score.
pub type GridScore = ((u32, u32), f64);

/// Per-pixel accumulated patch scores over a tile.
///
/// Entries are accumulated in sorted origin order regardless of the order
/// they were produced in, so the map is bitwise invariant under patch
/// evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    coverage: Vec<u32>,
}

impl ScoreMap {
    /// Build from `(origin, score)` pairs for `patch_size` windows.
    pub fn from_patch_scores(
        width: usize,
        height: usize,
        patch_size: usize,
        entries: &[((u32, u32), f64)],
    ) -> Self {
        let mut sorted: Vec<((u32, u32), f64)> = entries.to_vec();
        sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut sum = vec![0.0f64; width * height];
        let mut coverage = vec![0u32; width * height];
        for ((row, col), score) in sorted {
            for r in row as usize..row as usize + patch_size {
                let base = r * width;
                for c in col as usize..col as usize + patch_size {
                    sum[base + c] += score;
                    coverage[base + c] += 1;
                }
            }
        }
        Self {
            width,
            height,
            sum,
            coverage,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coverage_at(&self, row: usize, col: usize) -> u32 {
        self.coverage[row * self.width + col]
    }

    /// Mean score of the covering patches; `None` on uncovered pixels.
    pub fn mean_at(&self, row: usize, col: usize) -> Option<f64> {
        let idx = row * self.width + col;
        (self.coverage[idx] > 0).then(|| self.sum[idx] / f64::from(self.coverage[idx]))
    }

    /// Detection mask: mean score at or above `threshold` on covered pixels,
    /// clear on uncovered ones.
    pub fn to_mask(&self, threshold: f64) -> BinaryMask {
        let bits = self
            .sum
            .iter()
            .zip(&self.coverage)
            .map(|(&s, &c)| c > 0 && s / f64::from(c) >= threshold)
            .collect();
        BinaryMask::new(self.width, self.height, bits).expect("buffers sized from dimensions")
    }
}

/// Score every grid window of `img`, returning `(origin, score)` pairs in
/// row-major origin order.
pub fn score_grid(
    tile_id: &str,
    img: &GrayImage,
    scorer: &dyn PatchScorer,
    g: &PatchGeometry,
) -> Result<Vec<GridScore>, ClassifyError> {
    if img.width() < g.patch_size || img.height() < g.patch_size {
        return Err(ClassifyError::ImageSmallerThanPatch {
            width: img.width(),
            height: img.height(),
            patch: g.patch_size,
        });
    }
    let origins = g.origins(img.width(), img.height());
    par::try_map_slice(&origins, |&(row, col)| {
        let pixels = img.patch_pixels(row as usize, col as usize, g.patch_size);
        let view = PatchView {
            tile_id,
            origin: (row, col),
            pixels: &pixels,
        };
        Ok(((row, col), scorer.score(&view)?))
    })
}

/// Full sliding-window detection for one tile image.
pub fn sliding_inference(
    tile_id: &str,
    img: &GrayImage,
    scorer: &dyn PatchScorer,
    g: &PatchGeometry,
    threshold: f64,
) -> Result<(ScoreMap, BinaryMask), ClassifyError> {
    let entries = score_grid(tile_id, img, scorer, g)?;
    let map = ScoreMap::from_patch_scores(img.width(), img.height(), g.patch_size, &entries);
    let mask = map.to_mask(threshold);
    Ok((map, mask))
}
