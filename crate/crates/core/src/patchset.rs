//! Sliding-window patch extraction, crack-proportion labeling, per-image
//! class balancing by seeded under-sampling, and k-fold dataset plans.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::illumsim::{LightingConfig, TileStack};
use crate::imaging::{BinaryMask, GrayImage};
use crate::{par, seeding};

use rand::Rng;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("invalid patch geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid label thresholds: low {low} / high {high}")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("empty patch (m*n = 0)")]
    EmptyPatch,
    #[error("patch window ({top},{left}) size {m}x{n} exceeds mask {width}x{height}")]
    WindowOutOfBounds {
        top: usize,
        left: usize,
        m: usize,
        n: usize,
        width: usize,
        height: usize,
    },
    #[error("image {img_w}x{img_h} and mask {mask_w}x{mask_h} dimensions differ")]
    ImageMaskMismatch {
        img_w: usize,
        img_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
    #[error("image {width}x{height} smaller than patch size {patch}")]
    ImageSmallerThanPatch {
        width: usize,
        height: usize,
        patch: usize,
    },
    #[error("fold count {k} must be at least 2")]
    TooFewFolds { k: usize },
    #[error("{tiles} tiles cannot fill {k} folds")]
    TooFewTiles { tiles: usize, k: usize },
    #[error("duplicate tile id '{0}'")]
    DuplicateTileId(String),
    #[error("no stack for tile id '{0}'")]
    MissingStack(String),
    #[error("fold index {fold} out of range for {k} folds")]
    UnknownFold { fold: usize, k: usize },
}

/// Square sliding-window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub patch_size: usize,
    pub stride: usize,
}

/// Default window for images downsampled near VGA resolution.
pub const LOW_RES_PATCH: PatchGeometry = PatchGeometry {
    patch_size: 50,
    stride: 10,
};

/// Default window for full-resolution images.
pub const HIGH_RES_PATCH: PatchGeometry = PatchGeometry {
    patch_size: 299,
    stride: 60,
};

impl PatchGeometry {
    pub fn new(patch_size: usize, stride: usize) -> Result<Self, PatchError> {
        if patch_size == 0 {
            return Err(PatchError::InvalidGeometry("patch size must be >= 1".into()));
        }
        if stride == 0 {
            return Err(PatchError::InvalidGeometry("stride must be >= 1".into()));
        }
        if stride > patch_size {
            log::warn!(
                "stride {stride} exceeds patch size {patch_size}; windows will leave gaps"
            );
        }
        Ok(Self { patch_size, stride })
    }

    /// Grid origins `(row, col)` of every full window inside `width`x`height`,
    /// in row-major order. Windows that would overrun the image are skipped
    /// rather than padded.
    pub fn origins(&self, width: usize, height: usize) -> Vec<(u32, u32)> {
        let s = self.patch_size;
        if width < s || height < s {
            return Vec::new();
        }
        let rows = (height - s) / self.stride + 1;
        let cols = (width - s) / self.stride + 1;
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                out.push(((r * self.stride) as u32, (c * self.stride) as u32));
            }
        }
        out
    }
}

/// Crack-proportion thresholds splitting negative / ambiguous / positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for LabelThresholds {
    fn default() -> Self {
        Self { low: 0.1, high: 0.2 }
    }
}

impl LabelThresholds {
    pub fn new(low: f64, high: f64) -> Result<Self, PatchError> {
        if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low > high {
            return Err(PatchError::InvalidThresholds { low, high });
        }
        Ok(Self { low, high })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchLabel {
    Negative,
    Ambiguous,
    Positive,
}

/// An extracted patch with its grid position, crack proportion, and label.
#[derive(Debug, Clone)]
pub struct LabeledPatch {
    pub tile_id: String,
    pub config: LightingConfig,
    /// `(row, col)` of the top-left pixel.
    pub origin: (u32, u32),
    pub p: f64,
    pub label: PatchLabel,
    pub pixels: Vec<f32>,
}

/// Proportion of crack pixels in the `m`x`n` mask window at `(top, left)`:
/// set-pixel count over `m*n`, a single exact division.
pub fn crack_proportion(
    mask: &BinaryMask,
    top: usize,
    left: usize,
    m: usize,
    n: usize,
) -> Result<f64, PatchError> {
    if m == 0 || n == 0 {
        return Err(PatchError::EmptyPatch);
    }
    if top + m > mask.height() || left + n > mask.width() {
        return Err(PatchError::WindowOutOfBounds {
            top,
            left,
            m,
            n,
            width: mask.width(),
            height: mask.height(),
        });
    }
    let count = mask.count_ones_in(top, left, m, n);
    Ok(count as f64 / (m * n) as f64)
}

/// Label from a crack proportion: negative below `low`, ambiguous in
/// `[low, high)`, positive at or above `high`.
pub fn label_patch(p: f64, t: &LabelThresholds) -> PatchLabel {
    if p < t.low {
        PatchLabel::Negative
    } else if p < t.high {
        PatchLabel::Ambiguous
    } else {
        PatchLabel::Positive
    }
}

/// Extract and label every full sliding window of `img` against `mask`.
///
/// The output count is `(floor((H-s)/stride)+1) * (floor((W-s)/stride)+1)`
/// in row-major origin order.
pub fn extract_patches(
    tile_id: &str,
    config: LightingConfig,
    img: &GrayImage,
    mask: &BinaryMask,
    g: &PatchGeometry,
    t: &LabelThresholds,
) -> Result<Vec<LabeledPatch>, PatchError> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(PatchError::ImageMaskMismatch {
            img_w: img.width(),
            img_h: img.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }
    if img.width() < g.patch_size || img.height() < g.patch_size {
        return Err(PatchError::ImageSmallerThanPatch {
            width: img.width(),
            height: img.height(),
            patch: g.patch_size,
        });
    }
    let origins = g.origins(img.width(), img.height());
    let patches = par::map_slice(&origins, |&(row, col)| {
        let p = crack_proportion(
            mask,
            row as usize,
            col as usize,
            g.patch_size,
            g.patch_size,
        )
        .expect("origin grid stays in bounds");
        LabeledPatch {
            tile_id: tile_id.to_string(),
            config,
            origin: (row, col),
            p,
            label: label_patch(p, t),
            pixels: img.patch_pixels(row as usize, col as usize, g.patch_size),
        }
    });
    Ok(patches)
}

/// Why a balanced set came out degenerate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BalanceWarning {
    /// No positive patches; the balanced set is empty.
    NoPositives,
    /// Fewer negatives than positives; all negatives were kept.
    DegenerateImbalance { positives: usize, negatives: usize },
}

#[derive(Debug)]
pub struct BalanceOutcome {
    pub patches: Vec<LabeledPatch>,
    pub warning: Option<BalanceWarning>,
}

/// Balance by random under-sampling: keep every positive patch and a seeded
/// uniform sample (without replacement) of equally many negative patches.
/// Ambiguous patches are dropped.
pub fn balance(patches: Vec<LabeledPatch>, seed: u64) -> BalanceOutcome {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for patch in patches {
        match patch.label {
            PatchLabel::Positive => positives.push(patch),
            PatchLabel::Negative => negatives.push(patch),
            PatchLabel::Ambiguous => {}
        }
    }
    if positives.is_empty() {
        log::warn!("balance: no positive patches, output is empty");
        return BalanceOutcome {
            patches: Vec::new(),
            warning: Some(BalanceWarning::NoPositives),
        };
    }
    if negatives.len() < positives.len() {
        log::warn!(
            "balance: only {} negatives for {} positives, keeping all",
            negatives.len(),
            positives.len()
        );
        let warning = Some(BalanceWarning::DegenerateImbalance {
            positives: positives.len(),
            negatives: negatives.len(),
        });
        let mut out = positives;
        out.append(&mut negatives);
        return BalanceOutcome {
            patches: out,
            warning,
        };
    }

    // Partial Fisher-Yates over negative indices; the selection is then
    // emitted in original input order.
    let mut rng = seeding::rng(seed);
    let n = negatives.len();
    let k = positives.len();
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    let mut selected: Vec<usize> = indices[..k].to_vec();
    selected.sort_unstable();

    let mut flags = vec![false; n];
    for &i in &selected {
        flags[i] = true;
    }
    let mut out = positives;
    out.extend(
        negatives
            .into_iter()
            .zip(flags)
            .filter_map(|(patch, keep)| keep.then_some(patch)),
    );
    BalanceOutcome {
        patches: out,
        warning: None,
    }
}

/// Deterministic assignment of tiles to train/test roles for each fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffle tiles with the seed, then cut contiguous near-equal test chunks
/// (sizes differ by at most one); train sets are the complements.
pub fn make_folds(tile_ids: &[String], k: usize, seed: u64) -> Result<FoldPlan, PatchError> {
    if k < 2 {
        return Err(PatchError::TooFewFolds { k });
    }
    if tile_ids.len() < k {
        return Err(PatchError::TooFewTiles {
            tiles: tile_ids.len(),
            k,
        });
    }
    {
        let mut seen = std::collections::HashSet::new();
        for id in tile_ids {
            if !seen.insert(id) {
                return Err(PatchError::DuplicateTileId(id.clone()));
            }
        }
    }

    let mut shuffled: Vec<String> = tile_ids.to_vec();
    let mut rng = seeding::rng(seeding::derive_named(seed, &["folds"]));
    for i in (1..shuffled.len()).rev() {
        let j = rng.random_range(0..=i);
        shuffled.swap(i, j);
    }

    let n = shuffled.len();
    let base = n / k;
    let rem = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < rem);
        let test: Vec<String> = shuffled[start..start + size].to_vec();
        let train: Vec<String> = shuffled[..start]
            .iter()
            .chain(&shuffled[start + size..])
            .cloned()
            .collect();
        folds.push(Fold { train, test });
        start += size;
    }
    Ok(FoldPlan { k, seed, folds })
}

/// Train / validation / test patch sets for one fold and lighting
/// configuration. Train and validation are balanced; test keeps every
/// positive and negative patch.
#[derive(Debug)]
pub struct PhaseSets {
    pub train: Vec<LabeledPatch>,
    pub validation: Vec<LabeledPatch>,
    pub test: Vec<LabeledPatch>,
    pub warnings: Vec<(String, BalanceWarning)>,
}

/// Assemble phase sets for `fold_idx`: balanced train patches from the train
/// tiles, balanced validation and imbalanced test patches from the test
/// tiles. Balancing is per image with an RNG stream named by
/// `(seed, tile_id, phase)`, so adding tiles never reshuffles existing
/// selections and validation draws independently from train balancing.
pub fn build_phase_sets(
    stacks: &[TileStack],
    plan: &FoldPlan,
    fold_idx: usize,
    cfg: LightingConfig,
    g: &PatchGeometry,
    t: &LabelThresholds,
    seed: u64,
) -> Result<PhaseSets, PatchError> {
    let fold = plan.folds.get(fold_idx).ok_or(PatchError::UnknownFold {
        fold: fold_idx,
        k: plan.k,
    })?;
    let by_id: std::collections::HashMap<&str, &TileStack> =
        stacks.iter().map(|s| (s.tile_id.as_str(), s)).collect();

    let extract_for = |tile_id: &String| -> Result<Vec<LabeledPatch>, PatchError> {
        let stack = by_id
            .get(tile_id.as_str())
            .ok_or_else(|| PatchError::MissingStack(tile_id.clone()))?;
        extract_patches(tile_id, cfg, stack.image(cfg), &stack.truth_mask, g, t)
    };

    let mut warnings = Vec::new();
    let mut train = Vec::new();
    for tile_id in &fold.train {
        let outcome = balance(
            extract_for(tile_id)?,
            seeding::derive_named(seed, &[tile_id, "train"]),
        );
        if let Some(w) = outcome.warning {
            warnings.push((tile_id.clone(), w));
        }
        train.extend(outcome.patches);
    }

    let mut validation = Vec::new();
    let mut test = Vec::new();
    for tile_id in &fold.test {
        let patches = extract_for(tile_id)?;
        test.extend(
            patches
                .iter()
                .filter(|p| p.label != PatchLabel::Ambiguous)
                .cloned(),
        );
        let outcome = balance(
            patches,
            seeding::derive_named(seed, &[tile_id, "validation"]),
        );
        if let Some(w) = outcome.warning {
            warnings.push((tile_id.clone(), w));
        }
        validation.extend(outcome.patches);
    }

    if train.is_empty() {
        log::warn!("fold {fold_idx}: empty balanced train set");
    }
    Ok(PhaseSets {
        train,
        validation,
        test,
        warnings,
    })
}

/// Manifest describing an extracted dataset; patch pixels are stored as
/// `(tile_id, origin)` references resolved lazily against the tile images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub geometry: PatchGeometry,
    pub thresholds: LabelThresholds,
    pub seed: u64,
    /// How patch pixels are stored. `references` means records carry grid
    /// origins only.
    pub storage: String,
    pub tiles: Vec<TilePatchCounts>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TilePatchCounts {
    pub tile_id: String,
    pub negative: usize,
    pub ambiguous: usize,
    pub positive: usize,
}

/// One archived patch reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub origin: (u32, u32),
    pub p: f64,
    pub label: PatchLabel,
}

impl PatchRecord {
    pub fn from_patch(patch: &LabeledPatch) -> Self {
        Self {
            origin: patch.origin,
            p: patch.p,
            label: patch.label,
        }
    }
}
