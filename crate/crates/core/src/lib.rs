//! Core library for a desk-scale crack inspection pipeline.
//!
//! The pipeline stages are:
//!
//! 1. **imaging** – grayscale rasters, binary crack masks, PGM/PNG I/O,
//!    box-filter downsampling, 8-connected component extraction, and
//!    annotation rasterization.
//! 2. **illumsim** – parametric renderer producing co-registered tile images
//!    under five lighting configurations (four LED levels plus all lights),
//!    and the line-oriented LED rig control protocol.
//! 3. **patchset** – sliding-window patch extraction, crack-proportion
//!    labeling, per-image class balancing, and deterministic k-fold plans.
//! 4. **classify** – logistic baseline patch classifier, three loss
//!    functions with analytic gradients, SGD training, sliding-window
//!    inference with score-map stitching, and external prediction ingestion.
//! 5. **evalmetrics** – patch-level accuracy/MCC, crack presence accuracy,
//!    greedy overlap-based crack association, and the weighted crack count
//!    F1 score, aggregated per fold.
//!
//! Data-parallel loops dispatch through [`par`], which uses rayon when the
//! `parallel` feature (default) is enabled and falls back to sequential
//! iteration otherwise. Results are bitwise identical either way.

pub mod classify;
pub mod evalmetrics;
pub mod illumsim;
pub mod imaging;
pub mod par;
pub mod patchset;
pub mod seeding;

pub use imaging::{BinaryMask, CrackComponent, GrayImage};
pub use illumsim::{LightingConfig, RigGeometry, TileSpec, TileStack};
pub use patchset::{FoldPlan, LabelThresholds, LabeledPatch, PatchGeometry, PatchLabel};
