//! Parametric tile renderer for the five lighting configurations of the
//! dark-field rig, plus the LED controller protocol in [`rig`].
//!
//! The shading model is deliberately simple: a textured background at
//! `albedo * texture * level_gain`, with crack pixels darkened by a contrast
//! factor that grows linearly with the height of the active LED level. That
//! monotone contrast encodes the observation that oblique light from a
//! higher source makes surface cracks stand out more. "All lights" renders
//! as the per-pixel mean of the four level fields, so its contrast sits
//! between level 1 and level 4.

pub mod rig;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{
    self, connected_components, draw_polyline, BinaryMask, CrackComponent, GrayImage, ImagingError,
};
use crate::{par, seeding};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid rig geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid tile spec: {0}")]
    InvalidSpec(String),
    #[error("could not place crack {index} with min separation {min_sep:.1}px after {attempts} attempts")]
    CrackPlacement {
        index: usize,
        min_sep: f64,
        attempts: usize,
    },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("invalid tile stack: {0}")]
    InvalidStack(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed stack metadata: {0}")]
    MalformedMeta(String),
}

/// Physical layout of the illumination frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigGeometry {
    pub tile_side_mm: f64,
    /// Heights of the four LED levels above the tile, strictly increasing.
    pub level_heights_mm: [f64; 4],
    /// LED count per level; the rig carries 189 LEDs in total.
    pub leds_per_level: [u32; 4],
    pub camera_height_mm: f64,
}

pub const TOTAL_LEDS: u32 = 189;

impl Default for RigGeometry {
    fn default() -> Self {
        Self {
            tile_side_mm: 200.0,
            level_heights_mm: [20.0, 40.0, 60.0, 80.0],
            leds_per_level: [47, 47, 48, 47],
            camera_height_mm: 60.0,
        }
    }
}

impl RigGeometry {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !self
            .level_heights_mm
            .windows(2)
            .all(|w| w[0].is_finite() && w[1].is_finite() && w[0] < w[1])
        {
            return Err(RenderError::InvalidGeometry(format!(
                "level heights must be strictly increasing, got {:?}",
                self.level_heights_mm
            )));
        }
        let total: u32 = self.leds_per_level.iter().sum();
        if total != TOTAL_LEDS {
            return Err(RenderError::InvalidGeometry(format!(
                "LED counts {:?} sum to {total}, expected {TOTAL_LEDS}",
                self.leds_per_level
            )));
        }
        if self.tile_side_mm <= 0.0 || self.camera_height_mm <= 0.0 {
            return Err(RenderError::InvalidGeometry(
                "tile side and camera height must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One of the five acquisition lighting configurations.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum LightingConfig {
    AllLights,
    OnlyLevel1,
    OnlyLevel2,
    OnlyLevel3,
    OnlyLevel4,
}

impl LightingConfig {
    pub const ALL: [LightingConfig; 5] = [
        LightingConfig::AllLights,
        LightingConfig::OnlyLevel1,
        LightingConfig::OnlyLevel2,
        LightingConfig::OnlyLevel3,
        LightingConfig::OnlyLevel4,
    ];

    /// Stable name used for file stems and report columns.
    pub fn name(&self) -> &'static str {
        match self {
            LightingConfig::AllLights => "all_lights",
            LightingConfig::OnlyLevel1 => "only_level1",
            LightingConfig::OnlyLevel2 => "only_level2",
            LightingConfig::OnlyLevel3 => "only_level3",
            LightingConfig::OnlyLevel4 => "only_level4",
        }
    }

    pub fn from_name(name: &str) -> Option<LightingConfig> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Zero-based LED level index for single-level configurations.
    pub fn level_index(&self) -> Option<usize> {
        match self {
            LightingConfig::AllLights => None,
            LightingConfig::OnlyLevel1 => Some(0),
            LightingConfig::OnlyLevel2 => Some(1),
            LightingConfig::OnlyLevel3 => Some(2),
            LightingConfig::OnlyLevel4 => Some(3),
        }
    }
}

impl std::fmt::Display for LightingConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Generation parameters for one synthetic tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileSpec {
    pub rng_seed: u64,
    pub width: usize,
    pub height: usize,
    pub crack_count: usize,
    /// Crack polyline length range in pixels.
    pub crack_length_px: (f64, f64),
    /// Stroke width range in pixels; widths jitter per segment.
    pub crack_width_px: (f64, f64),
    /// Per-step heading change scale in radians.
    pub waviness: f64,
    pub base_albedo: f64,
    /// Amplitude of the multiplicative background texture.
    pub texture_noise_amp: f64,
    /// Sigma of the additive per-pixel Gaussian noise.
    pub noise_sigma: f64,
    /// Crack contrast at the lowest and highest LED level.
    pub contrast_range: (f64, f64),
    /// Background gain per LED level.
    pub level_gains: [f64; 4],
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            width: 320,
            height: 240,
            crack_count: 2,
            crack_length_px: (60.0, 140.0),
            crack_width_px: (4.0, 8.0),
            waviness: 0.35,
            base_albedo: 0.62,
            texture_noise_amp: 0.08,
            noise_sigma: 0.02,
            contrast_range: (0.05, 0.45),
            level_gains: [1.0; 4],
        }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |msg: String| Err(RenderError::InvalidSpec(msg));
        if self.width < 8 || self.height < 8 {
            return bad(format!("dimensions {}x{} too small", self.width, self.height));
        }
        let (llo, lhi) = self.crack_length_px;
        if !(llo.is_finite() && lhi.is_finite() && 0.0 < llo && llo <= lhi) {
            return bad(format!("empty crack length range ({llo}, {lhi})"));
        }
        let (wlo, whi) = self.crack_width_px;
        if !(wlo.is_finite() && whi.is_finite() && wlo >= 1.0 && wlo <= whi) {
            return bad(format!(
                "crack width range ({wlo}, {whi}) must be nonempty with widths >= 1px"
            ));
        }
        if !(self.base_albedo > 0.0 && self.base_albedo <= 1.0) {
            return bad(format!("base albedo {} outside (0, 1]", self.base_albedo));
        }
        if !(self.texture_noise_amp >= 0.0 && self.texture_noise_amp < 1.0) {
            return bad(format!("texture amplitude {} outside [0, 1)", self.texture_noise_amp));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be nonnegative", self.noise_sigma));
        }
        let (clo, chi) = self.contrast_range;
        if !(0.0..=1.0).contains(&clo) || !(0.0..=1.0).contains(&chi) || clo > chi {
            return bad(format!("contrast range ({clo}, {chi}) outside 0 <= lo <= hi <= 1"));
        }
        if self.level_gains.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return bad(format!("level gains {:?} must be positive", self.level_gains));
        }
        if !self.waviness.is_finite() || self.waviness < 0.0 {
            return bad(format!("waviness {} must be nonnegative", self.waviness));
        }
        Ok(())
    }
}

/// One tile's co-registered images across the five lighting configurations
/// plus its ground truth.
#[derive(Debug, Clone)]
pub struct TileStack {
    pub tile_id: String,
    images: BTreeMap<LightingConfig, GrayImage>,
    pub truth_mask: BinaryMask,
    pub truth_components: Vec<CrackComponent>,
}

impl TileStack {
    pub fn new(
        tile_id: String,
        images: BTreeMap<LightingConfig, GrayImage>,
        truth_mask: BinaryMask,
    ) -> Result<Self, RenderError> {
        if images.len() != LightingConfig::ALL.len() {
            return Err(RenderError::InvalidStack(format!(
                "expected 5 images, got {}",
                images.len()
            )));
        }
        for (cfg, img) in &images {
            if img.width() != truth_mask.width() || img.height() != truth_mask.height() {
                return Err(RenderError::InvalidStack(format!(
                    "image {cfg} is {}x{} but mask is {}x{}",
                    img.width(),
                    img.height(),
                    truth_mask.width(),
                    truth_mask.height()
                )));
            }
        }
        let truth_components = connected_components(&truth_mask);
        Ok(Self {
            tile_id,
            images,
            truth_mask,
            truth_components,
        })
    }

    pub fn image(&self, cfg: LightingConfig) -> &GrayImage {
        &self.images[&cfg]
    }

    pub fn images(&self) -> &BTreeMap<LightingConfig, GrayImage> {
        &self.images
    }

    pub fn width(&self) -> usize {
        self.truth_mask.width()
    }

    pub fn height(&self) -> usize {
        self.truth_mask.height()
    }

    /// Stack at reduced resolution: box-filtered images, any-set pooled mask,
    /// recomputed components.
    pub fn downsampled(&self, factor: f64) -> Result<TileStack, RenderError> {
        let mut images = BTreeMap::new();
        for (&cfg, img) in &self.images {
            images.insert(cfg, imaging::downsample(img, factor)?);
        }
        let mask = imaging::downsample_mask(&self.truth_mask, factor)?;
        TileStack::new(self.tile_id.clone(), images, mask)
    }
}

// RNG stream tags per tile seed.
const STREAM_TEXTURE: u64 = 1;
const STREAM_CRACKS: u64 = 2;
const STREAM_NOISE_BASE: u64 = 16;

fn noise_stream(cfg: LightingConfig) -> u64 {
    let idx = match cfg {
        LightingConfig::AllLights => 0,
        LightingConfig::OnlyLevel1 => 1,
        LightingConfig::OnlyLevel2 => 2,
        LightingConfig::OnlyLevel3 => 3,
        LightingConfig::OnlyLevel4 => 4,
    };
    STREAM_NOISE_BASE + idx
}

/// Seed-determined tile content shared by all lighting configurations.
struct TileScene {
    mask: BinaryMask,
    /// Background reflectance per pixel: albedo times texture factor.
    reflectance: Vec<f64>,
}

fn build_scene(spec: &TileSpec) -> Result<TileScene, RenderError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);

    let mut texture_rng = seeding::rng(seeding::mix(spec.rng_seed, STREAM_TEXTURE));
    let reflectance: Vec<f64> = (0..w * h)
        .map(|_| {
            let u: f64 = texture_rng.random_range(-1.0..=1.0);
            spec.base_albedo * (1.0 + spec.texture_noise_amp * u)
        })
        .collect();

    let mut crack_rng = seeding::rng(seeding::mix(spec.rng_seed, STREAM_CRACKS));
    let mut mask = BinaryMask::zeros(w, h);
    let mut placed_pixels: Vec<(u32, u32)> = Vec::new();
    let min_sep = 2.0 * spec.crack_width_px.1;
    let margin = spec.crack_width_px.1.ceil() + 1.0;
    const MAX_ATTEMPTS: usize = 100;

    for index in 0..spec.crack_count {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let candidate = walk_crack(spec, &mut crack_rng, margin);
            let mut scratch = BinaryMask::zeros(w, h);
            for seg in candidate.windows(2) {
                draw_polyline(&mut scratch, &[seg[0].0, seg[1].0], seg[0].1);
            }
            let mut pixels: Vec<(u32, u32)> = Vec::new();
            for r in 0..h {
                for c in 0..w {
                    if scratch.get(r, c) {
                        pixels.push((r as u32, c as u32));
                    }
                }
            }
            if pixels.is_empty() {
                continue;
            }
            if min_distance_ok(&pixels, &placed_pixels, min_sep) {
                for &(r, c) in &pixels {
                    mask.set(r as usize, c as usize, true);
                }
                placed_pixels.extend_from_slice(&pixels);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(RenderError::CrackPlacement {
                index,
                min_sep,
                attempts: MAX_ATTEMPTS,
            });
        }
    }

    Ok(TileScene { mask, reflectance })
}

/// Random-walk polyline: vertices paired with the width of the segment that
/// starts there.
fn walk_crack(
    spec: &TileSpec,
    rng: &mut rand_chacha::ChaCha8Rng,
    margin: f64,
) -> Vec<([f64; 2], f64)> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let row_lo = margin;
    let row_hi = (h - 1.0 - margin).max(row_lo);
    let col_lo = margin;
    let col_hi = (w - 1.0 - margin).max(col_lo);

    let length = rng.random_range(spec.crack_length_px.0..=spec.crack_length_px.1);
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut row = rng.random_range(row_lo..=row_hi);
    let mut col = rng.random_range(col_lo..=col_hi);

    const STEP: f64 = 4.0;
    let steps = (length / STEP).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let width = rng.random_range(spec.crack_width_px.0..=spec.crack_width_px.1);
        out.push(([row, col], width));
        let turn: f64 = rng.sample(StandardNormal);
        heading += spec.waviness * turn;
        let mut next_row = row + STEP * heading.sin();
        let mut next_col = col + STEP * heading.cos();
        // Bounce off the margin box.
        if next_row < row_lo || next_row > row_hi {
            heading = -heading;
            next_row = (row + STEP * heading.sin()).clamp(row_lo, row_hi);
        }
        if next_col < col_lo || next_col > col_hi {
            heading = std::f64::consts::PI - heading;
            next_col = (col + STEP * heading.cos()).clamp(col_lo, col_hi);
        }
        row = next_row;
        col = next_col;
    }
    let width = rng.random_range(spec.crack_width_px.0..=spec.crack_width_px.1);
    out.push(([row, col], width));
    out
}

fn min_distance_ok(candidate: &[(u32, u32)], existing: &[(u32, u32)], min_sep: f64) -> bool {
    if existing.is_empty() {
        return true;
    }
    let sep2 = min_sep * min_sep;
    for &(r, c) in candidate {
        for &(er, ec) in existing {
            let dr = f64::from(r) - f64::from(er);
            let dc = f64::from(c) - f64::from(ec);
            if dr * dr + dc * dc < sep2 {
                return false;
            }
        }
    }
    true
}

/// Crack contrast for the LED level at height `h`: linear between the
/// configured endpoints from the lowest to the highest level.
fn level_contrast(spec: &TileSpec, geom: &RigGeometry, level: usize) -> f64 {
    let (c_min, c_max) = spec.contrast_range;
    let h1 = geom.level_heights_mm[0];
    let h4 = geom.level_heights_mm[3];
    let h = geom.level_heights_mm[level];
    c_min + (c_max - c_min) * (h - h1) / (h4 - h1)
}

/// Noise-free field for one level: reflectance scaled by the level gain,
/// crack pixels darkened by the level contrast.
fn level_field(scene: &TileScene, spec: &TileSpec, geom: &RigGeometry, level: usize) -> Vec<f64> {
    let contrast = level_contrast(spec, geom, level);
    let gain = spec.level_gains[level];
    scene
        .reflectance
        .iter()
        .zip(scene.mask.bits())
        .map(|(&refl, &is_crack)| {
            let mut v = refl * gain;
            if is_crack {
                v *= 1.0 - contrast;
            }
            v
        })
        .collect()
}

fn config_field(scene: &TileScene, spec: &TileSpec, geom: &RigGeometry, cfg: LightingConfig) -> Vec<f64> {
    match cfg.level_index() {
        Some(level) => level_field(scene, spec, geom, level),
        None => {
            // All lights: per-pixel mean of the four level fields.
            let fields: Vec<Vec<f64>> = (0..4).map(|l| level_field(scene, spec, geom, l)).collect();
            (0..scene.reflectance.len())
                .map(|i| (fields[0][i] + fields[1][i] + fields[2][i] + fields[3][i]) / 4.0)
                .collect()
        }
    }
}

fn shade(field: &[f64], spec: &TileSpec, cfg: LightingConfig) -> GrayImage {
    let mut rng = seeding::rng(seeding::mix(spec.rng_seed, noise_stream(cfg)));
    let data: Vec<f32> = field
        .iter()
        .map(|&v| {
            let n: f64 = rng.sample(StandardNormal);
            (v + spec.noise_sigma * n).clamp(0.0, 1.0) as f32
        })
        .collect();
    GrayImage::new(spec.width, spec.height, data).expect("shaded values clamped to [0,1]")
}

/// Render one lighting configuration of a tile.
///
/// Deterministic in `(spec.rng_seed, cfg)`; the truth mask depends on the
/// seed only, so all five configurations share identical crack geometry.
pub fn render_tile(
    spec: &TileSpec,
    geom: &RigGeometry,
    cfg: LightingConfig,
) -> Result<(GrayImage, BinaryMask), RenderError> {
    geom.validate()?;
    let scene = build_scene(spec)?;
    let field = config_field(&scene, spec, geom, cfg);
    Ok((shade(&field, spec, cfg), scene.mask))
}

/// Render the full five-configuration stack for one tile.
pub fn render_stack(
    tile_id: &str,
    spec: &TileSpec,
    geom: &RigGeometry,
) -> Result<TileStack, RenderError> {
    geom.validate()?;
    let scene = build_scene(spec)?;
    let shaded = par::map_slice(&LightingConfig::ALL, |&cfg| {
        let field = config_field(&scene, spec, geom, cfg);
        (cfg, shade(&field, spec, cfg))
    });
    let images: BTreeMap<LightingConfig, GrayImage> = shaded.into_iter().collect();
    TileStack::new(tile_id.to_string(), images, scene.mask)
}

#[derive(Serialize, Deserialize)]
struct StackMeta {
    tile_id: String,
    spec: TileSpec,
    geometry: RigGeometry,
}

/// Persist a stack as `<dir>/<config>.pgm`, `<dir>/truth.pgm`, and
/// `<dir>/meta.json`.
pub fn save_stack(
    stack: &TileStack,
    spec: &TileSpec,
    geom: &RigGeometry,
    dir: impl AsRef<Path>,
) -> Result<(), RenderError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| RenderError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    for (&cfg, img) in stack.images() {
        imaging::save_image(img, dir.join(format!("{}.pgm", cfg.name())))?;
    }
    imaging::save_mask(&stack.truth_mask, dir.join("truth.pgm"))?;
    let meta = StackMeta {
        tile_id: stack.tile_id.clone(),
        spec: spec.clone(),
        geometry: geom.clone(),
    };
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta).expect("meta serializes")).map_err(
        |e| RenderError::Io {
            path: path.display().to_string(),
            source: e,
        },
    )?;
    Ok(())
}

/// Load a stack persisted by [`save_stack`]; returns the stack with the spec
/// and geometry echoed from its metadata.
pub fn load_stack(dir: impl AsRef<Path>) -> Result<(TileStack, TileSpec, RigGeometry), RenderError> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| RenderError::Io {
        path: meta_path.display().to_string(),
        source: e,
    })?;
    let meta: StackMeta =
        serde_json::from_str(&meta_text).map_err(|e| RenderError::MalformedMeta(e.to_string()))?;
    let mut images = BTreeMap::new();
    for cfg in LightingConfig::ALL {
        let img = imaging::load_image(dir.join(format!("{}.pgm", cfg.name())))?;
        images.insert(cfg, img);
    }
    let mask = imaging::load_mask(dir.join("truth.pgm"))?;
    let stack = TileStack::new(meta.tile_id, images, mask)?;
    Ok((stack, meta.spec, meta.geometry))
}
