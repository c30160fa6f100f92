//! Run configuration: one JSON file drives every pipeline stage.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crackscan_core::classify::{LossKind, MfeVariant};
use crackscan_core::illumsim::{LightingConfig, RigGeometry, TileSpec};
use crackscan_core::patchset::{LabelThresholds, PatchGeometry, HIGH_RES_PATCH, LOW_RES_PATCH};
use crackscan_core::seeding;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub global_seed: u64,
    pub tile_count: usize,
    pub k_folds: usize,
    /// Lighting configurations processed by extract/train/infer/eval.
    pub lighting: Vec<LightingConfig>,
    /// Mean-score threshold turning score maps into detection masks.
    pub score_threshold: f64,
    pub tile: TileTemplate,
    pub rig: RigGeometry,
    pub resolutions: Resolutions,
    pub thresholds: LabelThresholds,
    pub train: TrainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            global_seed: 0,
            tile_count: 8,
            k_folds: 10,
            lighting: LightingConfig::ALL.to_vec(),
            score_threshold: 0.5,
            tile: TileTemplate::default(),
            rig: RigGeometry::default(),
            resolutions: Resolutions::default(),
            thresholds: LabelThresholds::default(),
            train: TrainSettings::default(),
        }
    }
}

/// Per-tile generation template; each tile gets a derived seed and a crack
/// count sampled from the inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileTemplate {
    pub width: usize,
    pub height: usize,
    pub crack_count: (usize, usize),
    pub crack_length_px: (f64, f64),
    pub crack_width_px: (f64, f64),
    pub waviness: f64,
    pub base_albedo: f64,
    pub texture_noise_amp: f64,
    pub noise_sigma: f64,
    pub contrast_range: (f64, f64),
    pub level_gains: [f64; 4],
}

impl Default for TileTemplate {
    fn default() -> Self {
        let spec = TileSpec::default();
        Self {
            width: spec.width,
            height: spec.height,
            crack_count: (1, 3),
            crack_length_px: spec.crack_length_px,
            crack_width_px: spec.crack_width_px,
            waviness: spec.waviness,
            base_albedo: spec.base_albedo,
            texture_noise_amp: spec.texture_noise_amp,
            noise_sigma: spec.noise_sigma,
            contrast_range: spec.contrast_range,
            level_gains: spec.level_gains,
        }
    }
}

impl TileTemplate {
    /// Concrete spec for one tile seed; the crack count draws from its own
    /// stream so neighboring settings stay independent.
    pub fn spec_for(&self, tile_seed: u64) -> TileSpec {
        let (lo, hi) = self.crack_count;
        let crack_count = if lo == hi {
            lo
        } else {
            seeding::uniform_usize(seeding::mix(tile_seed, 0xC0DE), lo, hi)
        };
        TileSpec {
            rng_seed: tile_seed,
            width: self.width,
            height: self.height,
            crack_count,
            crack_length_px: self.crack_length_px,
            crack_width_px: self.crack_width_px,
            waviness: self.waviness,
            base_albedo: self.base_albedo,
            texture_noise_amp: self.texture_noise_amp,
            noise_sigma: self.noise_sigma,
            contrast_range: self.contrast_range,
            level_gains: self.level_gains,
        }
    }
}

/// Spatial resolution regime: downsample factor applied to the rendered
/// tiles plus the sliding-window geometry used at that scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub factor: f64,
    pub patch: PatchGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolutions {
    pub low: Regime,
    pub high: Regime,
}

impl Default for Resolutions {
    fn default() -> Self {
        Self {
            low: Regime {
                factor: 0.1667,
                patch: LOW_RES_PATCH,
            },
            high: Regime {
                factor: 1.0,
                patch: HIGH_RES_PATCH,
            },
        }
    }
}

/// Resolution regime selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Resolution {
    Low,
    High,
}

impl Resolution {
    pub fn name(&self) -> &'static str {
        match self {
            Resolution::Low => "low",
            Resolution::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    Ce,
    Mfe,
    Focal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub loss: LossName,
    pub focal_gamma: f64,
    pub mfe_variant: MfeVariant,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub balanced_input: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            loss: LossName::Ce,
            focal_gamma: 2.0,
            mfe_variant: MfeVariant::Squared,
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 50,
            balanced_input: true,
        }
    }
}

impl TrainSettings {
    pub fn loss_kind(&self, name: LossName) -> LossKind {
        match name {
            LossName::Ce => LossKind::CrossEntropy,
            LossName::Mfe => LossKind::MeanFalseError {
                variant: self.mfe_variant,
            },
            LossName::Focal => LossKind::Focal {
                gamma: self.focal_gamma,
            },
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, CliError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CliError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn regime(&self, res: Resolution) -> Regime {
        match res {
            Resolution::Low => self.resolutions.low,
            Resolution::High => self.resolutions.high,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.tile_count == 0 {
            return bad("empty experiment: tile_count is 0".into());
        }
        if self.k_folds < 2 {
            return bad(format!("k_folds {} must be at least 2", self.k_folds));
        }
        if self.tile_count < self.k_folds {
            return bad(format!(
                "tile_count {} smaller than k_folds {}",
                self.tile_count, self.k_folds
            ));
        }
        if self.lighting.is_empty() {
            return bad("lighting selection is empty".into());
        }
        {
            let mut seen = std::collections::BTreeSet::new();
            for cfg in &self.lighting {
                if !seen.insert(*cfg) {
                    return bad(format!("duplicate lighting config {cfg}"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return bad(format!(
                "score_threshold {} outside [0, 1]",
                self.score_threshold
            ));
        }
        self.rig
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.tile
            .spec_for(0)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        LabelThresholds::new(self.thresholds.low, self.thresholds.high)
            .map_err(|e| CliError::Config(e.to_string()))?;
        for (name, regime) in [("low", self.resolutions.low), ("high", self.resolutions.high)] {
            if !(regime.factor > 0.0 && regime.factor <= 1.0) {
                return bad(format!(
                    "{name} resolution factor {} outside (0, 1]",
                    regime.factor
                ));
            }
            PatchGeometry::new(regime.patch.patch_size, regime.patch.stride)
                .map_err(|e| CliError::Config(format!("{name} patch geometry: {e}")))?;
        }
        if !self.train.learning_rate.is_finite() || self.train.learning_rate <= 0.0 {
            return bad(format!(
                "learning_rate {} must be positive",
                self.train.learning_rate
            ));
        }
        if self.train.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.train.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !self.train.focal_gamma.is_finite() || self.train.focal_gamma < 0.0 {
            return bad(format!(
                "focal_gamma {} must be nonnegative",
                self.train.focal_gamma
            ));
        }
        Ok(())
    }

    /// Tile ids in synthesis order.
    pub fn tile_ids(&self) -> Vec<String> {
        (0..self.tile_count)
            .map(|i| format!("tile_{i:04}"))
            .collect()
    }

    /// Derived seed for one tile.
    pub fn tile_seed(&self, tile_id: &str) -> u64 {
        seeding::derive_named(self.global_seed, &["tile", tile_id])
    }
}
