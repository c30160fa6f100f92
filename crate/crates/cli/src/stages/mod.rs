//! Pipeline stages chaining synthesis, extraction, fold planning, training,
//! inference, evaluation, and reporting over one output directory, with
//! ledger-checked reproducibility.

mod eval;
mod extract;
mod infer;
mod report;
mod rig;
mod split;
mod synth;
mod train;

pub use eval::cmd_eval;
pub use extract::cmd_extract;
pub use infer::{cmd_infer, InferOptions};
pub use report::cmd_report;
pub use rig::{cmd_rig, RigOutcome};
pub use split::cmd_split;
pub use synth::cmd_synth;
pub use train::{cmd_train, TrainOptions};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crackscan_core::classify::LossKind;
use crackscan_core::illumsim::{self, LightingConfig, TileStack};
use crackscan_core::par;
use crackscan_core::patchset::FoldPlan;

use crate::config::{Resolution, RunConfig};
use crate::error::CliError;
use crate::ledger::{digest_file, digest_tree, Ledger, StageEntry};

/// Everything a stage needs: validated config and the output root.
pub struct Ctx {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(config: RunConfig, out: PathBuf) -> Result<Self, CliError> {
        config.validate()?;
        fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        Ok(Self { config, out })
    }

    pub fn tiles_dir(&self) -> PathBuf {
        self.out.join("tiles")
    }

    pub fn tiles_manifest(&self) -> PathBuf {
        self.tiles_dir().join("manifest.json")
    }

    pub fn patches_dir(&self, res: Resolution) -> PathBuf {
        self.out.join("patches").join(res.name())
    }

    pub fn patch_records(&self, res: Resolution, cfg: LightingConfig, tile_id: &str) -> PathBuf {
        self.patches_dir(res)
            .join(cfg.name())
            .join(format!("{tile_id}.json"))
    }

    pub fn folds_file(&self) -> PathBuf {
        self.out.join("folds.json")
    }

    pub fn models_dir(&self, res: Resolution, cfg: LightingConfig, model: &str) -> PathBuf {
        self.out
            .join("models")
            .join(res.name())
            .join(cfg.name())
            .join(model)
    }

    pub fn infer_root(&self, res: Resolution) -> PathBuf {
        self.out.join("infer").join(res.name())
    }

    pub fn infer_dir(
        &self,
        res: Resolution,
        cfg: LightingConfig,
        model: &str,
        fold: usize,
    ) -> PathBuf {
        self.infer_root(res)
            .join(cfg.name())
            .join(model)
            .join(format!("fold_{fold}"))
    }

    pub fn report_dir(&self, res: Resolution) -> PathBuf {
        self.out.join("report").join(res.name())
    }
}

/// Manifest of the synthesized tile set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TilesManifest {
    pub tile_ids: Vec<String>,
    pub width: usize,
    pub height: usize,
}

impl TilesManifest {
    pub fn load(ctx: &Ctx) -> Result<TilesManifest, CliError> {
        let path = ctx.tiles_manifest();
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("malformed tiles manifest: {e}")))
    }
}

/// Model directory name for a training regime.
pub fn model_name(loss: &LossKind, balanced: bool) -> String {
    format!(
        "{}_{}",
        loss.name(),
        if balanced { "balanced" } else { "imbalanced" }
    )
}

/// Digest of a path that may be a file, a directory, or absent.
pub(crate) fn digest_path(path: &Path) -> Result<String, CliError> {
    if path.is_file() {
        digest_file(path)
    } else {
        digest_tree(path)
    }
}

/// Require a completed, fresh predecessor stage; returns its recorded output
/// digest for input chaining.
pub(crate) fn require_stage(
    ledger: &Ledger,
    key: &str,
    output_path: &Path,
) -> Result<String, CliError> {
    let entry = ledger
        .get(key)
        .ok_or_else(|| CliError::MissingStage(key.to_string()))?;
    let current = digest_path(output_path)?;
    if current != entry.output_digest {
        return Err(CliError::StaleStage(key.to_string()));
    }
    Ok(entry.output_digest.clone())
}

/// True when the stage's ledger entry matches the digests and its outputs
/// are untouched; such a stage is skipped.
pub(crate) fn up_to_date(
    ledger: &Ledger,
    key: &str,
    config_digest: &str,
    input_digest: &str,
    output_path: &Path,
) -> Result<bool, CliError> {
    match ledger.get(key) {
        Some(entry)
            if entry.config_digest == config_digest && entry.input_digest == input_digest =>
        {
            Ok(digest_path(output_path)? == entry.output_digest)
        }
        _ => Ok(false),
    }
}

/// Record a finished stage.
pub(crate) fn record_stage(
    ledger: &mut Ledger,
    ctx: &Ctx,
    key: &str,
    config_digest: String,
    input_digest: String,
    output_path: &Path,
) -> Result<(), CliError> {
    let output_digest = digest_path(output_path)?;
    ledger.put(
        key,
        StageEntry {
            config_digest,
            input_digest,
            output_digest,
        },
    );
    ledger.save(&ctx.out)
}

/// Remove and recreate a stage's output directory so leftovers never leak
/// into its digest.
pub(crate) fn clean_dir(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| CliError::io(path, e))?;
    }
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Load every tile stack at base resolution, in manifest order.
pub(crate) fn load_stacks(ctx: &Ctx) -> Result<Vec<TileStack>, CliError> {
    let manifest = TilesManifest::load(ctx)?;
    let dirs: Vec<PathBuf> = manifest
        .tile_ids
        .iter()
        .map(|id| ctx.tiles_dir().join(id))
        .collect();
    let stacks = par::try_map_slice(&dirs, |dir| {
        illumsim::load_stack(dir).map(|(stack, _, _)| stack)
    })
    .map_err(CliError::from)?;
    Ok(stacks)
}

/// Stacks at a regime's resolution.
pub(crate) fn regime_stacks(
    stacks: &[TileStack],
    factor: f64,
) -> Result<Vec<TileStack>, CliError> {
    if factor == 1.0 {
        return Ok(stacks.to_vec());
    }
    par::try_map_slice(stacks, |s| s.downsampled(factor)).map_err(CliError::from)
}

pub(crate) fn load_fold_plan(ctx: &Ctx) -> Result<FoldPlan, CliError> {
    let path = ctx.folds_file();
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("malformed fold plan: {e}")))
}

/// One training regime for `run_full_chain`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainVariant {
    pub loss: Option<crate::config::LossName>,
    pub balanced: Option<bool>,
}

/// Convenience chain used by tests and scripted runs: synth, split, then per
/// resolution extract, train (each variant), infer, eval.
pub fn run_full_chain(
    ctx: &Ctx,
    resolutions: &[Resolution],
    variants: &[TrainVariant],
) -> Result<(), CliError> {
    cmd_synth(ctx)?;
    cmd_split(ctx)?;
    for &res in resolutions {
        cmd_extract(ctx, res)?;
        for variant in variants {
            let opts = TrainOptions {
                lightings: ctx.config.lighting.clone(),
                loss: variant.loss,
                balanced: variant.balanced,
            };
            cmd_train(ctx, res, &opts)?;
            let loss_name = variant.loss.unwrap_or(ctx.config.train.loss);
            let balanced = variant.balanced.unwrap_or(ctx.config.train.balanced_input);
            let model = model_name(&ctx.config.train.loss_kind(loss_name), balanced);
            cmd_infer(
                ctx,
                res,
                &InferOptions {
                    lightings: ctx.config.lighting.clone(),
                    model: Some(model),
                    predictions: None,
                },
            )?;
        }
        cmd_eval(ctx, res)?;
    }
    Ok(())
}
