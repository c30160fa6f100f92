//! Inference stage: sliding-window detection masks plus per-origin score
//! files for every test tile of every fold.
//!
//! The scorer is either a trained baseline model or an externally produced
//! prediction file; both paths emit identical outputs.

use std::path::PathBuf;

use crackscan_core::classify::{
    ingest_predictions, score_grid, write_predictions, BaselineModel, PatchScorer, ScoreMap,
};
use crackscan_core::illumsim::LightingConfig;
use crackscan_core::imaging::save_mask;

use super::{
    clean_dir, load_fold_plan, load_stacks, model_name, record_stage, regime_stacks,
    require_stage, up_to_date, Ctx,
};
use crate::config::Resolution;
use crate::error::CliError;
use crate::ledger::{digest_file, digest_json, Ledger};

pub struct InferOptions {
    pub lightings: Vec<LightingConfig>,
    /// Model directory name; defaults to the config's training regime.
    pub model: Option<String>,
    /// External prediction CSV; replaces the trained model as the scorer.
    pub predictions: Option<PathBuf>,
}

pub fn stage_key(res: Resolution, cfg: LightingConfig, model: &str) -> String {
    format!("infer/{}/{}/{}", res.name(), cfg.name(), model)
}

pub fn cmd_infer(ctx: &Ctx, res: Resolution, opts: &InferOptions) -> Result<(), CliError> {
    let mut ledger = Ledger::load(&ctx.out)?;
    let synth_digest = require_stage(&ledger, super::synth::STAGE, &ctx.tiles_dir())?;
    let split_digest = require_stage(&ledger, super::split::STAGE, &ctx.folds_file())?;

    let model = match (&opts.model, &opts.predictions) {
        (Some(name), _) => name.clone(),
        (None, Some(path)) => {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("external");
            format!("ext_{stem}")
        }
        (None, None) => model_name(
            &ctx.config.train.loss_kind(ctx.config.train.loss),
            ctx.config.train.balanced_input,
        ),
    };
    let regime = ctx.config.regime(res);
    let plan = load_fold_plan(ctx)?;
    let mut stacks = None;

    for &cfg in &opts.lightings {
        let key = stage_key(res, cfg, &model);
        let scorer_digest = match &opts.predictions {
            Some(path) => digest_file(path)?,
            None => require_stage(
                &ledger,
                &super::train::stage_key(res, cfg, &model),
                &ctx.models_dir(res, cfg, &model),
            )?,
        };
        let input_digest = format!("{synth_digest}+{split_digest}+{scorer_digest}");
        let config_digest = digest_json(&(&regime, ctx.config.score_threshold));
        let out_root = ctx.infer_root(res).join(cfg.name()).join(&model);
        if up_to_date(&ledger, &key, &config_digest, &input_digest, &out_root)? {
            println!("{key}: up to date");
            continue;
        }
        if stacks.is_none() {
            stacks = Some(regime_stacks(&load_stacks(ctx)?, regime.factor)?);
        }
        let stacks = stacks.as_ref().expect("loaded above");
        let by_id: std::collections::HashMap<&str, &crackscan_core::illumsim::TileStack> =
            stacks.iter().map(|s| (s.tile_id.as_str(), s)).collect();

        let external = match &opts.predictions {
            Some(path) => Some(ingest_predictions(path, &regime.patch)?),
            None => None,
        };

        clean_dir(&out_root)?;
        let mut masks_written = 0usize;
        for fold in 0..plan.k {
            let fold_dir = ctx.infer_dir(res, cfg, &model, fold);
            std::fs::create_dir_all(&fold_dir).map_err(|e| CliError::io(&fold_dir, e))?;
            let native: Option<BaselineModel> = match external {
                Some(_) => None,
                None => Some(BaselineModel::load_json(
                    ctx.models_dir(res, cfg, &model)
                        .join(format!("fold_{fold}.json")),
                )?),
            };
            let scorer: &dyn PatchScorer = match (&external, &native) {
                (Some(table), _) => table,
                (None, Some(model)) => model,
                (None, None) => unreachable!("one scorer source is always set"),
            };

            let mut rows: Vec<(String, u32, u32, f64)> = Vec::new();
            for tile_id in &plan.folds[fold].test {
                let stack = by_id
                    .get(tile_id.as_str())
                    .ok_or_else(|| CliError::Data(format!("no stack for tile '{tile_id}'")))?;
                let img = stack.image(cfg);
                let entries = score_grid(tile_id, img, scorer, &regime.patch)?;
                rows.extend(
                    entries
                        .iter()
                        .map(|&((r, c), s)| (tile_id.clone(), r, c, s)),
                );
                let map = ScoreMap::from_patch_scores(
                    img.width(),
                    img.height(),
                    regime.patch.patch_size,
                    &entries,
                );
                let mask = map.to_mask(ctx.config.score_threshold);
                save_mask(&mask, fold_dir.join(format!("{tile_id}.pgm")))?;
                masks_written += 1;
            }
            write_predictions(fold_dir.join("predictions.csv"), &rows)?;
        }
        record_stage(&mut ledger, ctx, &key, config_digest, input_digest, &out_root)?;
        println!("{key}: wrote {masks_written} detection masks");
    }
    Ok(())
}
