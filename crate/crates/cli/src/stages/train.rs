//! Training stage: one baseline model per (lighting config, fold) for the
//! selected loss regime.

use std::collections::HashMap;

use crackscan_core::classify::{train, TrainConfig, TrainSample};
use crackscan_core::illumsim::{LightingConfig, TileStack};
use crackscan_core::patchset::{
    build_phase_sets, extract_patches, LabeledPatch, PatchLabel,
};
use crackscan_core::seeding;

use super::{
    clean_dir, load_fold_plan, load_stacks, model_name, record_stage, regime_stacks,
    require_stage, up_to_date, write_json, Ctx,
};
use crate::config::{LossName, Resolution};
use crate::error::CliError;
use crate::ledger::{digest_json, Ledger};

pub struct TrainOptions {
    pub lightings: Vec<LightingConfig>,
    /// Loss override; falls back to the config's loss.
    pub loss: Option<LossName>,
    /// Balanced-input override; falls back to the config.
    pub balanced: Option<bool>,
}

pub fn stage_key(res: Resolution, cfg: LightingConfig, model: &str) -> String {
    format!("train/{}/{}/{}", res.name(), cfg.name(), model)
}

fn to_samples(patches: &[LabeledPatch]) -> Vec<TrainSample> {
    patches
        .iter()
        .map(|p| TrainSample {
            pixels: p.pixels.clone(),
            label: p.label == PatchLabel::Positive,
        })
        .collect()
}

/// All positive and negative patches of the fold's train tiles, unsampled.
fn imbalanced_train(
    by_id: &HashMap<&str, &TileStack>,
    train_tiles: &[String],
    cfg: LightingConfig,
    ctx: &Ctx,
    res: Resolution,
) -> Result<Vec<LabeledPatch>, CliError> {
    let regime = ctx.config.regime(res);
    let mut out = Vec::new();
    for tile_id in train_tiles {
        let stack = by_id
            .get(tile_id.as_str())
            .ok_or_else(|| CliError::Data(format!("no stack for tile '{tile_id}'")))?;
        let patches = extract_patches(
            tile_id,
            cfg,
            stack.image(cfg),
            &stack.truth_mask,
            &regime.patch,
            &ctx.config.thresholds,
        )?;
        out.extend(
            patches
                .into_iter()
                .filter(|p| p.label != PatchLabel::Ambiguous),
        );
    }
    Ok(out)
}

pub fn cmd_train(ctx: &Ctx, res: Resolution, opts: &TrainOptions) -> Result<(), CliError> {
    let mut ledger = Ledger::load(&ctx.out)?;
    let synth_digest = require_stage(&ledger, super::synth::STAGE, &ctx.tiles_dir())?;
    let extract_digest = require_stage(
        &ledger,
        &super::extract::stage_key(res),
        &ctx.patches_dir(res),
    )?;
    let split_digest = require_stage(&ledger, super::split::STAGE, &ctx.folds_file())?;
    let input_digest = format!("{synth_digest}+{extract_digest}+{split_digest}");

    let settings = &ctx.config.train;
    let loss_name = opts.loss.unwrap_or(settings.loss);
    let balanced = opts.balanced.unwrap_or(settings.balanced_input);
    let loss = settings.loss_kind(loss_name);
    let model = model_name(&loss, balanced);
    let regime = ctx.config.regime(res);
    let plan = load_fold_plan(ctx)?;

    let mut stacks: Option<Vec<TileStack>> = None;
    for &cfg in &opts.lightings {
        let key = stage_key(res, cfg, &model);
        let config_digest = digest_json(&(
            &regime,
            &ctx.config.thresholds,
            ctx.config.global_seed,
            &loss,
            settings.learning_rate,
            settings.batch_size,
            settings.epochs,
            balanced,
        ));
        let model_dir = ctx.models_dir(res, cfg, &model);
        if up_to_date(&ledger, &key, &config_digest, &input_digest, &model_dir)? {
            println!("{key}: up to date");
            continue;
        }
        if stacks.is_none() {
            stacks = Some(regime_stacks(&load_stacks(ctx)?, regime.factor)?);
        }
        let stacks = stacks.as_ref().expect("loaded above");
        let by_id: HashMap<&str, &TileStack> =
            stacks.iter().map(|s| (s.tile_id.as_str(), s)).collect();

        clean_dir(&model_dir)?;
        for fold in 0..plan.k {
            let phase_seed =
                seeding::derive_named(ctx.config.global_seed, &["phases", res.name()]);
            let sets = build_phase_sets(
                stacks,
                &plan,
                fold,
                cfg,
                &regime.patch,
                &ctx.config.thresholds,
                phase_seed,
            )?;
            let train_patches = if balanced {
                sets.train
            } else {
                imbalanced_train(&by_id, &plan.folds[fold].train, cfg, ctx, res)?
            };
            let train_samples = to_samples(&train_patches);
            let val_samples = to_samples(&sets.validation);
            let train_cfg = TrainConfig {
                loss,
                learning_rate: settings.learning_rate,
                batch_size: settings.batch_size,
                epochs: settings.epochs,
                seed: seeding::derive_named(
                    ctx.config.global_seed,
                    &["train", res.name(), cfg.name(), &model, &fold.to_string()],
                ),
                balanced_input: balanced,
            };
            let (trained, log) =
                train(&train_samples, &val_samples, &train_cfg, regime.patch.patch_size)?;
            trained.save_json(model_dir.join(format!("fold_{fold}.json")))?;
            write_json(&model_dir.join(format!("fold_{fold}_log.json")), &log)?;
        }
        record_stage(&mut ledger, ctx, &key, config_digest, input_digest.clone(), &model_dir)?;
        println!("{key}: trained {} folds", plan.k);
    }
    Ok(())
}
