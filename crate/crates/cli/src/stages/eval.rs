//! Evaluation stage: patch metrics from archived labels and score files,
//! image metrics from detection masks against ground truth, aggregated per
//! fold and averaged, for every (lighting config, model) found under the
//! inference root.

use std::fs;
use std::path::Path;

use crackscan_core::classify::ingest_predictions;
use crackscan_core::evalmetrics::{evaluate_run, FoldInput, SuiteReport, TileDetection};
use crackscan_core::illumsim::LightingConfig;
use crackscan_core::imaging::{load_mask, BinaryMask};
use crackscan_core::patchset::{PatchLabel, PatchRecord};

use super::{load_fold_plan, load_stacks, record_stage, regime_stacks, require_stage, up_to_date, Ctx};
use crate::config::Resolution;
use crate::error::CliError;
use crate::ledger::{digest_json, digest_tree, Ledger};

pub fn stage_key(res: Resolution) -> String {
    format!("eval/{}", res.name())
}

struct FoldStorage {
    fold: usize,
    /// (tile id, truth mask, detection mask)
    tiles: Vec<(String, BinaryMask, BinaryMask)>,
    /// (predicted, truth) patch label pairs.
    pairs: Vec<(bool, bool)>,
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().to_string());
        }
    }
    names.sort();
    Ok(names)
}

fn load_records(ctx: &Ctx, res: Resolution, cfg: LightingConfig, tile_id: &str) -> Result<Vec<PatchRecord>, CliError> {
    let path = ctx.patch_records(res, cfg, tile_id);
    if !path.exists() {
        return Err(CliError::MissingStage(super::extract::stage_key(res)));
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed patch records {}: {e}", path.display())))
}

pub fn cmd_eval(ctx: &Ctx, res: Resolution) -> Result<(), CliError> {
    let mut ledger = Ledger::load(&ctx.out)?;
    require_stage(&ledger, super::synth::STAGE, &ctx.tiles_dir())?;
    require_stage(&ledger, &super::extract::stage_key(res), &ctx.patches_dir(res))?;
    require_stage(&ledger, super::split::STAGE, &ctx.folds_file())?;

    let infer_root = ctx.infer_root(res);
    if !infer_root.exists() {
        return Err(CliError::MissingStage(format!("infer/{}", res.name())));
    }
    let key = stage_key(res);
    let regime = ctx.config.regime(res);
    let config_digest = digest_json(&(&regime, &ctx.config.thresholds, ctx.config.score_threshold));
    let input_digest = digest_tree(&infer_root)?;
    let report_dir = ctx.report_dir(res);
    if up_to_date(&ledger, &key, &config_digest, &input_digest, &report_dir)? {
        println!("{key}: up to date");
        return Ok(());
    }

    let plan = load_fold_plan(ctx)?;
    let stacks = regime_stacks(&load_stacks(ctx)?, regime.factor)?;
    let truth_by_id: std::collections::HashMap<&str, &BinaryMask> = stacks
        .iter()
        .map(|s| (s.tile_id.as_str(), &s.truth_mask))
        .collect();

    let mut report = SuiteReport::default();
    let mut runs = 0usize;
    for cfg_name in sorted_subdirs(&infer_root)? {
        let cfg = LightingConfig::from_name(&cfg_name).ok_or_else(|| {
            CliError::Data(format!("unknown lighting config directory '{cfg_name}'"))
        })?;
        for model in sorted_subdirs(&infer_root.join(&cfg_name))? {
            // Inference outputs must be fresh before they are trusted.
            require_stage(
                &ledger,
                &super::infer::stage_key(res, cfg, &model),
                &infer_root.join(&cfg_name).join(&model),
            )?;

            let mut storage: Vec<FoldStorage> = Vec::with_capacity(plan.k);
            for fold in 0..plan.k {
                let fold_dir = ctx.infer_dir(res, cfg, &model, fold);
                let predictions =
                    ingest_predictions(fold_dir.join("predictions.csv"), &regime.patch)?;
                let mut tiles = Vec::new();
                let mut pairs = Vec::new();
                for tile_id in &plan.folds[fold].test {
                    let truth = truth_by_id
                        .get(tile_id.as_str())
                        .ok_or_else(|| CliError::Data(format!("no stack for tile '{tile_id}'")))?;
                    let mask_path = fold_dir.join(format!("{tile_id}.pgm"));
                    if !mask_path.exists() {
                        return Err(CliError::Data(format!(
                            "missing detection mask {}",
                            mask_path.display()
                        )));
                    }
                    let detected = load_mask(&mask_path)?;
                    tiles.push(((*tile_id).clone(), (*truth).clone(), detected));

                    for record in load_records(ctx, res, cfg, tile_id)? {
                        if record.label == PatchLabel::Ambiguous {
                            continue;
                        }
                        let score = predictions.get(tile_id, record.origin).ok_or_else(|| {
                            CliError::Data(format!(
                                "prediction file misses tile '{tile_id}' origin ({},{})",
                                record.origin.0, record.origin.1
                            ))
                        })?;
                        pairs.push((
                            score >= ctx.config.score_threshold,
                            record.label == PatchLabel::Positive,
                        ));
                    }
                }
                storage.push(FoldStorage { fold, tiles, pairs });
            }

            let fold_inputs: Vec<FoldInput> = storage
                .iter()
                .map(|s| FoldInput {
                    fold: s.fold,
                    tiles: s
                        .tiles
                        .iter()
                        .map(|(id, truth, det)| TileDetection {
                            tile_id: id,
                            truth,
                            detected: det,
                        })
                        .collect(),
                    patch_pairs: s.pairs.clone(),
                })
                .collect();
            let summary = evaluate_run(&fold_inputs)?;
            report.push_run(&model, cfg.name(), res.name(), &summary);
            runs += 1;
        }
    }
    if runs == 0 {
        return Err(CliError::MissingStage(format!("infer/{}", res.name())));
    }

    super::clean_dir(&report_dir)?;
    fs::write(report_dir.join("report.csv"), report.to_csv())
        .map_err(|e| CliError::io(&report_dir, e))?;
    fs::write(report_dir.join("report.json"), report.to_json())
        .map_err(|e| CliError::io(&report_dir, e))?;
    fs::write(report_dir.join("plot.csv"), report.plot_csv())
        .map_err(|e| CliError::io(&report_dir, e))?;

    record_stage(&mut ledger, ctx, &key, config_digest, input_digest, &report_dir)?;
    println!("{key}: evaluated {runs} runs over {} folds", plan.k);
    Ok(())
}
