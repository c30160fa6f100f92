//! Patch extraction stage: label every sliding window of every tile at the
//! regime resolution and archive the records as grid references.

use crackscan_core::patchset::{
    extract_patches, DatasetManifest, PatchLabel, PatchRecord, TilePatchCounts,
};

use super::{
    clean_dir, load_stacks, record_stage, regime_stacks, require_stage, up_to_date, write_json,
    Ctx,
};
use crate::config::Resolution;
use crate::error::CliError;
use crate::ledger::{digest_json, Ledger};

pub fn stage_key(res: Resolution) -> String {
    format!("extract/{}", res.name())
}

pub fn cmd_extract(ctx: &Ctx, res: Resolution) -> Result<(), CliError> {
    let mut ledger = Ledger::load(&ctx.out)?;
    let synth_digest = require_stage(&ledger, super::synth::STAGE, &ctx.tiles_dir())?;
    let regime = ctx.config.regime(res);
    let key = stage_key(res);
    let config_digest = digest_json(&(&regime, &ctx.config.thresholds, &ctx.config.lighting));
    let out_dir = ctx.patches_dir(res);
    if up_to_date(&ledger, &key, &config_digest, &synth_digest, &out_dir)? {
        println!("{key}: up to date");
        return Ok(());
    }

    let stacks = regime_stacks(&load_stacks(ctx)?, regime.factor)?;
    clean_dir(&out_dir)?;
    let mut total = 0usize;
    for &cfg in &ctx.config.lighting {
        let cfg_dir = out_dir.join(cfg.name());
        std::fs::create_dir_all(&cfg_dir).map_err(|e| CliError::io(&cfg_dir, e))?;
        let mut counts = Vec::with_capacity(stacks.len());
        for stack in &stacks {
            let patches = extract_patches(
                &stack.tile_id,
                cfg,
                stack.image(cfg),
                &stack.truth_mask,
                &regime.patch,
                &ctx.config.thresholds,
            )?;
            let records: Vec<PatchRecord> = patches.iter().map(PatchRecord::from_patch).collect();
            write_json(&ctx.patch_records(res, cfg, &stack.tile_id), &records)?;
            total += records.len();
            let count_of = |label: PatchLabel| patches.iter().filter(|p| p.label == label).count();
            counts.push(TilePatchCounts {
                tile_id: stack.tile_id.clone(),
                negative: count_of(PatchLabel::Negative),
                ambiguous: count_of(PatchLabel::Ambiguous),
                positive: count_of(PatchLabel::Positive),
            });
        }
        let manifest = DatasetManifest {
            geometry: regime.patch,
            thresholds: ctx.config.thresholds,
            seed: ctx.config.global_seed,
            storage: "references".into(),
            tiles: counts,
        };
        write_json(&cfg_dir.join("manifest.json"), &manifest)?;
    }

    record_stage(&mut ledger, ctx, &key, config_digest, synth_digest, &out_dir)?;
    println!(
        "{key}: archived {total} patch records across {} lighting configs",
        ctx.config.lighting.len()
    );
    Ok(())
}
