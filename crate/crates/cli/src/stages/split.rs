//! Fold planning stage: deterministic k-fold assignment of tile ids.

use crackscan_core::patchset::make_folds;

use super::{record_stage, require_stage, up_to_date, write_json, Ctx, TilesManifest};
use crate::error::CliError;
use crate::ledger::{digest_json, Ledger};

pub const STAGE: &str = "split";

pub fn cmd_split(ctx: &Ctx) -> Result<(), CliError> {
    let mut ledger = Ledger::load(&ctx.out)?;
    let synth_digest = require_stage(&ledger, super::synth::STAGE, &ctx.tiles_dir())?;
    let config_digest = digest_json(&(ctx.config.global_seed, ctx.config.k_folds));
    let out_file = ctx.folds_file();
    if up_to_date(&ledger, STAGE, &config_digest, &synth_digest, &out_file)? {
        println!("{STAGE}: up to date");
        return Ok(());
    }

    let manifest = TilesManifest::load(ctx)?;
    let plan = make_folds(&manifest.tile_ids, ctx.config.k_folds, ctx.config.global_seed)?;
    write_json(&out_file, &plan)?;

    record_stage(&mut ledger, ctx, STAGE, config_digest, synth_digest, &out_file)?;
    println!(
        "{STAGE}: planned {} folds over {} tiles",
        plan.k,
        manifest.tile_ids.len()
    );
    Ok(())
}
