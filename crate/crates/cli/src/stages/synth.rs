//! Tile synthesis stage: render every tile stack to disk plus the tile
//! manifest. Idempotent under an unchanged config.

use crackscan_core::illumsim::{self, TileSpec, TileStack};
use crackscan_core::par;

use super::{clean_dir, record_stage, up_to_date, write_json, Ctx, TilesManifest};
use crate::error::CliError;
use crate::ledger::{digest_json, Ledger};

pub const STAGE: &str = "synth";

pub fn cmd_synth(ctx: &Ctx) -> Result<(), CliError> {
    if ctx.config.tile_count == 0 {
        return Err(CliError::Config("empty experiment: tile_count is 0".into()));
    }
    let mut ledger = Ledger::load(&ctx.out)?;
    let config_digest = digest_json(&(
        ctx.config.global_seed,
        ctx.config.tile_count,
        &ctx.config.tile,
        &ctx.config.rig,
    ));
    let tiles_dir = ctx.tiles_dir();
    if up_to_date(&ledger, STAGE, &config_digest, "-", &tiles_dir)? {
        println!("{STAGE}: up to date");
        return Ok(());
    }

    let specs: Vec<(String, TileSpec)> = ctx
        .config
        .tile_ids()
        .into_iter()
        .map(|id| {
            let spec = ctx.config.tile.spec_for(ctx.config.tile_seed(&id));
            (id, spec)
        })
        .collect();
    let stacks: Vec<TileStack> = par::try_map_slice(&specs, |(id, spec)| {
        illumsim::render_stack(id, spec, &ctx.config.rig)
    })
    .map_err(CliError::from)?;

    clean_dir(&tiles_dir)?;
    for (stack, (id, spec)) in stacks.iter().zip(&specs) {
        illumsim::save_stack(stack, spec, &ctx.config.rig, tiles_dir.join(id))?;
    }
    let manifest = TilesManifest {
        tile_ids: specs.iter().map(|(id, _)| id.clone()).collect(),
        width: ctx.config.tile.width,
        height: ctx.config.tile.height,
    };
    write_json(&ctx.tiles_manifest(), &manifest)?;

    record_stage(&mut ledger, ctx, STAGE, config_digest, "-".into(), &tiles_dir)?;
    println!("{STAGE}: wrote {} tile stacks", specs.len());
    Ok(())
}
