//! Report stage: print the evaluated metric table for a resolution.

use std::fs;

use crackscan_core::evalmetrics::SuiteReport;

use super::Ctx;
use crate::config::Resolution;
use crate::error::CliError;

pub fn cmd_report(ctx: &Ctx, res: Resolution) -> Result<(), CliError> {
    let path = ctx.report_dir(res).join("report.json");
    if !path.exists() {
        return Err(CliError::MissingStage(super::eval::stage_key(res)));
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let report = SuiteReport::from_json(&text)
        .map_err(|e| CliError::Data(format!("malformed report {}: {e}", path.display())))?;

    println!("{:<20} {:<12} {:>6} {:>9} {:>9} {:>9} {:>9}", "model", "config", "fold", "accuracy", "mcc", "cpa", "ccf1");
    for row in &report.rows {
        let fold = match row.fold {
            Some(i) => i.to_string(),
            None => "mean".to_string(),
        };
        println!(
            "{:<20} {:<12} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            row.model, row.config, fold, row.accuracy, row.mcc, row.cpa, row.ccf1
        );
    }
    Ok(())
}
