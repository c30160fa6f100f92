//! Pipeline orchestration for the crack inspection toolkit: a run
//! configuration drives synthesis, patch extraction, fold planning,
//! training, inference, and evaluation into one output directory, with a
//! content-digest ledger making reruns idempotent and stale inputs loud.

pub mod config;
pub mod error;
pub mod ledger;
pub mod stages;

pub use config::{LossName, Resolution, RunConfig};
pub use error::CliError;
pub use stages::{
    cmd_eval, cmd_extract, cmd_infer, cmd_report, cmd_rig, cmd_split, cmd_synth, cmd_train,
    model_name, run_full_chain, Ctx, InferOptions, TrainOptions, TrainVariant,
};
