//! CLI error taxonomy mapped onto process exit codes:
//! 2 config error, 3 stale or missing stage, 4 data error.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing stage: {0}")]
    MissingStage(String),
    #[error("stale stage: {0} (outputs changed since its ledger entry; rerun it)")]
    StaleStage(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingStage(_) | CliError::StaleStage(_) => 3,
            CliError::Data(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Data(format!("{}: {source}", path.display()))
    }
}

impl From<crackscan_core::imaging::ImagingError> for CliError {
    fn from(e: crackscan_core::imaging::ImagingError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crackscan_core::illumsim::RenderError> for CliError {
    fn from(e: crackscan_core::illumsim::RenderError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crackscan_core::patchset::PatchError> for CliError {
    fn from(e: crackscan_core::patchset::PatchError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crackscan_core::classify::ClassifyError> for CliError {
    fn from(e: crackscan_core::classify::ClassifyError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crackscan_core::evalmetrics::MetricsError> for CliError {
    fn from(e: crackscan_core::evalmetrics::MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}
