//! Suite report assembly and emission as CSV and JSON, plus a tidy
//! per-config series file for external plotting.

use serde::{Deserialize, Serialize};

use super::RunSummary;

/// One report row; `fold` is `None` for the mean-over-folds row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub config: String,
    pub resolution: String,
    pub fold: Option<usize>,
    pub accuracy: f64,
    pub mcc: f64,
    pub cpa: f64,
    pub ccf1: f64,
}

/// Accumulated rows for every evaluated (model, config, resolution) run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<MetricRow>,
}

impl SuiteReport {
    /// Append per-fold rows plus the mean row for one run.
    pub fn push_run(&mut self, model: &str, config: &str, resolution: &str, summary: &RunSummary) {
        for fold in &summary.folds {
            self.rows.push(MetricRow {
                model: model.to_string(),
                config: config.to_string(),
                resolution: resolution.to_string(),
                fold: Some(fold.fold),
                accuracy: fold.accuracy,
                mcc: fold.mcc,
                cpa: fold.cpa,
                ccf1: fold.ccf1,
            });
        }
        self.rows.push(MetricRow {
            model: model.to_string(),
            config: config.to_string(),
            resolution: resolution.to_string(),
            fold: None,
            accuracy: summary.mean_accuracy,
            mcc: summary.mean_mcc,
            cpa: summary.mean_cpa,
            ccf1: summary.mean_ccf1,
        });
    }

    /// Mean row for a given run, if present.
    pub fn mean_row(&self, model: &str, config: &str, resolution: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| {
            r.fold.is_none() && r.model == model && r.config == config && r.resolution == resolution
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,config,resolution,fold,accuracy,mcc,cpa,ccf1\n");
        for row in &self.rows {
            let fold = match row.fold {
                Some(i) => i.to_string(),
                None => "mean".to_string(),
            };
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                row.model, row.config, row.resolution, fold, row.accuracy, row.mcc, row.cpa, row.ccf1
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Long-format series of the mean rows: one line per
    /// (model, config, resolution, metric).
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("model,config,resolution,metric,value\n");
        for row in self.rows.iter().filter(|r| r.fold.is_none()) {
            for (metric, value) in [
                ("accuracy", row.accuracy),
                ("mcc", row.mcc),
                ("cpa", row.cpa),
                ("ccf1", row.ccf1),
            ] {
                out.push_str(&format!(
                    "{},{},{},{},{:.6}\n",
                    row.model, row.config, row.resolution, metric, value
                ));
            }
        }
        out
    }
}
