//! Run reports: the JSON summary written next to the trace files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;
use crate::error::{Error, Result};
use crate::trace::CertificateSummary;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    /// Which subcommand produced this report.
    pub command: String,
    /// Echo of the spec the run was configured with.
    pub spec: ExperimentSpec,
    pub algorithms: Vec<AlgorithmReport>,
    pub total_wall_time_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlgorithmReport {
    pub name: String,
    /// Trace CSV path, relative to the report location.
    pub trace_path: String,
    pub iterations: usize,
    /// completed | tolerance_reached | budget_exhausted | diverged
    pub termination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSummary>,
    /// True objective at the final iterate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_f_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim_denoised: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssim_noisy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denoised_path: Option<String>,
}

impl RunReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
