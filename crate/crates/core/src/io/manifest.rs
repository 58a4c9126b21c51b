use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verify::CheckReport;

/// Everything needed to repeat a run: the fully materialized config, the
/// code version and the kernel thread count, plus what the run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub config: String,
    pub threads: usize,
    pub reports: Vec<CheckReport>,
    /// False when a machine-precision check failed.
    pub valid: bool,
    /// CRC32 of the final snapshot file, when the scenario has one.
    pub final_crc32: Option<u32>,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(scenario: String, config: String, threads: usize) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario,
            config,
            threads,
            reports: Vec::new(),
            valid: true,
            final_crc32: None,
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads the parts needed for reproduction. Residuals that were not
    /// finite are stored as `null`, so only the echo fields are required.
    pub fn read_config(path: &Path) -> Result<(String, usize)> {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let config = v["config"]
            .as_str()
            .ok_or_else(|| Error::Validation("manifest has no config echo".into()))?;
        let threads = v["threads"].as_u64().unwrap_or(1) as usize;
        Ok((config.to_string(), threads))
    }
}
