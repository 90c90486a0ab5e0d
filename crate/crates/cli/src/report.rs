//! Machine-readable run reports: every subcommand writes one JSON file
//! recording its inputs, effective configuration, metrics, seed, and wall
//! time, so a run can be reproduced from its report alone.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

pub struct ReportBuilder {
    subcommand: &'static str,
    started: Instant,
    inputs: Value,
    effective_config: Value,
    seed: Option<u64>,
    metrics: Value,
}

impl ReportBuilder {
    pub fn new(subcommand: &'static str) -> Self {
        ReportBuilder {
            subcommand,
            started: Instant::now(),
            inputs: Value::Null,
            effective_config: Value::Null,
            seed: None,
            metrics: Value::Null,
        }
    }

    pub fn inputs(&mut self, v: Value) -> &mut Self {
        self.inputs = v;
        self
    }

    pub fn effective_config(&mut self, v: Value) -> &mut Self {
        self.effective_config = v;
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn metrics(&mut self, v: Value) -> &mut Self {
        self.metrics = v;
        self
    }

    /// Writes the report through a temp file and rename.
    pub fn write(&self, path: &Path) -> Result<()> {
        let report = json!({
            "schema_version": SCHEMA_VERSION,
            "subcommand": self.subcommand,
            "inputs": self.inputs,
            "effective_config": self.effective_config,
            "seed": self.seed,
            "metrics": self.metrics,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&report)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let tmp = dir.join(format!(
            ".{}.tmp.{}",
            path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
            std::process::id()
        ));
        std::fs::write(&tmp, text.as_bytes())
            .and_then(|_| std::fs::rename(&tmp, path))
            .with_context(|| format!("writing report {}", path.display()))
    }
}

/// Report destination: `--report` if given, else derived from the output
/// path, else a fixed name in the working directory.
pub fn report_path(flag: Option<PathBuf>, out: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p;
    }
    if let Some(out) = out {
        let mut name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        name.push_str(".report.json");
        return out.with_file_name(name);
    }
    PathBuf::from("babound-report.json")
}
