//! Experiment reports: deterministic JSON plus a CSV series per run.

use crate::config::{ExperimentConfig, ExperimentId};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: Value,
    pub units: String,
    pub claim: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub theorem: String,
    pub config: BTreeMap<String, String>,
    pub constants: BTreeMap<String, Value>,
    pub metrics: Vec<Metric>,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        ExperimentReport {
            experiment: cfg.id.as_str().to_string(),
            theorem: cfg.id.theorem().to_string(),
            config: cfg.values().clone(),
            constants: BTreeMap::new(),
            metrics: Vec::new(),
            checks: Vec::new(),
            pass: false,
            artifacts: vec!["report.json".into(), "series.csv".into(), "timing.json".into()],
            error: None,
        }
    }

    pub fn id(&self) -> Option<ExperimentId> {
        self.experiment.parse().ok()
    }

    pub fn constant(&mut self, name: &str, value: impl Into<Value>) {
        self.constants.insert(name.to_string(), value.into());
    }

    pub fn metric(&mut self, name: &str, value: impl Into<Value>, units: &str, claim: &str) {
        self.metrics.push(Metric {
            name: name.to_string(),
            value: value.into(),
            units: units.to_string(),
            claim: claim.to_string(),
        });
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.to_string(), pass, detail: detail.into() });
    }

    pub fn metric_value(&self, name: &str) -> Option<&Value> {
        self.metrics.iter().find(|m| m.name == name).map(|m| &m.value)
    }

    pub fn metric_f64(&self, name: &str) -> Option<f64> {
        self.metric_value(name).and_then(Value::as_f64)
    }

    pub fn finish(&mut self) {
        self.pass = self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// A finished run: report, CSV series and wall-clock seconds.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub series: String,
    /// Extra named artifacts, e.g. game transcripts.
    pub extra: Vec<(String, String)>,
    pub seconds: f64,
}

impl RunOutput {
    /// Writes `report.json`, `series.csv` and `timing.json` under `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report.to_json())?;
        std::fs::write(dir.join("series.csv"), &self.series)?;
        for (name, body) in &self.extra {
            std::fs::write(dir.join(name), body)?;
        }
        let timing = serde_json::json!({ "wall_clock_seconds": self.seconds });
        std::fs::write(dir.join("timing.json"), format!("{timing}\n"))?;
        Ok(dir.join("report.json"))
    }
}
