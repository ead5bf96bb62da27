//! Versioned experiment reports.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub params: Value,
    pub seed: u64,
    pub trials: usize,
    pub metrics: serde_json::Map<String, Value>,
    pub pass: bool,
    /// CSV dump of per-trial records, when the experiment has trials.
    #[serde(skip)]
    pub trial_csv: Option<String>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, params: Value, seed: u64, trials: usize) -> Self {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            params,
            seed,
            trials,
            metrics: serde_json::Map::new(),
            pass: false,
            trial_csv: None,
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.to_string(), value.into());
    }
}

/// Render with a trailing newline; field order is struct order, so the
/// output is byte-stable for a fixed seed.
pub fn render(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("serializable");
    s.push('\n');
    s
}

/// CSV of per-trial game records.
pub fn trials_to_csv(records: &[qdel::games::TrialRecord]) -> String {
    let mut out = String::from("trial,b,b_prime,verify_ok,aborted\n");
    for r in records {
        let v = match r.verify_ok {
            Some(true) => "true",
            Some(false) => "false",
            None => "",
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.trial, r.b, r.b_prime, v, r.aborted
        ));
    }
    out
}
