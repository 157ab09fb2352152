//! Experiment reports.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// One `statistic ≤ tolerance` comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, statistic: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            tolerance,
            pass: statistic <= tolerance,
        }
    }

    /// A check whose statistic is the number of violations of an exact rule.
    pub fn exact(name: impl Into<String>, violations: usize) -> Self {
        Self::new(name, violations as f64, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    /// The identity or limit law under test.
    pub claim: String,
    pub seed: u64,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub statistics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, claim: impl Into<String>, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            claim: claim.into(),
            seed,
            parameters: BTreeMap::new(),
            statistics: BTreeMap::new(),
            checks: Vec::new(),
            pass: true,
            notes: Vec::new(),
            wall_time_s: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    pub fn stat(&mut self, key: &str, value: f64) {
        self.statistics.insert(key.to_string(), value);
    }

    pub fn check(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn timed(mut self, start: Instant) -> Self {
        self.wall_time_s = Some(start.elapsed().as_secs_f64());
        self
    }

    /// Copy without timing information, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_s: None,
            ..self.clone()
        }
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<5} {} / {}: {:.6e} (tolerance {:.3e})\n",
                if c.pass { "PASS" } else { "FAIL" },
                self.experiment,
                c.name,
                c.statistic,
                c.tolerance
            ));
        }
        out
    }
}
