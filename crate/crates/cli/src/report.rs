//! JSON report schema.

use std::collections::BTreeMap;

use hproj_core::ModelDescriptor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// How a check's value is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// pass iff `max_residual <= tolerance`
    #[default]
    Below,
    /// pass iff `max_residual >= tolerance`
    Above,
}

impl Comparison {
    fn is_below(&self) -> bool {
        *self == Comparison::Below
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Comparison::is_below")]
    pub comparison: Comparison,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, Comparison::Below)
    }

    pub fn above(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, Comparison::Above)
    }

    fn new(name: impl Into<String>, value: f64, tolerance: f64, comparison: Comparison) -> Self {
        // JSON has no NaN or infinity
        let finite = value.is_finite();
        let max_residual = if finite { value } else { f64::MAX };
        let pass = finite
            && match comparison {
                Comparison::Below => value <= tolerance,
                Comparison::Above => value >= tolerance,
            };
        Check {
            name: name.into(),
            max_residual,
            tolerance,
            pass,
            comparison,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub scenario: String,
    pub model: Option<ModelDescriptor>,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    /// Scenario-specific results, serialized at top level.
    #[serde(flatten)]
    pub details: BTreeMap<String, Value>,
}

impl Report {
    pub fn new(scenario: &str, model: Option<ModelDescriptor>, seed: u64) -> Self {
        Report {
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: scenario.to_string(),
            model,
            seed,
            checks: Vec::new(),
            artifacts: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn detail(&mut self, key: &str, v: impl Serialize) {
        self.details
            .insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Concatenate reports; check names are prefixed with the source scenario.
    pub fn merge(reports: &[Report]) -> Report {
        let model = match reports.first() {
            Some(r) if reports.iter().all(|o| o.model == r.model) => r.model.clone(),
            _ => None,
        };
        let seed = reports.first().map_or(0, |r| r.seed);
        let mut out = Report::new("report-merge", model, seed);
        for r in reports {
            for c in &r.checks {
                let mut c = c.clone();
                c.name = format!("{}/{}", r.scenario, c.name);
                out.checks.push(c);
            }
            out.artifacts.extend(r.artifacts.iter().cloned());
        }
        out.detail("sources", reports.iter().map(|r| &r.scenario).collect::<Vec<_>>());
        out
    }
}
