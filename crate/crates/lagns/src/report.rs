//! Report bundles: gates plus free-form sections, written as JSON and
//! Markdown.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One pass/fail check of a pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub id: String,
    pub passed: bool,
    /// Measured quantity and the limit it is compared against, when numeric.
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl Gate {
    /// Passes when `value <= limit` (NaN fails).
    pub fn at_most(id: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            passed: value <= limit,
            value: Some(value),
            limit: Some(limit),
            detail: detail.into(),
        }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(id: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            passed: value >= limit,
            value: Some(value),
            limit: Some(limit),
            detail: detail.into(),
        }
    }

    pub fn check(id: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            passed,
            value: None,
            limit: None,
            detail: detail.into(),
        }
    }

    /// Failed gate carrying an error diagnostic.
    pub fn error(id: &str, err: &dyn std::fmt::Display) -> Self {
        Self::check(id, false, err.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub scenario: String,
    pub pipeline: String,
    pub seed: u64,
    pub gates: Vec<Gate>,
    pub sections: BTreeMap<String, Value>,
}

impl ReportBundle {
    pub fn new(scenario: &str, pipeline: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.into(),
            pipeline: pipeline.into(),
            seed,
            gates: Vec::new(),
            sections: BTreeMap::new(),
        }
    }

    pub fn gate(&mut self, g: Gate) {
        self.gates.push(g);
    }

    pub fn section(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or_else(|e| Value::String(format!("unserializable: {e}")));
        self.sections.insert(name.into(), v);
    }

    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn failed_ids(&self) -> Vec<&str> {
        self.gates.iter().filter(|g| !g.passed).map(|g| g.id.as_str()).collect()
    }

    pub fn find(&self, id: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are finite or null")
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} ({})\n", self.scenario, self.pipeline);
        let _ = writeln!(s, "seed: {}\n", self.seed);
        let _ = writeln!(s, "| gate | result | value | limit | detail |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for g in &self.gates {
            let num = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6e}"));
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                g.id,
                if g.passed { "pass" } else { "FAIL" },
                num(g.value),
                num(g.limit),
                g.detail.replace('|', "\\|")
            );
        }
        for (name, v) in &self.sections {
            let _ = writeln!(s, "\n## {name}\n");
            if let Value::String(text) = v {
                let _ = writeln!(s, "{text}");
            } else {
                let _ = writeln!(s, "```json\n{}\n```", serde_json::to_string_pretty(v).unwrap_or_default());
            }
        }
        s
    }

    /// Writes `report.json` and `report.md` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("report.md"), self.to_markdown())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_fails_numeric_gates() {
        assert!(!Gate::at_most("x", f64::NAN, 1.0, "").passed);
        assert!(!Gate::at_least("x", f64::NAN, 1.0, "").passed);
        assert!(Gate::at_most("x", 1.0, 1.0, "").passed);
    }

    #[test]
    fn bundle_lists_failures_and_renders() {
        let mut b = ReportBundle::new("s", "solve", 3);
        b.gate(Gate::at_most("residual", 2.0, 1.0, "too big"));
        b.gate(Gate::check("ok", true, ""));
        b.section("numbers", vec![1.0, 2.0]);
        assert!(!b.passed());
        assert_eq!(b.failed_ids(), vec!["residual"]);
        let md = b.to_markdown();
        assert!(md.contains("| residual | FAIL |"));
        let back: ReportBundle = serde_json::from_str(&b.to_json()).unwrap();
        assert_eq!(back, b);
    }
}
