//! Outcome records for the empirical inequality checks.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Result of testing one inequality `lhs <= C rhs` over many trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub lemma_id: String,
    pub parameters: BTreeMap<String, f64>,
    /// Largest observed `lhs / rhs`.
    pub fitted_constant: f64,
    pub trials: usize,
    /// Trials with a vanishing right-hand side.
    pub skipped: usize,
    /// Trials exceeding `bound` when one was supplied.
    pub violations: usize,
    pub bound: Option<f64>,
    pub worst_trial: Option<usize>,
    pub flags: Vec<String>,
}

impl InequalityReport {
    pub fn new(lemma_id: &str) -> Self {
        Self {
            lemma_id: lemma_id.into(),
            parameters: BTreeMap::new(),
            fitted_constant: 0.0,
            trials: 0,
            skipped: 0,
            violations: 0,
            bound: None,
            worst_trial: None,
            flags: Vec::new(),
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.parameters.insert(name.into(), value);
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    /// Records one trial.
    pub fn record(&mut self, trial: usize, lhs: f64, rhs: f64) {
        self.trials += 1;
        if !(rhs > 1e-300) || !lhs.is_finite() {
            self.skipped += 1;
            return;
        }
        let ratio = lhs / rhs;
        if ratio > self.fitted_constant || self.worst_trial.is_none() {
            self.fitted_constant = self.fitted_constant.max(ratio);
            self.worst_trial = Some(trial);
        }
        if let Some(b) = self.bound {
            if ratio > b * (1.0 + 1e-12) {
                self.violations += 1;
            }
        }
    }

    pub fn flag(&mut self, text: &str) {
        self.flags.push(text.into());
    }

    pub fn holds(&self) -> bool {
        self.violations == 0 && self.fitted_constant.is_finite() && self.trials > self.skipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_worst_ratio() {
        let mut r = InequalityReport::new("t").with_bound(1.0);
        r.record(0, 0.5, 1.0);
        r.record(1, 0.9, 1.0);
        r.record(2, 1.0, 0.0);
        assert_eq!(r.fitted_constant, 0.9);
        assert_eq!(r.worst_trial, Some(1));
        assert_eq!(r.skipped, 1);
        assert!(r.holds());
        r.record(3, 2.0, 1.0);
        assert_eq!(r.violations, 1);
        assert!(!r.holds());
    }
}
