use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// Outcome of a numerical check.
///
/// The verdict is `Pass` exactly when every residual is at most `tolerance`
/// and every margin is at least `-tolerance`. `values` and `matrices` carry
/// diagnostics that do not affect the verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub tolerance: f64,
    pub residuals: BTreeMap<String, f64>,
    pub margins: BTreeMap<String, f64>,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
    #[serde(default)]
    pub matrices: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(tolerance: f64) -> Self {
        CheckReport {
            verdict: Verdict::Fail,
            tolerance,
            residuals: BTreeMap::new(),
            margins: BTreeMap::new(),
            values: BTreeMap::new(),
            matrices: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn not_applicable(tolerance: f64, reason: impl Into<String>) -> Self {
        let mut r = CheckReport::new(tolerance);
        r.verdict = Verdict::NotApplicable;
        r.notes.push(reason.into());
        r
    }

    pub fn residual(&mut self, name: impl Into<String>, value: f64) {
        self.residuals.insert(name.into(), value);
    }

    pub fn margin(&mut self, name: impl Into<String>, value: f64) {
        self.margins.insert(name.into(), value);
    }

    pub fn value(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn matrix(&mut self, name: impl Into<String>, rows: Vec<Vec<f64>>) {
        self.matrices.insert(name.into(), rows);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Names of the conditions that miss the tolerance.
    pub fn failures(&self) -> Vec<String> {
        let t = self.tolerance;
        let bad_res = self
            .residuals
            .iter()
            .filter(|(_, v)| !(**v <= t))
            .map(|(k, _)| k.clone());
        let bad_margin = self
            .margins
            .iter()
            .filter(|(_, v)| !(**v >= -t))
            .map(|(k, _)| k.clone());
        bad_res.chain(bad_margin).collect()
    }

    /// Sets the verdict from residuals and margins.
    pub fn finish(mut self) -> Self {
        self.verdict = if self.failures().is_empty() { Verdict::Pass } else { Verdict::Fail };
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Smallest margin, or `+inf` when there are none.
    pub fn min_margin(&self) -> f64 {
        self.margins.values().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_rule() {
        let mut r = CheckReport::new(1e-3);
        r.residual("a", 5e-4);
        r.margin("b", -5e-4);
        assert!(r.clone().finish().passed());
        r.residual("c", f64::NAN);
        let r = r.finish();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.failures(), vec!["c".to_string()]);
    }
}
