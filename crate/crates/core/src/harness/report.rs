use std::collections::BTreeMap;

use serde::Serialize;

/// A metric compared against a limit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub limit: f64,
    /// `le` when the value must not exceed the limit, `ge` otherwise.
    pub relation: &'static str,
    pub passed: bool,
}

/// Metrics and pass/fail checks of one experiment run. Keys are sorted, so
/// the serialized form is deterministic.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub metrics: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, Check>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    /// Record `value ≤ limit`. NaN fails.
    pub fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        let passed = value <= limit;
        self.checks.insert(name.to_string(), Check { value, limit, relation: "le", passed });
    }

    /// Record `value ≥ limit`. NaN fails.
    pub fn at_least(&mut self, name: &str, value: f64, limit: f64) {
        let passed = value >= limit;
        self.checks.insert(name.to_string(), Check { value, limit, relation: "ge", passed });
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.get(name)
    }

    pub fn passed(&self) -> bool {
        self.checks.values().all(|c| c.passed)
    }

    /// Merge another report, prefixing its keys.
    pub fn absorb(&mut self, prefix: &str, other: Report) {
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}{k}"), v);
        }
        for (k, v) in other.checks {
            self.checks.insert(format!("{prefix}{k}"), v);
        }
        self.warnings.extend(other.warnings);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are plain numbers and strings")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_fails_both_relations() {
        let mut r = Report::default();
        r.at_most("a", f64::NAN, 1.0);
        r.at_least("b", f64::NAN, 1.0);
        assert!(!r.check("a").unwrap().passed && !r.check("b").unwrap().passed);
        assert!(!r.passed());
    }

    #[test]
    fn serialization_is_sorted() {
        let mut r = Report::default();
        r.metric("zeta", 1.0);
        r.metric("alpha", 2.0);
        r.at_most("slope", 0.1, 0.2);
        let s = r.to_toml();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.contains("passed = true"));
    }
}
