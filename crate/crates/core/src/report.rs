//! Outcome records for property checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One verified property. `passed` holds exactly when `margin >= -tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub passed: bool,
    /// Worst normalized slack `(rhs - lhs) / scale` over all samples.
    pub margin: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub provenance: String,
    #[serde(default)]
    pub details: BTreeMap<String, f64>,
}

impl CheckReport {
    pub fn new(check_id: impl Into<String>, margin: f64, tolerance: f64, samples: usize, provenance: impl Into<String>) -> Self {
        Self {
            check_id: check_id.into(),
            passed: !(margin < -tolerance) && !margin.is_nan(),
            margin,
            tolerance,
            samples,
            provenance: provenance.into(),
            details: BTreeMap::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    /// Fold a sequence of per-sample slacks into one report.
    pub fn from_slacks(
        check_id: impl Into<String>,
        slacks: impl IntoIterator<Item = f64>,
        tolerance: f64,
        provenance: impl Into<String>,
    ) -> Self {
        let mut margin = f64::INFINITY;
        let mut samples = 0;
        let mut violations = 0.0;
        for s in slacks {
            samples += 1;
            if s.is_nan() {
                margin = f64::NAN;
            } else if !margin.is_nan() {
                margin = margin.min(s);
            }
            if !(s >= -tolerance) {
                violations += 1.0;
            }
        }
        if samples == 0 {
            margin = 0.0;
        }
        Self::new(check_id, margin, tolerance, samples, provenance).with_detail("violations", violations)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_iff_margin_within_tolerance() {
        assert!(CheckReport::new("a", -1e-12, 1e-10, 1, "").passed);
        assert!(!CheckReport::new("a", -1e-9, 1e-10, 1, "").passed);
        assert!(!CheckReport::new("a", f64::NAN, 1e-10, 1, "").passed);
    }

    #[test]
    fn slacks_fold_to_minimum() {
        let r = CheckReport::from_slacks("b", [0.5, -0.1, 2.0], 1e-3, "");
        assert_eq!(r.margin, -0.1);
        assert_eq!(r.samples, 3);
        assert_eq!(r.details["violations"], 1.0);
        assert!(!r.passed);
    }
}
