//! Check reports: one item per evaluated inequality or identity.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inapplicable,
    Convergent,
    Divergent,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inapplicable => "INAPPLICABLE",
            Verdict::Convergent => "CONVERGENT",
            Verdict::Divergent => "DIVERGENT",
            Verdict::Inconclusive => "INCONCLUSIVE",
        };
        f.write_str(s)
    }
}

/// Non-finite numbers go to JSON as `null` and come back as NaN.
mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub check: String,
    pub inputs: serde_json::Value,
    #[serde(with = "nullable")]
    pub lhs: f64,
    #[serde(with = "nullable")]
    pub rhs: f64,
    #[serde(with = "nullable")]
    pub ratio: f64,
    pub verdict: Verdict,
    #[serde(with = "nullable")]
    pub tolerance: f64,
    /// Signed defect of an identity, when the item checks one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckItem {
    pub fn new(check: impl Into<String>, inputs: serde_json::Value, lhs: f64, rhs: f64, verdict: Verdict, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            inputs,
            lhs,
            rhs,
            ratio: lhs / rhs,
            verdict,
            tolerance,
            residual: None,
            note: None,
        }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn with_residual(mut self, residual: f64) -> Self {
        self.residual = Some(residual);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub verdict: Verdict,
    pub items: Vec<CheckItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Report {
    /// Overall verdict: FAIL if any item fails, PASS if at least one passes,
    /// otherwise INAPPLICABLE.
    pub fn from_items(check: impl Into<String>, items: Vec<CheckItem>, warnings: Vec<String>) -> Self {
        let verdict = if items.iter().any(|i| i.verdict.is_failure()) {
            Verdict::Fail
        } else if items.iter().any(|i| i.verdict == Verdict::Pass) {
            Verdict::Pass
        } else {
            Verdict::Inapplicable
        };
        Self {
            check: check.into(),
            verdict,
            items,
            warnings,
        }
    }

    pub fn passed(&self) -> bool {
        !self.verdict.is_failure()
    }

    pub fn item(&self, check: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.check == check)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per item, for sweeps.
    pub fn write_csv(&self, path: &Path) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["check", "inputs", "lhs", "rhs", "ratio", "verdict", "tolerance"])?;
        for it in &self.items {
            w.write_record([
                it.check.clone(),
                it.inputs.to_string(),
                format!("{:?}", it.lhs),
                format!("{:?}", it.rhs),
                format!("{:?}", it.ratio),
                it.verdict.to_string(),
                format!("{:?}", it.tolerance),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| AnalysisError::Io(e.into_error()))?;
        fs::write(path, bytes)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn json_roundtrip_keeps_nan_as_null() {
        let r = Report::from_items(
            "demo",
            vec![
                CheckItem::new("a", json!({"t": 1.0}), 1.0, 2.0, Verdict::Pass, 0.05),
                CheckItem::new("b", json!({}), f64::NAN, f64::NAN, Verdict::Inapplicable, 0.05),
            ],
            vec![],
        );
        assert_eq!(r.verdict, Verdict::Pass);
        let text = r.to_json();
        assert!(text.contains("\"lhs\": null"));
        let back: Report = serde_json::from_str(&text).unwrap();
        assert!(back.items[1].lhs.is_nan());
        assert_eq!(back.items[0], r.items[0]);
    }

    #[test]
    fn any_failure_fails_the_report() {
        let r = Report::from_items(
            "demo",
            vec![
                CheckItem::new("a", json!({}), 1.0, 2.0, Verdict::Pass, 0.0),
                CheckItem::new("b", json!({}), 3.0, 2.0, Verdict::Fail, 0.0),
            ],
            vec![],
        );
        assert!(!r.passed());
    }
}
