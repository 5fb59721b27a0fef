use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::InstallClass;
use crate::error::{Error, Result};

/// Confusion counts with "incorrectly installed" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, actual: InstallClass, predicted: InstallClass) {
        match (actual, predicted) {
            (InstallClass::Incorrect, InstallClass::Incorrect) => self.tp += 1,
            (InstallClass::Correct, InstallClass::Incorrect) => self.fp += 1,
            (InstallClass::Correct, InstallClass::Correct) => self.tn += 1,
            (InstallClass::Incorrect, InstallClass::Correct) => self.fn_ += 1,
        }
    }

    pub fn from_predictions(actual: &[InstallClass], predicted: &[InstallClass]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::Contract(format!(
                "{} labels for {} predictions",
                actual.len(),
                predicted.len()
            )));
        }
        let mut c = Self::default();
        for (&a, &p) in actual.iter().zip(predicted) {
            c.record(a, p);
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Accuracy, precision (PPV), recall (TPR), FDR and FNR. A ratio whose
/// denominator is zero is reported as 0, so FDR or FNR is then 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fdr: f64,
    pub fnr: f64,
    pub counts: ConfusionCounts,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts) -> Result<Self> {
        let total = counts.total();
        if total == 0 {
            return Err(Error::Contract("no samples were evaluated".into()));
        }
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        Ok(Self {
            accuracy: ratio(counts.tp + counts.tn, total),
            precision,
            recall,
            fdr: 1.0 - precision,
            fnr: 1.0 - recall,
            counts,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = &self.counts;
        write!(
            f,
            "accuracy {:.4}  precision {:.4}  recall {:.4}  FDR {:.4}  FNR {:.4}  (TP {} FP {} TN {} FN {})",
            self.accuracy, self.precision, self.recall, self.fdr, self.fnr, c.tp, c.fp, c.tn, c.fn_
        )
    }
}
