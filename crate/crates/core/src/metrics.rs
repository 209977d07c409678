//! Detection-quality metrics over confusion counts, and window-level scoring
//! of event logs against generator labels.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rules::Category;
use crate::trafficgen::LabelFile;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.tn += o.tn;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Ratios in [0, 1]; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f_measure: Option<f64>,
    pub accuracy: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

pub fn score(c: ConfusionCounts) -> Metrics {
    let recall = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f_measure = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        recall,
        precision,
        f_measure,
        accuracy: ratio(c.tp + c.tn, c.total()),
        tnr: ratio(c.tn, c.tn + c.fp),
        fpr: ratio(c.fp, c.fp + c.tn),
        fnr: ratio(c.fn_, c.fn_ + c.tp),
    }
}

impl Metrics {
    pub fn rows(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("Recall", self.recall),
            ("Precision", self.precision),
            ("F-measure", self.f_measure),
            ("Accuracy", self.accuracy),
            ("TNR", self.tnr),
            ("FPR", self.fpr),
            ("FNR", self.fnr),
        ]
    }
}

/// Percentage at two decimals, or "undefined".
pub fn percent(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.2}%", x * 100.0),
        None => "undefined".to_string(),
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, v) in self.rows() {
            writeln!(f, "{name:<10} {:>10}", percent(v))?;
        }
        Ok(())
    }
}

/// Sounds (with categories) heard in each window.
pub type WindowSounds = BTreeMap<u64, Vec<(String, Category)>>;

/// Attack windows count as detected when their signature is satisfied;
/// normal windows are false positives when any anomalous sound fired.
pub fn confusion_for(label: &LabelFile, heard: &WindowSounds) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    let empty = Vec::new();
    for w in &label.windows {
        let sounds = heard.get(&w.window).unwrap_or(&empty);
        if w.attack {
            if w.satisfied_by(sounds.iter().map(|(s, _)| s.as_str())) {
                c.tp += 1;
            } else {
                c.fn_ += 1;
            }
        } else if sounds.iter().any(|(_, cat)| cat.is_anomalous()) {
            c.fp += 1;
        } else {
            c.tn += 1;
        }
    }
    c
}
