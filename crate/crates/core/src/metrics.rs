//! Accuracy, per-class precision/recall/F-score, unweighted macro averages
//! and confusion matrices.
//!
//! Undefined ratios (zero denominators) are reported as 0 with a flag set so
//! a minority class with no predictions is visible rather than silently
//! averaged in.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::MetricsError;

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(class_names: Vec<String>) -> Self {
        let c = class_names.len();
        Self { class_names, counts: vec![vec![0; c]; c] }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    /// Predicted `c` but truly another class.
    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.num_classes()).filter(|&t| t != c).map(|t| self.counts[t][c]).sum()
    }

    /// Truly `c` but predicted another class.
    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.num_classes()).filter(|&p| p != c).map(|p| self.counts[c][p]).sum()
    }
}

/// Tally `(truth, prediction)` pairs into a `C x C` matrix.
pub fn confusion_matrix(truths: &[usize], preds: &[usize], class_names: Vec<String>) -> Result<ConfusionMatrix, MetricsError> {
    if truths.len() != preds.len() {
        return Err(MetricsError::Length(truths.len(), preds.len()));
    }
    let mut cm = ConfusionMatrix::zeros(class_names);
    let c = cm.num_classes();
    for (&t, &p) in truths.iter().zip(preds) {
        if let Some(&value) = [t, p].iter().find(|&&v| v >= c) {
            return Err(MetricsError::ClassOutOfRange { value, classes: c });
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    match cm.total() {
        0 => Err(MetricsError::Empty),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    /// TP + FP == 0
    pub precision_undefined: bool,
    /// TP + FN == 0
    pub recall_undefined: bool,
    /// precision + recall == 0
    pub fscore_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn per_class_prf(cm: &ConfusionMatrix, class: usize) -> ClassMetrics {
    let tp = cm.true_positives(class);
    let (precision, precision_undefined) = ratio(tp, tp + cm.false_positives(class));
    let (recall, recall_undefined) = ratio(tp, tp + cm.false_negatives(class));
    let (fscore, fscore_undefined) = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), false)
    } else {
        (0.0, true)
    };
    ClassMetrics { precision, recall, fscore, precision_undefined, recall_undefined, fscore_undefined }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Mean of the per-class F-scores (not the F-score of the macro P/R).
    pub macro_fscore: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

pub fn macro_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let accuracy = accuracy(cm)?;
    let per_class: Vec<ClassMetrics> = (0..cm.num_classes()).map(|c| per_class_prf(cm, c)).collect();
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        accuracy,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_fscore: mean(|m| m.fscore),
        per_class: per_class.clone(),
        confusion: cm.clone(),
    })
}

impl MetricsReport {
    pub fn from_predictions(truths: &[usize], preds: &[usize], class_names: Vec<String>) -> Result<Self, MetricsError> {
        macro_metrics(&confusion_matrix(truths, preds, class_names)?)
    }

    /// `metric,value` lines, a blank line, then the labeled matrix grid
    /// (rows are true classes, columns predictions).
    pub fn to_text(&self) -> String {
        let mut s = String::from("metric,value\n");
        let mut line = |k: &str, v: f64| writeln!(s, "{k},{v:.6}").expect("write to string");
        line("accuracy", self.accuracy);
        line("macro_precision", self.macro_precision);
        line("macro_recall", self.macro_recall);
        line("macro_fscore", self.macro_fscore);
        for (name, m) in self.confusion.class_names.iter().zip(&self.per_class) {
            line(&format!("precision[{name}]"), m.precision);
            line(&format!("recall[{name}]"), m.recall);
            line(&format!("fscore[{name}]"), m.fscore);
        }
        for (name, m) in self.confusion.class_names.iter().zip(&self.per_class) {
            let flags: Vec<&str> = [
                (m.precision_undefined, "precision"),
                (m.recall_undefined, "recall"),
                (m.fscore_undefined, "fscore"),
            ]
            .iter()
            .filter(|f| f.0)
            .map(|f| f.1)
            .collect();
            if !flags.is_empty() {
                writeln!(s, "undefined[{name}],{}", flags.join("|")).expect("write to string");
            }
        }
        s.push('\n');
        s.push_str("true\\pred");
        for name in &self.confusion.class_names {
            write!(s, ",{name}").expect("write to string");
        }
        s.push('\n');
        for (name, row) in self.confusion.class_names.iter().zip(&self.confusion.counts) {
            s.push_str(name);
            for v in row {
                write!(s, ",{v}").expect("write to string");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
