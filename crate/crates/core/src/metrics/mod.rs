//! Multiclass evaluation.
//!
//! Per-class scores are one-vs-rest: class `k` is positive, all others are
//! negative. Any ratio with a zero denominator is reported as 0.

mod render;

pub use render::{render_delta, render_report, ReportFormat};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("{truth} true labels but {pred} predictions")]
    Length { truth: usize, pred: usize },
    #[error("undefined input: {0}")]
    Undefined(String),
    #[error("unknown report format {0:?} (expected plain-table, csv-pack or json-doc)")]
    Format(String),
}

/// `K×K` counts, rows are true classes and columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds a matrix from row-major nested counts.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, MetricsError> {
        let k = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != k) {
            return Err(MetricsError::Undefined(format!(
                "row of length {} in a {k}-class matrix",
                r.len()
            )));
        }
        Ok(Self {
            classes: k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.classes).map(|i| self.row(i).to_vec()).collect()
    }

    /// Row sums, the number of true instances of each class.
    pub fn supports(&self) -> Vec<u64> {
        (0..self.classes).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn predicted_totals(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|j| (0..self.classes).map(|i| self.get(i, j)).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    /// `true,pred_0,…,pred_{K-1}` followed by one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true");
        for j in 0..self.classes {
            s.push_str(&format!(",pred_{j}"));
        }
        s.push('\n');
        for i in 0..self.classes {
            s.push_str(&i.to_string());
            for v in self.row(i) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::Length {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= classes) {
            return Err(MetricsError::Label { label, classes });
        }
        cm.counts[t * classes + p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub mcc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `2PR / (P + R)`, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

/// Matthews correlation from binary counts, 0 when any margin is empty.
pub fn binary_mcc(tp: u64, fp: u64, fn_: u64, tn: u64) -> f64 {
    let [tp, fp, fn_, tn] = [tp, fp, fn_, tn].map(|v| v as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    ratio(tp * tn - fp * fn_, den)
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let total = cm.total();
    let supports = cm.supports();
    let predicted = cm.predicted_totals();
    (0..cm.classes())
        .map(|k| {
            let tp = cm.get(k, k);
            let fp = predicted[k] - tp;
            let fn_ = supports[k] - tp;
            let tn = total - tp - fp - fn_;
            let precision = ratio(tp as f64, (tp + fp) as f64);
            let recall = ratio(tp as f64, (tp + fn_) as f64);
            ClassMetrics {
                class: k,
                mcc: binary_mcc(tp, fp, fn_, tn),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: supports[k],
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
}

pub fn aggregate(cm: &ConfusionMatrix, per_class: &[ClassMetrics]) -> Result<Aggregates, MetricsError> {
    let total = cm.total();
    if cm.classes() == 0 || total == 0 {
        return Err(MetricsError::Undefined("confusion matrix is empty".into()));
    }
    if per_class.len() != cm.classes() {
        return Err(MetricsError::Undefined(format!(
            "{} per-class entries for {} classes",
            per_class.len(),
            cm.classes()
        )));
    }
    let k = per_class.len() as f64;
    let n = total as f64;
    let mut macro_avg = Averages::default();
    let mut weighted_avg = Averages::default();
    for m in per_class {
        let w = m.support as f64;
        macro_avg.precision += m.precision;
        macro_avg.recall += m.recall;
        macro_avg.f1 += m.f1;
        weighted_avg.precision += w * m.precision;
        weighted_avg.recall += w * m.recall;
        weighted_avg.f1 += w * m.f1;
    }
    for (avg, den) in [(&mut macro_avg, k), (&mut weighted_avg, n)] {
        avg.precision /= den;
        avg.recall /= den;
        avg.f1 /= den;
    }
    Ok(Aggregates {
        accuracy: cm.trace() as f64 / n,
        macro_avg,
        weighted_avg,
        total,
    })
}

/// Everything one evaluation produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self, MetricsError> {
        let classes = per_class_metrics(&cm);
        let agg = aggregate(&cm, &classes)?;
        Ok(Self {
            classes,
            accuracy: agg.accuracy,
            macro_avg: agg.macro_avg,
            weighted_avg: agg.weighted_avg,
            total: agg.total,
            confusion: cm,
        })
    }

    pub fn evaluate(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<Self, MetricsError> {
        Self::from_confusion(confusion_matrix(y_true, y_pred, classes)?)
    }
}
