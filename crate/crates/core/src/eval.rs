//! Confusion matrices, one-vs-rest precision/recall/F1, accuracy, and the
//! text evaluation report.

use crate::dataio::Emotion;
use crate::error::{Error, Result};

/// 3x3 counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> usize {
        self.counts.iter().map(|row| row[c]).sum()
    }
}

/// Count (true, predicted) pairs.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "{} true vs {} predicted labels",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::data("confusion matrix of zero samples".to_string()));
    }
    let mut counts = [[0usize; 3]; 3];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t > 2 || p > 2 {
            return Err(Error::data(format!("class label out of range: true {t}, pred {p}")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// One-vs-rest (precision, recall, F1) for one class; 0/0 cases are 0.
pub fn precision_recall_f1(cm: &ConfusionMatrix, class: usize) -> (f64, f64, f64) {
    let tp = cm.counts[class][class];
    let fp = cm.col_sum(class) - tp;
    let fnn = cm.row_sum(class) - tp;
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fnn == 0 { 0.0 } else { tp as f64 / (tp + fnn) as f64 };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// F1 from a precision/recall pair directly; 0/0 is 0.
pub fn f1_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// trace / total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::data("accuracy of empty matrix".to_string()));
    }
    let trace: usize = (0..3).map(|c| cm.counts[c][c]).sum();
    Ok(trace as f64 / total as f64)
}

/// Everything the evaluate command reports.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub confusion: ConfusionMatrix,
    /// Per class (precision, recall, f1) in class-code order.
    pub per_class: [(f64, f64, f64); 3],
    pub accuracy: f64,
    pub model_id: String,
}

impl EvaluationReport {
    pub fn from_labels(y_true: &[usize], y_pred: &[usize], model_id: &str) -> Result<Self> {
        let cm = confusion_matrix(y_true, y_pred)?;
        let per_class = [
            precision_recall_f1(&cm, 0),
            precision_recall_f1(&cm, 1),
            precision_recall_f1(&cm, 2),
        ];
        let accuracy = accuracy(&cm)?;
        Ok(EvaluationReport {
            confusion: cm,
            per_class,
            accuracy,
            model_id: model_id.to_string(),
        })
    }

    /// Aligned text table (two-decimal metrics) plus the confusion matrix.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("evaluation report ({})\n\n", self.model_id));
        s.push_str("Emotion    P     R     F1\n");
        for class in [Emotion::Good, Emotion::Neutral, Emotion::Bad] {
            let (p, r, f1) = self.per_class[class.code()];
            let flag = if self.confusion.row_sum(class.code()) == 0 { " (no samples)" } else { "" };
            s.push_str(&format!("{:<9}{:>5.2}{:>6.2}{:>6.2}{flag}\n", class.name(), p, r, f1));
        }
        s.push_str(&format!("Accuracy: {:.2}\n\n", self.accuracy));
        s.push_str("confusion matrix (rows = true, cols = predicted)\n");
        s.push_str("           bad  neutral  good\n");
        for t in [Emotion::Bad, Emotion::Neutral, Emotion::Good] {
            let row = self.confusion.counts[t.code()];
            s.push_str(&format!(
                "{:<9}{:>6}{:>9}{:>6}\n",
                t.name(),
                row[Emotion::Bad.code()],
                row[Emotion::Neutral.code()],
                row[Emotion::Good.code()]
            ));
        }
        s
    }

    /// Machine-readable key=value lines at full precision.
    pub fn render_machine(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("model_id={}\n", self.model_id));
        s.push_str(&format!("accuracy={}\n", self.accuracy));
        for c in 0..3 {
            let (p, r, f1) = self.per_class[c];
            let name = Emotion::from_code(c).unwrap().name();
            s.push_str(&format!("{name}.precision={p}\n{name}.recall={r}\n{name}.f1={f1}\n"));
        }
        for t in 0..3 {
            for p in 0..3 {
                s.push_str(&format!("confusion[{t}][{p}]={}\n", self.confusion.counts[t][p]));
            }
        }
        s
    }
}
