//! Confusion matrices and per-class precision / recall / F1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verification::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("confusion matrix is empty")]
    Empty,
    #[error("gold and predicted label lists differ in length ({gold} vs {predicted})")]
    LengthMismatch { gold: usize, predicted: usize },
}

/// Rows are gold labels, columns predictions, both in [`Label::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn from_labels(gold: &[Label], predicted: &[Label]) -> Result<Self, MetricsError> {
        if gold.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch {
                gold: gold.len(),
                predicted: predicted.len(),
            });
        }
        let mut m = Self::default();
        for (g, p) in gold.iter().zip(predicted) {
            m.add(*g, *p);
        }
        Ok(m)
    }

    pub fn add(&mut self, gold: Label, predicted: Label) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn gold_count(&self, label: Label) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    pub fn predicted_count(&self, label: Label) -> u64 {
        self.counts.iter().map(|row| row[label.index()]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold count.
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// In [`Label::ALL`] order.
    pub classes: Vec<ClassMetrics>,
    /// Averages weighted by gold-class share.
    pub weighted: Averages,
    pub accuracy: f64,
    pub total: u64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Zero denominators give 0.
pub fn compute_metrics(confusion: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = confusion.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let classes: Vec<ClassMetrics> = Label::ALL
        .iter()
        .map(|&label| {
            let tp = confusion.counts[label.index()][label.index()];
            let precision = ratio(tp, confusion.predicted_count(label));
            let recall = ratio(tp, confusion.gold_count(label));
            ClassMetrics {
                label,
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: confusion.gold_count(label),
            }
        })
        .collect();
    let weigh =
        |f: fn(&ClassMetrics) -> f64| -> f64 { classes.iter().map(|c| c.support as f64 / total as f64 * f(c)).sum() };
    let weighted = Averages {
        precision: weigh(|c| c.precision),
        recall: weigh(|c| c.recall),
        f1: weigh(|c| c.f1),
    };
    Ok(MetricsReport {
        classes,
        weighted,
        accuracy: ratio(confusion.correct(), total),
        total,
        confusion: *confusion,
    })
}

impl MetricsReport {
    pub fn class(&self, label: Label) -> &ClassMetrics {
        &self.classes[label.index()]
    }

    /// The table layout used for published results.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14}{:>10}{:>10}{:>10}{:>10}",
            "", "Precision", "Recall", "F1-score", "Support"
        );
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
                c.label.as_str(),
                c.precision,
                c.recall,
                c.f1,
                c.support
            );
        }
        let _ = writeln!(
            out,
            "{:<14}{:>10.2}{:>10.2}{:>10.2}{:>10}",
            "Weighted Avg", self.weighted.precision, self.weighted.recall, self.weighted.f1, self.total
        );
        out
    }

    /// Rows keyed like the table: one per class plus `Weighted Avg`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut rows: Vec<serde_json::Value> = self
            .classes
            .iter()
            .map(|c| {
                serde_json::json!({
                    "class": c.label.as_str(),
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1_score": c.f1,
                    "support": c.support,
                })
            })
            .collect();
        rows.push(serde_json::json!({
            "class": "Weighted Avg",
            "precision": self.weighted.precision,
            "recall": self.weighted.recall,
            "f1_score": self.weighted.f1,
            "support": self.total,
        }));
        serde_json::json!({
            "rows": rows,
            "accuracy": self.accuracy,
            "confusion": self.confusion.counts,
        })
    }
}

/// Published per-class (precision, recall, F1) for reference models, in
/// NO_EVIDENCE, SUPPORT, CONTRADICT, weighted order. These come from
/// fine-tuned external models and cannot be reproduced offline.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceResult {
    pub model: &'static str,
    pub rows: [(f64, f64, f64); 4],
}

pub const REFERENCE_XLM_ROBERTA: ReferenceResult = ReferenceResult {
    model: "XLM-RoBERTa-large",
    rows: [
        (0.91, 0.96, 0.95),
        (0.91, 0.75, 0.82),
        (0.59, 0.81, 0.68),
        (0.87, 0.85, 0.85),
    ],
};

pub const REFERENCE_DEBERTA: ReferenceResult = ReferenceResult {
    model: "DeBERTa-v3-large",
    rows: [
        (0.88, 0.86, 0.87),
        (0.87, 0.92, 0.90),
        (0.88, 0.81, 0.85),
        (0.88, 0.88, 0.88),
    ],
};

/// Zero-shot weighted (precision, recall, F1).
pub const REFERENCE_GPT4_ZERO_SHOT: (f64, f64, f64) = (0.81, 0.80, 0.79);

/// Cleaned-dataset class shares: NO_EVIDENCE, SUPPORT, CONTRADICT.
pub const REFERENCE_CLASS_DISTRIBUTION: [f64; 3] = [0.36, 0.42, 0.22];
