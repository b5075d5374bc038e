//! Confusion counts, metrics and run comparison.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::Label;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {gold} gold labels, {predicted} predictions")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("empty confusion matrix")]
    Empty,
    #[error("run {run:?} covers a different document set than {reference:?}")]
    DocumentSetMismatch { run: String, reference: String },
    #[error("run {0:?} has duplicate document ids")]
    DuplicateDocument(String),
}

/// `harmful` is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(gold: &[Label], predicted: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (g, p) in gold.iter().zip(predicted) {
        match (g, p) {
            (Label::Harmful, Label::Harmful) => m.tp += 1,
            (Label::NonHarmful, Label::Harmful) => m.fp += 1,
            (Label::Harmful, Label::NonHarmful) => m.fn_ += 1,
            (Label::NonHarmful, Label::NonHarmful) => m.tn += 1,
        }
    }
    Ok(m)
}

/// Same as [`confusion`] for label strings.
pub fn confusion_from_strs<S: AsRef<str>>(gold: &[S], predicted: &[S]) -> Result<ConfusionMatrix, EvalError> {
    let parse = |v: &[S]| -> Result<Vec<Label>, EvalError> {
        v.iter()
            .map(|s| {
                s.as_ref()
                    .parse()
                    .map_err(|_| EvalError::UnknownLabel(s.as_ref().to_string()))
            })
            .collect()
    };
    confusion(&parse(gold)?, &parse(predicted)?)
}

/// Undefined ratios are `None`, never 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn f1_score(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    let (p, r) = (precision?, recall?);
    (p + r > 0.0).then(|| 2.0 * p * r / (p + r))
}

pub fn metrics(m: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if m.total() == 0 {
        return Err(EvalError::Empty);
    }
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    Ok(Metrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
        accuracy: (m.tp + m.tn) as f64 / m.total() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRun {
    pub name: String,
    pub doc_ids: Vec<String>,
    pub gold: Vec<Label>,
    pub predicted: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.1}%", x * 100.0))
}

impl Comparison {
    /// Aligned table: Recall, Precision, F1, Accuracy.
    pub fn to_text(&self) -> String {
        let header = ["Run", "Recall", "Precision", "F1", "Accuracy"];
        let rows: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    pct(r.metrics.recall),
                    pct(r.metrics.precision),
                    pct(r.metrics.f1),
                    pct(Some(r.metrics.accuracy)),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[&str]| {
            let mut s = format!("{:<w$}", cells[0], w = widths[0]);
            for (cell, w) in cells[1..].iter().zip(&widths[1..]) {
                write!(s, "  {cell:>w$}").unwrap();
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&mut out, &header);
        for row in &rows {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            line(&mut out, &cells);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

pub fn compare_runs(runs: &[NamedRun]) -> Result<Comparison, EvalError> {
    let mut reference: Option<(&str, BTreeSet<&str>)> = None;
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        if run.doc_ids.len() != run.gold.len() {
            return Err(EvalError::LengthMismatch {
                gold: run.gold.len(),
                predicted: run.doc_ids.len(),
            });
        }
        let ids: BTreeSet<&str> = run.doc_ids.iter().map(String::as_str).collect();
        if ids.len() != run.doc_ids.len() {
            return Err(EvalError::DuplicateDocument(run.name.clone()));
        }
        match &reference {
            None => reference = Some((&run.name, ids)),
            Some((name, set)) if *set != ids => {
                return Err(EvalError::DocumentSetMismatch {
                    run: run.name.clone(),
                    reference: name.to_string(),
                })
            }
            Some(_) => {}
        }
        let matrix = confusion(&run.gold, &run.predicted)?;
        rows.push(ComparisonRow {
            name: run.name.clone(),
            matrix,
            metrics: metrics(&matrix)?,
        });
    }
    Ok(Comparison { rows })
}
