//! Confusion matrices, per-class precision/recall/F1 and the support-weighted
//! F1 used as the headline score, plus table and JSON rendering of reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CategoryLabel, Language};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("gold and predicted label lists differ in length ({gold} vs {pred})")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("weighted F1 is undefined when the total support is zero")]
    EmptyEvaluation,
}

/// Rows are gold labels, columns predicted labels, both in
/// [`CategoryLabel`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; 3]; 3]);

impl ConfusionMatrix {
    pub fn get(&self, gold: CategoryLabel, pred: CategoryLabel) -> u64 {
        self.0[gold.index()][pred.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.0[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.0.iter().map(|r| r[c]).sum()
    }

    /// Fraction of records on the diagonal; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return 0.0;
        }
        (0..3).map(|c| self.0[c][c]).sum::<u64>() as f64 / n as f64
    }
}

pub fn confusion(golds: &[CategoryLabel], preds: &[CategoryLabel]) -> Result<ConfusionMatrix, MetricsError> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            gold: golds.len(),
            pred: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (g, p) in golds.iter().zip(preds) {
        cm.0[g.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl ClassMetrics {
    /// Builds metrics from precision and recall, deriving F1 (0 when both are 0).
    pub fn from_pr(precision: f64, recall: f64, support: u64) -> Self {
        ClassMetrics {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            support,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 per class. Zero denominators give 0.
pub fn per_class(cm: &ConfusionMatrix) -> [ClassMetrics; 3] {
    std::array::from_fn(|c| {
        let tp = cm.0[c][c];
        ClassMetrics::from_pr(ratio(tp, cm.col_sum(c)), ratio(tp, cm.row_sum(c)), cm.row_sum(c))
    })
}

/// `Σ_c support_c · f1_c / Σ_c support_c`.
pub fn weighted_f1(metrics: &[ClassMetrics; 3]) -> Result<f64, MetricsError> {
    let total: u64 = metrics.iter().map(|m| m.support).sum();
    if total == 0 {
        return Err(MetricsError::EmptyEvaluation);
    }
    Ok(metrics
        .iter()
        .map(|m| m.support as f64 / total as f64 * m.f1)
        .sum())
}

/// Unweighted mean of the class F1 scores. Reported for reference only.
pub fn macro_f1(metrics: &[ClassMetrics; 3]) -> f64 {
    metrics.iter().map(|m| m.f1).sum::<f64>() / 3.0
}

/// Fixed two-decimal rendering with round-half-up on the decimal value
/// (so 0.855 renders as "0.86" despite its binary representation).
pub fn format_2dp(x: f64) -> String {
    let scaled = x * 100.0;
    // strip binary noise below 1e-6 of a hundredth before rounding
    let cleaned = (scaled * 1e6).round() / 1e6;
    let hundredths = (cleaned + 0.5).floor();
    let v = hundredths / 100.0;
    format!("{v:.2}")
}

/// One evaluated model on one language: a Table-3/4 row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub model: String,
    pub language: Language,
    pub per_class: [ClassMetrics; 3],
    pub weighted_f1: f64,
    /// Hash of the run manifest that produced the evaluated model.
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PerClassJson {
    #[serde(rename = "Homophobic")]
    homophobic: ClassMetrics,
    #[serde(rename = "Transphobic")]
    transphobic: ClassMetrics,
    #[serde(rename = "Non-anti-LGBT+content")]
    non_anti_lgbt: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportJson {
    model: String,
    language: Language,
    per_class: PerClassJson,
    weighted_f1: f64,
    manifest: String,
}

impl EvaluationReport {
    pub fn from_predictions(
        model: impl Into<String>,
        language: Language,
        golds: &[CategoryLabel],
        preds: &[CategoryLabel],
        manifest: impl Into<String>,
    ) -> Result<Self, MetricsError> {
        let cm = confusion(golds, preds)?;
        let per_class = per_class(&cm);
        Ok(EvaluationReport {
            model: model.into(),
            language,
            weighted_f1: weighted_f1(&per_class)?,
            per_class,
            manifest: manifest.into(),
        })
    }

    /// `P R F1 | P R F1 | P R F1 | wF1` in class order, two decimals.
    pub fn table_cells(&self) -> String {
        let mut s = String::new();
        for m in &self.per_class {
            write!(
                s,
                "{} {} {} | ",
                format_2dp(m.precision),
                format_2dp(m.recall),
                format_2dp(m.f1)
            )
            .unwrap();
        }
        s.push_str(&format_2dp(self.weighted_f1));
        s
    }

    /// Model name padded to a fixed column, then [`Self::table_cells`].
    pub fn table_row(&self) -> String {
        format!("{:<14}{}", self.model, self.table_cells())
    }

    pub fn to_json(&self) -> String {
        let [h, t, n] = self.per_class;
        let j = ReportJson {
            model: self.model.clone(),
            language: self.language,
            per_class: PerClassJson {
                homophobic: h,
                transphobic: t,
                non_anti_lgbt: n,
            },
            weighted_f1: self.weighted_f1,
            manifest: self.manifest.clone(),
        };
        serde_json::to_string_pretty(&j).expect("report serializes") + "\n"
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        let j: ReportJson = serde_json::from_str(s)?;
        Ok(EvaluationReport {
            model: j.model,
            language: j.language,
            per_class: [j.per_class.homophobic, j.per_class.transphobic, j.per_class.non_anti_lgbt],
            weighted_f1: j.weighted_f1,
            manifest: j.manifest,
        })
    }
}

/// Header lines for a table of [`EvaluationReport::table_row`] rows.
pub fn table_header() -> String {
    format!(
        "{:<14}{:<15}| {:<15}| {:<15}| {}\n{:<14}{:<15}| {:<15}| {:<15}| {}",
        "Model",
        "Homophobic",
        "Transphobic",
        "Non-anti-LGBT+",
        "Weighted",
        "",
        "P    R    F1",
        "P    R    F1",
        "P    R    F1",
        "F1"
    )
}

/// Renders several reports as one table, rows in the given order.
pub fn render_table(title: &str, reports: &[EvaluationReport]) -> String {
    let mut s = format!("{title}\n{}\n", table_header());
    for r in reports {
        s.push_str(&r.table_row());
        s.push('\n');
    }
    s
}
