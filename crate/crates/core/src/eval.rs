//! MAE and R² pooled over every predicted season, per-category reports, and
//! plot-ready CSV exports.
//!
//! Note: overall R² is not a weighted mean of the per-category values. The
//! residual sums of squares add up across categories; the total sums do not.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::{CareerSequence, Category};
use crate::{Error, Result, TARGET_AGES};

fn check_pair(pred: &[[f64; 3]], actual: &[[f64; 3]]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::shape(actual.len(), pred.len()));
    }
    if actual.is_empty() {
        return Err(Error::UndefinedMetric("no predictions to score".into()));
    }
    Ok(())
}

fn pairs<'a>(pred: &'a [[f64; 3]], actual: &'a [[f64; 3]]) -> impl Iterator<Item = (f64, f64)> + 'a {
    pred.iter().flatten().copied().zip(actual.iter().flatten().copied())
}

/// Mean absolute error over all `3n` entries.
pub fn mae(pred: &[[f64; 3]], actual: &[[f64; 3]]) -> Result<f64> {
    check_pair(pred, actual)?;
    let total: f64 = pairs(pred, actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(total / (3 * actual.len()) as f64)
}

/// Residual sum of squares over all `3n` entries.
pub fn ss_res(pred: &[[f64; 3]], actual: &[[f64; 3]]) -> Result<f64> {
    check_pair(pred, actual)?;
    Ok(pairs(pred, actual).map(|(p, a)| (p - a) * (p - a)).sum())
}

/// `1 − SS_res / SS_tot`, with `SS_tot` taken about the pooled mean of `actual`.
pub fn r2(pred: &[[f64; 3]], actual: &[[f64; 3]]) -> Result<f64> {
    let res = ss_res(pred, actual)?;
    let n = (3 * actual.len()) as f64;
    let mean = actual.iter().flatten().sum::<f64>() / n;
    let tot: f64 = actual.iter().flatten().map(|a| (a - mean) * (a - mean)).sum();
    if tot <= 0.0 {
        return Err(Error::UndefinedMetric("R² needs actual values with non-zero variance".into()));
    }
    Ok(1.0 - res / tot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    /// `None` when the actual values have no variance.
    pub r2: Option<f64>,
    pub n: usize,
}

impl Metrics {
    pub fn compute(pred: &[[f64; 3]], actual: &[[f64; 3]]) -> Result<Self> {
        let r2 = match r2(pred, actual) {
            Ok(v) => Some(v),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self { mae: mae(pred, actual)?, r2, n: actual.len() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub player_id: String,
    pub player_name: String,
    pub actual: [f64; 3],
    pub predicted: [f64; 3],
    pub category: Option<Category>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub overall: Metrics,
    /// Keyed by category name; empty when no sequence has a category.
    pub per_category: BTreeMap<String, Metrics>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn from_rows(model_name: &str, rows: Vec<EvalRow>) -> Result<Self> {
        let split = |rs: &[&EvalRow]| -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
            (rs.iter().map(|r| r.predicted).collect(), rs.iter().map(|r| r.actual).collect())
        };
        let all: Vec<&EvalRow> = rows.iter().collect();
        let (p, a) = split(&all);
        let overall = Metrics::compute(&p, &a)?;

        let mut groups: BTreeMap<String, Vec<&EvalRow>> = BTreeMap::new();
        for r in &rows {
            if let Some(c) = r.category {
                groups.entry(c.as_str().to_string()).or_default().push(r);
            }
        }
        let per_category = groups
            .into_iter()
            .map(|(name, rs)| {
                let (p, a) = split(&rs);
                Ok((name, Metrics::compute(&p, &a)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { model_name: model_name.to_string(), overall, per_category, rows })
    }
}

/// Scores a per-player predictor over `seqs`, keeping their order in the rows.
pub fn evaluate<F>(model_name: &str, seqs: &[CareerSequence], mut predictor: F) -> Result<EvalReport>
where
    F: FnMut(&CareerSequence) -> Result<[f64; 3]>,
{
    let rows = seqs
        .iter()
        .map(|s| {
            Ok(EvalRow {
                player_id: s.player_id.clone(),
                player_name: s.player_name.clone(),
                actual: s.target,
                predicted: predictor(s)?,
                category: s.category,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rows(model_name, rows)
}

/// Like [`evaluate`] with predictions computed up front and keyed by player id.
pub fn evaluate_keyed(
    model_name: &str,
    seqs: &[CareerSequence],
    predictions: &BTreeMap<String, [f64; 3]>,
) -> Result<EvalReport> {
    evaluate(model_name, seqs, |s| {
        predictions
            .get(&s.player_id)
            .copied()
            .ok_or_else(|| Error::Invariant(format!("no prediction for player {}", s.player_id)))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveMode {
    Player,
    Category,
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn category_label(c: Option<Category>) -> &'static str {
    c.map_or("", Category::as_str)
}

/// `series,age,actual,predicted`. Player mode emits one series per player;
/// category mode emits the mean curve of each category (`all` when absent).
pub fn export_curves(report: &EvalReport, mode: CurveMode) -> Result<String> {
    let header = ["series", "age", "actual", "predicted"];
    let mut out = Vec::new();
    match mode {
        CurveMode::Player => {
            for r in &report.rows {
                for (j, age) in TARGET_AGES.iter().enumerate() {
                    out.push(vec![r.player_id.clone(), age.to_string(), num(r.actual[j]), num(r.predicted[j])]);
                }
            }
        }
        CurveMode::Category => {
            let mut groups: BTreeMap<&str, Vec<&EvalRow>> = BTreeMap::new();
            for r in &report.rows {
                groups.entry(r.category.map_or("all", Category::as_str)).or_default().push(r);
            }
            for (name, rs) in groups {
                let n = rs.len() as f64;
                for (j, age) in TARGET_AGES.iter().enumerate() {
                    let actual = rs.iter().map(|r| r.actual[j]).sum::<f64>() / n;
                    let predicted = rs.iter().map(|r| r.predicted[j]).sum::<f64>() / n;
                    out.push(vec![name.to_string(), age.to_string(), num(actual), num(predicted)]);
                }
            }
        }
    }
    csv_text(&header, out)
}

/// `age,actual,predicted,category`, one row per player and target season.
pub fn export_scatter(report: &EvalReport) -> Result<String> {
    let rows = report.rows.iter().flat_map(|r| {
        TARGET_AGES.iter().enumerate().map(move |(j, age)| {
            vec![age.to_string(), num(r.actual[j]), num(r.predicted[j]), category_label(r.category).to_string()]
        })
    });
    csv_text(&["age", "actual", "predicted", "category"], rows)
}

fn r2_cell(r2: Option<f64>) -> String {
    r2.map_or_else(String::new, num)
}

/// `model,mae,r2,n`, one row per report.
pub fn comparison_csv(reports: &[EvalReport]) -> Result<String> {
    csv_text(
        &["model", "mae", "r2", "n"],
        reports.iter().map(|r| {
            vec![r.model_name.clone(), num(r.overall.mae), r2_cell(r.overall.r2), r.overall.n.to_string()]
        }),
    )
}

/// `model,category,mae,r2,n`.
pub fn per_category_csv(reports: &[EvalReport]) -> Result<String> {
    let rows = reports.iter().flat_map(|r| {
        r.per_category.iter().map(move |(c, m)| {
            vec![r.model_name.clone(), c.clone(), num(m.mae), r2_cell(m.r2), m.n.to_string()]
        })
    });
    csv_text(&["model", "category", "mae", "r2", "n"], rows)
}

/// `player_id,player_name,category,actual_29..31,predicted_29..31`.
pub fn predictions_csv(report: &EvalReport) -> Result<String> {
    let mut header = vec!["player_id".to_string(), "player_name".into(), "category".into()];
    header.extend(TARGET_AGES.iter().map(|a| format!("actual_{a}")));
    header.extend(TARGET_AGES.iter().map(|a| format!("predicted_{a}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(
        &header,
        report.rows.iter().map(|r| {
            let mut v = vec![r.player_id.clone(), r.player_name.clone(), category_label(r.category).into()];
            v.extend(r.actual.iter().map(|&x| num(x)));
            v.extend(r.predicted.iter().map(|&x| num(x)));
            v
        }),
    )
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    model_name: &'a str,
    overall: &'a Metrics,
    per_category: &'a BTreeMap<String, Metrics>,
}

/// JSON array of `{model_name, overall, per_category}`.
pub fn summary_json(reports: &[EvalReport]) -> Result<String> {
    let entries: Vec<SummaryEntry> = reports
        .iter()
        .map(|r| SummaryEntry { model_name: &r.model_name, overall: &r.overall, per_category: &r.per_category })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries)?;
    s.push('\n');
    Ok(s)
}
