//! Metrics, per-perturbation and pooled scoring, split planners for the
//! three evaluation challenges, and report assembly.

mod metrics;
mod report;
mod splits;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{format_real, ResponseTable};
use crate::error::{LeapError, Result};

pub use metrics::{mse, pearson, spearman};
pub use report::{
    aggregate, percentile_interval, write_report_csv, write_summary_json, EvaluationReport, MetricSummary, ModelReport,
    RepeatScores, SummaryBlock,
};
pub use splits::{
    plan_leave_one_tissue_out, plan_repeated_holdout, plan_transfer, SplitPlan, SplitRepeat, SplitStrategy,
};

/// Label used for the pooled row.
pub const OVERALL: &str = "OVERALL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub perturbation_id: String,
    pub value: f64,
}

/// Predicted responses keyed by (sample, perturbation).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionTable {
    records: Vec<Prediction>,
}

impl PredictionTable {
    pub fn new(records: Vec<Prediction>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[Prediction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self) -> HashMap<(&str, &str), f64> {
        self.records
            .iter()
            .map(|p| ((p.sample_id.as_str(), p.perturbation_id.as_str()), p.value))
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| LeapError::io(path, e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "sample_id,perturbation_id,prediction").map_err(io)?;
        for p in &self.records {
            writeln!(w, "{},{},{}", p.sample_id, p.perturbation_id, format_real(p.value)).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LeapError::io(path, e))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "sample_id,perturbation_id,prediction")) => {}
            _ => {
                return Err(LeapError::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: "expected header \"sample_id,perturbation_id,prediction\"".into(),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let parse_err = |message: String| LeapError::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message,
            };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 3 {
                return Err(parse_err(format!("expected 3 cells, found {}", cells.len())));
            }
            let value = cells[2]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(format!("non-numeric cell \"{}\"", cells[2])))?;
            records.push(Prediction {
                sample_id: cells[0].to_string(),
                perturbation_id: cells[1].to_string(),
                value,
            });
        }
        Ok(Self { records })
    }
}

/// Metrics for one perturbation, or for all pairs pooled (`OVERALL`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub perturbation_id: String,
    /// `None` when undefined (fewer than two pairs or constant input).
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
    pub mse: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    /// Per-perturbation rows (sorted by id) followed by the OVERALL row.
    pub rows: Vec<MetricRow>,
    /// Perturbations with an undefined correlation, left out of the averages.
    pub excluded_from_correlation: usize,
}

impl ScoreSet {
    pub fn overall(&self) -> &MetricRow {
        self.rows.last().expect("score sets always carry an OVERALL row")
    }

    pub fn per_perturbation(&self) -> &[MetricRow] {
        &self.rows[..self.rows.len() - 1]
    }

    fn mean_defined(&self, pick: impl Fn(&MetricRow) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = self.per_perturbation().iter().filter_map(pick).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Mean per-perturbation Spearman over defined correlations.
    pub fn mean_spearman(&self) -> Option<f64> {
        self.mean_defined(|r| r.spearman)
    }

    pub fn mean_pearson(&self) -> Option<f64> {
        self.mean_defined(|r| r.pearson)
    }

    pub fn mean_mse(&self) -> Option<f64> {
        self.mean_defined(|r| Some(r.mse))
    }
}

fn metric_row(id: &str, truth: &[f64], pred: &[f64]) -> Result<MetricRow> {
    Ok(MetricRow {
        perturbation_id: id.to_string(),
        spearman: spearman(truth, pred)?,
        pearson: pearson(truth, pred)?,
        mse: mse(truth, pred)?,
        n_pairs: truth.len(),
    })
}

/// Score predictions against every pair in `truth`: one row per perturbation
/// plus a pooled OVERALL row.
pub fn score(truth: &ResponseTable, preds: &PredictionTable) -> Result<ScoreSet> {
    if truth.is_empty() {
        return Err(LeapError::validation("nothing to score"));
    }
    let lookup = preds.lookup();
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in truth.records() {
        let p = lookup
            .get(&(r.sample_id.as_str(), r.perturbation_id.as_str()))
            .ok_or_else(|| {
                LeapError::validation(format!(
                    "no prediction for sample \"{}\", perturbation \"{}\"",
                    r.sample_id, r.perturbation_id
                ))
            })?;
        let g = groups.entry(&r.perturbation_id).or_default();
        g.0.push(r.value);
        g.1.push(*p);
    }
    let mut rows = Vec::with_capacity(groups.len() + 1);
    let (mut all_t, mut all_p) = (Vec::new(), Vec::new());
    for (id, (t, p)) in &groups {
        rows.push(metric_row(id, t, p)?);
        all_t.extend_from_slice(t);
        all_p.extend_from_slice(p);
    }
    let excluded = rows.iter().filter(|r| r.spearman.is_none()).count();
    rows.push(metric_row(OVERALL, &all_t, &all_p)?);
    Ok(ScoreSet {
        rows,
        excluded_from_correlation: excluded,
    })
}
