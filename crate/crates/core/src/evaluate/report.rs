use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScoreSet;
use crate::dataset::format_real;
use crate::error::{LeapError, Result};
use crate::stats;

/// Scores for one split repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatScores {
    pub family: String,
    pub label: String,
    pub scores: ScoreSet,
}

/// Distribution of one metric across repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Repeats with a defined value.
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1).
    pub sd: Option<f64>,
    pub median: Option<f64>,
    /// 95% percentile interval.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                n: 0,
                mean: None,
                sd: None,
                median: None,
                lower: None,
                upper: None,
            };
        }
        let (lower, upper) = percentile_interval(values, 0.95);
        Self {
            n: values.len(),
            mean: Some(stats::mean(values)),
            sd: (values.len() >= 2).then(|| stats::sample_sd(values)),
            median: Some(stats::median(values)),
            lower: Some(lower),
            upper: Some(upper),
        }
    }
}

/// Per-perturbation averages and pooled metrics, each summarized over
/// repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryBlock {
    pub per_perturbation_spearman: MetricSummary,
    pub per_perturbation_pearson: MetricSummary,
    pub per_perturbation_mse: MetricSummary,
    pub overall_spearman: MetricSummary,
    pub overall_pearson: MetricSummary,
    pub overall_mse: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub repeats: Vec<RepeatScores>,
    pub summary: SummaryBlock,
    /// One block per split family (per held-out tissue for
    /// leave-one-tissue-out); empty when every family has one repeat.
    pub family_summaries: BTreeMap<String, SummaryBlock>,
}

impl ModelReport {
    pub fn new(model: &str, repeats: Vec<RepeatScores>) -> Self {
        let summary = aggregate(&repeats);
        let mut families: BTreeMap<String, Vec<RepeatScores>> = BTreeMap::new();
        for r in &repeats {
            families.entry(r.family.clone()).or_default().push(r.clone());
        }
        let family_summaries = if families.values().all(|v| v.len() == 1) {
            BTreeMap::new()
        } else {
            families.into_iter().map(|(f, v)| (f, aggregate(&v))).collect()
        };
        Self {
            model: model.to_string(),
            repeats,
            summary,
            family_summaries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: String,
    pub models: Vec<ModelReport>,
}

impl EvaluationReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == name)
    }
}

/// Equal-tailed percentile interval (type-7 quantiles) at `level`.
pub fn percentile_interval(values: &[f64], level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    (stats::quantile(values, tail), stats::quantile(values, 1.0 - tail))
}

/// Summarize each metric across repeats; undefined values are skipped.
pub fn aggregate(repeats: &[RepeatScores]) -> SummaryBlock {
    let collect = |f: &dyn Fn(&ScoreSet) -> Option<f64>| -> MetricSummary {
        let vals: Vec<f64> = repeats.iter().filter_map(|r| f(&r.scores)).collect();
        MetricSummary::of(&vals)
    };
    SummaryBlock {
        per_perturbation_spearman: collect(&|s| s.mean_spearman()),
        per_perturbation_pearson: collect(&|s| s.mean_pearson()),
        per_perturbation_mse: collect(&|s| s.mean_mse()),
        overall_spearman: collect(&|s| s.overall().spearman),
        overall_pearson: collect(&|s| s.overall().pearson),
        overall_mse: collect(&|s| Some(s.overall().mse)),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_else(|| "NA".into())
}

/// One row per (model, repeat, perturbation-or-OVERALL).
pub fn write_report_csv(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| LeapError::io(path, e);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "model,family,repeat,perturbation_id,spearman,pearson,mse,n_pairs").map_err(io)?;
    for m in &report.models {
        for r in &m.repeats {
            for row in &r.scores.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    m.model,
                    r.family,
                    r.label,
                    row.perturbation_id,
                    cell(row.spearman),
                    cell(row.pearson),
                    format_real(row.mse),
                    row.n_pairs
                )
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    task: &'a str,
    models: Vec<SummaryEntry<'a>>,
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    model: &'a str,
    n_repeats: usize,
    summary: &'a SummaryBlock,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    families: &'a BTreeMap<String, SummaryBlock>,
}

/// Aggregate-only JSON document: mean (sd) plus median and 95% interval
/// for each metric and model.
pub fn write_summary_json(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let doc = SummaryDoc {
        task: &report.task,
        models: report
            .models
            .iter()
            .map(|m| SummaryEntry {
                model: &m.model,
                n_repeats: m.repeats.len(),
                summary: &m.summary,
                families: &m.family_summaries,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LeapError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| LeapError::io(path, e))
}
