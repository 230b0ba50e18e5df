//! End-to-end orchestration behind the `leap` command line: one function per
//! subcommand, all driven by a [`RunConfig`].

mod cache;
mod config;
mod corpus;
mod protocol;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

pub use cache::{Key, StageCache};
pub use config::{
    AblationParams, BaselineParams, Challenge, EnsembleParams, FitPopulation, OutputParams, Paths, PreprocessParams,
    RunConfig, Seeds, TaskConfig,
};
pub use corpus::{build_corpus, build_representation, load_corpus, Corpus, Representation};
pub use protocol::{evaluate_plan, plan_task, Heads, Variant, ABLATION_STEPS, LEAP, PS_KNN};

use crate::bundle;
use crate::damae::DamaeModel;
use crate::dataset::{self, format_real, generate_synthetic, ResponseTable};
use crate::ensemble::{fit_leap_embedded, LeapEnsemble};
use crate::error::{LeapError, Result};
use crate::evaluate::{
    score, write_report_csv, write_summary_json, EvaluationReport, MetricSummary, ModelReport, PredictionTable,
    RepeatScores, ScoreSet,
};
use crate::preprocess::{self, PreprocessModel};
use crate::seed::sha256_hex;

/// Run `f` on a pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LeapError::validation(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn output_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.paths.output.join(name)
}

fn stage_cache(cfg: &RunConfig) -> StageCache {
    StageCache::new(cfg.paths.output.join("cache"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub n_samples: usize,
    pub n_genes: usize,
    pub n_latent: usize,
    pub n_perturbations: usize,
    pub n_tissues: usize,
    pub n_responses: usize,
    pub signal_r2: f64,
    /// Non-zero planted coefficients per perturbation.
    pub active_per_perturbation: usize,
    pub seed: u64,
    pub files: Vec<PathBuf>,
}

/// Write the synthetic corpus to the configured input paths.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    let spec = cfg.synthetic_spec();
    let data = generate_synthetic(&spec).map_err(|e| e.in_stage("synth"))?;
    dataset::write_expression(&cfg.paths.expression, &data.expression)?;
    let mut files = vec![cfg.paths.expression.clone()];
    if let Some(meta) = &cfg.paths.metadata {
        dataset::write_metadata(meta, &data.expression)?;
        files.push(meta.clone());
    }
    dataset::write_responses(&cfg.paths.responses, &data.responses)?;
    files.push(cfg.paths.responses.clone());
    Ok(SynthSummary {
        n_samples: spec.n_samples,
        n_genes: spec.n_genes,
        n_latent: spec.n_latent,
        n_perturbations: spec.n_perturbations,
        n_tissues: spec.n_tissues,
        n_responses: data.responses.len(),
        signal_r2: spec.signal_r2,
        active_per_perturbation: spec.active_per_perturbation,
        seed: spec.seed,
        files,
    })
}

/// Fit the corpus-wide standardization and write it with the standardized
/// matrix.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<PreprocessModel> {
    let corpus = load_corpus(cfg)?;
    let pm = corpus::fit_preprocess(&corpus, None)?;
    let standardized = preprocess::apply(&pm, &corpus.log)?;
    write_json(&output_path(cfg, "preprocess.json"), &pm)?;
    dataset::write_expression(output_path(cfg, "standardized.csv"), &standardized)?;
    Ok(pm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamaeSummary {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub initial_validation_loss: f64,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

/// Train (or fetch from the cache) the representation ensemble on the
/// standardized corpus.
pub fn cmd_train_damae(cfg: &RunConfig) -> Result<Vec<DamaeModel>> {
    let corpus = load_corpus(cfg)?;
    let pm = corpus::fit_preprocess(&corpus, None)?;
    let standardized = preprocess::apply(&pm, &corpus.log)?;
    let models = corpus::train_representations(cfg, &standardized, &stage_cache(cfg))?;
    let summary: Vec<DamaeSummary> = models
        .iter()
        .map(|m| DamaeSummary {
            seed: m.config.seed,
            epochs: m.training_log.epochs.len(),
            best_epoch: m.training_log.best_epoch,
            initial_validation_loss: m.training_log.initial_validation_loss,
            best_validation_loss: m.training_log.best_validation_loss(),
            stopped_early: m.training_log.stopped_early,
        })
        .collect();
    write_json(&output_path(cfg, "damae_summary.json"), &summary)?;
    Ok(models)
}

/// Fit LEAP on every labelled sample and write the bundle.
pub fn cmd_fit(cfg: &RunConfig) -> Result<(LeapEnsemble, PathBuf)> {
    let corpus = load_corpus(cfg)?;
    let ens = fit_final(cfg, &corpus, &stage_cache(cfg))?;
    let path = output_path(cfg, "leap.bundle");
    bundle::save(&ens, &path)?;
    info!("wrote {}", path.display());
    Ok((ens, path))
}

fn fit_final(cfg: &RunConfig, corpus: &Corpus, cache: &StageCache) -> Result<LeapEnsemble> {
    let labelled = corpus.labelled_samples();
    let fit_samples = match cfg.preprocess.fit_population {
        FitPopulation::Corpus => None,
        FitPopulation::TrainSplit => Some(labelled.as_slice()),
    };
    let rep = build_representation(cfg, corpus, fit_samples, cache)?;
    let embeddings = rep
        .embeddings
        .iter()
        .map(|e| e.select_samples(&labelled))
        .collect::<Result<Vec<_>>>()?;
    let ens = fit_leap_embedded(rep.models, &embeddings, &corpus.responses, &cfg.tune_config())
        .map_err(|e| e.in_stage("fit"))?;
    Ok(ens.with_preprocess(rep.preprocess))
}

/// Predict from a bundle for raw TPM expression.
pub fn cmd_predict(
    bundle_path: &Path,
    expression: &Path,
    perturbations: Option<&[String]>,
    representations: Option<&[usize]>,
) -> Result<PredictionTable> {
    let ens = bundle::load(bundle_path).map_err(|e| e.in_stage("predict"))?;
    let pm = ens
        .preprocess
        .as_ref()
        .ok_or_else(|| LeapError::validation("bundle carries no preprocessing model"))?;
    let raw = dataset::load_expression(expression)?;
    let standardized = pm.transform_raw(&raw).map_err(|e| e.in_stage("predict"))?;
    let pids = match perturbations {
        Some(p) => p.to_vec(),
        None => ens.perturbation_ids(),
    };
    let all: Vec<usize> = (0..ens.representations.len()).collect();
    ens.predict_partial(&standardized, &pids, representations.unwrap_or(&all))
        .map_err(|e| e.in_stage("predict"))
}

/// Score a prediction file against the configured (curated) responses of
/// the samples and perturbations it covers.
pub fn cmd_evaluate(cfg: &RunConfig, predictions: &Path) -> Result<ScoreSet> {
    let preds = PredictionTable::read_csv(predictions)?;
    let responses = dataset::load_responses(&cfg.paths.responses)?;
    let curated = dataset::curate(&responses, &cfg.curation).map_err(|e| e.in_stage("curation"))?;
    let samples: std::collections::HashSet<&str> = preds.records().iter().map(|p| p.sample_id.as_str()).collect();
    let pids: std::collections::HashSet<&str> = preds.records().iter().map(|p| p.perturbation_id.as_str()).collect();
    let truth = ResponseTable::new(
        curated
            .restrict_samples(&samples)
            .into_records()
            .into_iter()
            .filter(|r| pids.contains(r.perturbation_id.as_str()))
            .collect(),
    )?;
    let scores = score(&truth, &preds).map_err(|e| e.in_stage("evaluate"))?;
    let report = EvaluationReport {
        task: "evaluate".into(),
        models: vec![ModelReport::new(
            "predictions",
            vec![RepeatScores {
                family: "all".into(),
                label: predictions.display().to_string(),
                scores: scores.clone(),
            }],
        )],
    };
    write_report_csv(&report, output_path(cfg, "evaluation.csv"))?;
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub leap_version: String,
    pub command: String,
    /// "complete", or "failed" when a stage aborted the run.
    pub status: String,
    /// The stage-labelled diagnostic of a failed run.
    pub error: Option<String>,
    pub config_sha256: String,
    pub seeds: Seeds,
    pub workers: usize,
    pub challenge: Challenge,
    pub n_repeats: usize,
    /// SHA-256 of each output file written by this run, by file name. A
    /// failed run lists only the files it finished.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvaluationReport,
    pub manifest: Manifest,
}

fn task_label(cfg: &RunConfig) -> String {
    match cfg.task.challenge {
        Challenge::RepeatedHoldout => "repeated_holdout",
        Challenge::LeaveOneTissueOut => "leave_one_tissue_out",
        Challenge::Transfer => "transfer",
    }
    .to_string()
}

/// Curation, preprocessing, representation training, per-split fitting and
/// scoring; writes `report.csv`, `summary.json`, `manifest.json` and, when
/// enabled, `leap.bundle`. A failing stage still leaves a manifest marked
/// "failed" that lists the outputs already written.
pub fn cmd_run(cfg: &RunConfig, workers: usize) -> Result<RunOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    let mut written = BTreeMap::new();
    let mut n_repeats = 0;
    let result = with_workers(workers, || -> Result<EvaluationReport> {
        let cache = stage_cache(cfg);
        let corpus = load_corpus(cfg)?;
        let plan = plan_task(cfg, &corpus)?;
        n_repeats = plan.repeats.len();
        let mut variants = vec![Variant::leap(cfg)];
        if cfg.baseline.knn {
            variants.push(Variant::knn(cfg));
        }
        let report = evaluate_plan(cfg, &corpus, &plan, &variants, &cache, &task_label(cfg))?;
        write_output(cfg, &mut written, "report.csv", |p| write_report_csv(&report, p))?;
        write_output(cfg, &mut written, "summary.json", |p| write_summary_json(&report, p))?;
        if cfg.output.bundle {
            let ens = fit_final(cfg, &corpus, &cache)?;
            write_output(cfg, &mut written, "leap.bundle", |p| bundle::save(&ens, p))?;
        }
        Ok(report)
    })
    .and_then(|r| r);
    let manifest = Manifest {
        leap_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "run".into(),
        status: if result.is_ok() { "complete" } else { "failed" }.into(),
        error: result.as_ref().err().map(|e| e.to_string()),
        config_sha256: cfg.hash()?,
        seeds: cfg.seeds(),
        workers,
        challenge: cfg.task.challenge,
        n_repeats,
        outputs: written,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let path = output_path(cfg, "manifest.json");
    match result {
        Ok(report) => {
            write_json(&path, &manifest)?;
            Ok(RunOutcome { report, manifest })
        }
        Err(e) => {
            // the original error matters more than a failure to record it
            if write_json(&path, &manifest).is_ok() {
                log::warn!("run failed; partial outputs recorded in {}", path.display());
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub step: String,
    pub n_repeats: usize,
    pub per_perturbation_spearman: MetricSummary,
    pub per_perturbation_pearson: MetricSummary,
    pub per_perturbation_mse: MetricSummary,
    pub overall_spearman: MetricSummary,
    pub overall_pearson: MetricSummary,
    pub overall_mse: MetricSummary,
    /// Change in mean per-perturbation Spearman from the previous step.
    pub delta_spearman: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub report: EvaluationReport,
    pub rows: Vec<AblationRow>,
}

/// Run the named pipeline variants on identical splits; writes
/// `ablation.csv` (one row per step) and the per-repeat
/// `ablation_report.csv`.
pub fn cmd_ablate(cfg: &RunConfig, steps: &[String], workers: usize) -> Result<AblationOutcome> {
    cfg.validate()?;
    if steps.is_empty() {
        return Err(LeapError::validation("no ablation steps given"));
    }
    let variants: Vec<Variant> = steps
        .iter()
        .map(|s| Variant::ablation_step(cfg, s))
        .collect::<Result<_>>()?;
    with_workers(workers, || -> Result<AblationOutcome> {
        let cache = stage_cache(cfg);
        let corpus = load_corpus(cfg)?;
        let plan = plan_task(cfg, &corpus)?;
        let report = evaluate_plan(
            cfg,
            &corpus,
            &plan,
            &variants,
            &cache,
            &format!("ablation/{}", task_label(cfg)),
        )?;
        let mut rows: Vec<AblationRow> = Vec::new();
        for m in &report.models {
            let s = &m.summary;
            let prev = rows.last().and_then(|r| r.per_perturbation_spearman.mean);
            rows.push(AblationRow {
                step: m.model.clone(),
                n_repeats: m.repeats.len(),
                delta_spearman: prev.zip(s.per_perturbation_spearman.mean).map(|(a, b)| b - a),
                per_perturbation_spearman: s.per_perturbation_spearman.clone(),
                per_perturbation_pearson: s.per_perturbation_pearson.clone(),
                per_perturbation_mse: s.per_perturbation_mse.clone(),
                overall_spearman: s.overall_spearman.clone(),
                overall_pearson: s.overall_pearson.clone(),
                overall_mse: s.overall_mse.clone(),
            });
        }
        write_report_csv(&report, output_path(cfg, "ablation_report.csv"))?;
        write_ablation_csv(&rows, &output_path(cfg, "ablation.csv"))?;
        Ok(AblationOutcome { report, rows })
    })?
}

fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let io = |e| LeapError::io(path, e);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let metrics = [
        "per_perturbation_spearman",
        "per_perturbation_pearson",
        "per_perturbation_mse",
        "overall_spearman",
        "overall_pearson",
        "overall_mse",
    ];
    let mut header = vec!["step".to_string(), "n_repeats".to_string()];
    for m in metrics {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sd"));
    }
    header.push("delta_spearman".into());
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let cell = |v: Option<f64>| v.map(format_real).unwrap_or_else(|| "NA".into());
    for r in rows {
        let mut cells = vec![r.step.clone(), r.n_repeats.to_string()];
        for s in [
            &r.per_perturbation_spearman,
            &r.per_perturbation_pearson,
            &r.per_perturbation_mse,
            &r.overall_spearman,
            &r.overall_pearson,
            &r.overall_mse,
        ] {
            cells.push(cell(s.mean));
            cells.push(cell(s.sd));
        }
        cells.push(cell(r.delta_spearman));
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| LeapError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| LeapError::io(path, e))
}

/// Write one output file and record its SHA-256 under its name.
fn write_output(
    cfg: &RunConfig,
    written: &mut BTreeMap<String, String>,
    name: &str,
    write: impl FnOnce(&Path) -> Result<()>,
) -> Result<()> {
    let path = output_path(cfg, name);
    write(&path)?;
    let bytes = std::fs::read(&path).map_err(|e| LeapError::io(&path, e))?;
    written.insert(name.to_string(), sha256_hex(&bytes));
    Ok(())
}
