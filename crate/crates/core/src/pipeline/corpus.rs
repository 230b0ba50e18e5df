use std::collections::HashSet;

use log::{info, warn};

use super::cache::{Key, StageCache};
use super::config::RunConfig;
use crate::damae::{train_seed_ensemble, DamaeModel};
use crate::dataset::{self, curate, ExpressionMatrix, ResponseTable};
use crate::ensemble::embed_all;
use crate::error::{LeapError, Result};
use crate::preprocess::{self, PreprocessModel};

/// Expression and curated labels, ready for representation learning.
#[derive(Debug, Clone)]
pub struct Corpus {
    /// log₂(TPM+1) restricted to the selected genes.
    pub log: ExpressionMatrix,
    pub responses: ResponseTable,
    pub dropped_unshared_genes: Vec<String>,
}

impl Corpus {
    /// Samples with at least one label, in expression-file order.
    pub fn labelled_samples(&self) -> Vec<String> {
        let labelled: HashSet<&str> = self.responses.records().iter().map(|r| r.sample_id.as_str()).collect();
        self.log
            .sample_ids()
            .iter()
            .filter(|s| labelled.contains(s.as_str()))
            .cloned()
            .collect()
    }
}

pub fn load_expression(cfg: &RunConfig) -> Result<ExpressionMatrix> {
    match &cfg.paths.metadata {
        Some(meta) => dataset::load_expression_with_metadata(&cfg.paths.expression, meta),
        None => dataset::load_expression(&cfg.paths.expression),
    }
}

/// Load, curate, log-transform and select genes.
pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let raw = load_expression(cfg).map_err(|e| e.in_stage("load"))?;
    let responses = dataset::load_responses(&cfg.paths.responses).map_err(|e| e.in_stage("load"))?;
    build_corpus(cfg, raw, &responses)
}

pub fn build_corpus(cfg: &RunConfig, raw: ExpressionMatrix, responses: &ResponseTable) -> Result<Corpus> {
    let excluded: HashSet<&str> = cfg.curation.exclude_samples.iter().map(String::as_str).collect();
    let keep: Vec<usize> = (0..raw.n_samples())
        .filter(|&i| !excluded.contains(raw.sample_ids()[i].as_str()))
        .collect();
    let raw = raw.select_rows(&keep);
    let curated = curate(responses, &cfg.curation).map_err(|e| e.in_stage("curation"))?;
    let present: HashSet<&str> = raw.sample_ids().iter().map(String::as_str).collect();
    let responses = curated.restrict_samples(&present);
    if responses.len() < curated.len() {
        warn!(
            "dropped {} responses for samples missing from the expression file",
            curated.len() - responses.len()
        );
    }
    if responses.is_empty() {
        return Err(LeapError::validation("no responses left after curation").in_stage("curation"));
    }

    let log = preprocess::log_transform(&raw).map_err(|e| e.in_stage("preprocess"))?;
    let groups = log.samples_by_dataset();
    let matrices: Vec<ExpressionMatrix> = groups.values().map(|rows| log.select_rows(rows)).collect();
    let refs: Vec<&ExpressionMatrix> = matrices.iter().collect();
    let k = cfg.preprocess.k_per_dataset.min(log.n_genes());
    if k < cfg.preprocess.k_per_dataset {
        info!(
            "k_per_dataset {} exceeds the {} genes available; using {k}",
            cfg.preprocess.k_per_dataset,
            log.n_genes()
        );
    }
    let selection = preprocess::select_genes(&refs, k).map_err(|e| e.in_stage("preprocess"))?;
    let log = log.select_genes(&selection.genes)?;
    info!(
        "corpus: {} samples, {} genes selected from {} dataset(s), {} responses",
        log.n_samples(),
        log.n_genes(),
        groups.len(),
        responses.len()
    );
    Ok(Corpus {
        log,
        responses,
        dropped_unshared_genes: selection.dropped_unshared,
    })
}

/// Standardization, the DAMAE seed ensemble, and every sample's embedding
/// under each model.
#[derive(Debug, Clone)]
pub struct Representation {
    pub preprocess: PreprocessModel,
    pub standardized: ExpressionMatrix,
    pub models: Vec<DamaeModel>,
    pub embeddings: Vec<ExpressionMatrix>,
}

pub fn fit_preprocess(corpus: &Corpus, fit_samples: Option<&[String]>) -> Result<PreprocessModel> {
    let (population, tag) = match fit_samples {
        None => (corpus.log.clone(), "corpus".to_string()),
        Some(s) => (
            corpus.log.select_samples(s)?,
            format!("train split ({} samples)", s.len()),
        ),
    };
    preprocess::fit(&population, corpus.log.gene_ids(), &tag).map_err(|e| e.in_stage("preprocess"))
}

/// Train (or fetch from the cache) the DAMAE ensemble on the standardized
/// corpus.
pub fn train_representations(
    cfg: &RunConfig,
    standardized: &ExpressionMatrix,
    cache: &StageCache,
) -> Result<Vec<DamaeModel>> {
    let seeds = cfg.seeds().damae;
    let mut damae_cfg = cfg.damae.clone();
    damae_cfg.seed = 0;
    let mut key = Key::new("damae");
    key.matrix(standardized).json(&damae_cfg)?.json(&seeds)?;
    cache
        .get_or_compute("damae", &key, || {
            info!("training {} DAMAE models", seeds.len());
            train_seed_ensemble(standardized, &damae_cfg, &seeds)
        })
        .map_err(|e| e.in_stage("train-damae"))
}

/// Everything needed to regress on representations fitted from
/// `fit_samples` (the whole corpus when `None`).
pub fn build_representation(
    cfg: &RunConfig,
    corpus: &Corpus,
    fit_samples: Option<&[String]>,
    cache: &StageCache,
) -> Result<Representation> {
    let pm = fit_preprocess(corpus, fit_samples)?;
    let standardized = preprocess::apply(&pm, &corpus.log).map_err(|e| e.in_stage("preprocess"))?;
    let models = train_representations(cfg, &standardized, cache)?;
    let embeddings = embed_all(&models, &standardized)?;
    Ok(Representation {
        preprocess: pm,
        standardized,
        models,
        embeddings,
    })
}
