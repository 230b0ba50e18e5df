//! The layered ensemble: R representation models, each with tuned
//! per-perturbation fold regressors, predicting by an unweighted mean over
//! every regressor. Also hosts the PS-KNN baseline.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::damae::DamaeModel;
use crate::dataset::{ExpressionMatrix, ResponseTable, Stage};
use crate::error::{LeapError, Result};
use crate::evaluate::{Prediction, PredictionTable};
use crate::preprocess::PreprocessModel;
use crate::regress::{fit_knn, tune_and_fit, PerturbationFit, TuneConfig};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPerturbation {
    pub perturbation_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeapEnsemble {
    /// Standardization shared by every representation, when known.
    pub preprocess: Option<PreprocessModel>,
    pub representations: Vec<DamaeModel>,
    /// Per perturbation, one fit per representation (index-aligned).
    pub fits: BTreeMap<String, Vec<PerturbationFit>>,
    pub tune: TuneConfig,
    pub skipped: Vec<SkippedPerturbation>,
}

/// The CV seed used for representation `r`. Each representation draws its
/// own folds.
pub fn representation_tune_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, &["representation", &r.to_string()])
}

/// Embed `expr` with every representation.
pub fn embed_all(models: &[DamaeModel], expr: &ExpressionMatrix) -> Result<Vec<ExpressionMatrix>> {
    models.par_iter().map(|m| m.encode(expr)).collect()
}

/// Encode `expr` with each model and tune per-perturbation regressors on the
/// labelled rows of every embedding.
pub fn fit_leap(
    expr: &ExpressionMatrix,
    responses: &ResponseTable,
    models: Vec<DamaeModel>,
    tune: &TuneConfig,
) -> Result<LeapEnsemble> {
    expr.require_stage(Stage::Standardized)?;
    let embeddings = embed_all(&models, expr)?;
    fit_leap_embedded(models, &embeddings, responses, tune)
}

/// As [`fit_leap`], with the embeddings already computed (`embeddings[r]`
/// from `models[r]`). Rows of the embeddings without labels are ignored.
pub fn fit_leap_embedded(
    models: Vec<DamaeModel>,
    embeddings: &[ExpressionMatrix],
    responses: &ResponseTable,
    tune: &TuneConfig,
) -> Result<LeapEnsemble> {
    tune.validate()?;
    if models.is_empty() || models.len() != embeddings.len() {
        return Err(LeapError::validation(format!(
            "{} representation models with {} embeddings",
            models.len(),
            embeddings.len()
        )));
    }
    for e in embeddings {
        e.require_stage(Stage::Latent)?;
        if e.sample_ids() != embeddings[0].sample_ids() {
            return Err(LeapError::validation("embeddings must share one sample order"));
        }
    }
    let index = embeddings[0].sample_index();
    let labels = responses.by_perturbation()?;
    let mut tasks = Vec::new();
    let mut skipped = Vec::new();
    for (pid, by_sample) in &labels {
        let mut rows = Vec::with_capacity(by_sample.len());
        let mut y = Vec::with_capacity(by_sample.len());
        for (s, v) in by_sample {
            let row = index
                .get(s.as_str())
                .ok_or_else(|| LeapError::validation(format!("response for unknown sample \"{s}\" ({pid})")))?;
            rows.push(*row);
            y.push(*v);
        }
        if y.len() < tune.n_folds {
            let reason = format!("{} labelled samples for {} folds", y.len(), tune.n_folds);
            warn!("skipping perturbation {pid}: {reason}");
            skipped.push(SkippedPerturbation {
                perturbation_id: pid.clone(),
                reason,
            });
            continue;
        }
        tasks.push((pid.as_str(), rows, y));
    }

    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|r| (0..tasks.len()).map(move |t| (r, t)))
        .collect();
    let results: Vec<PerturbationFit> = jobs
        .par_iter()
        .map(|&(r, t)| {
            let (pid, rows, y) = &tasks[t];
            let emb = &embeddings[r];
            let x = emb.values().select(Axis(0), rows);
            let ids: Vec<String> = rows.iter().map(|&i| emb.sample_ids()[i].clone()).collect();
            let tissues: Option<Vec<String>> = emb.tissue().map(|t| rows.iter().map(|&i| t[i].clone()).collect());
            let cfg = TuneConfig {
                seed: representation_tune_seed(tune.seed, r),
                ..tune.clone()
            };
            let mut fit = tune_and_fit(x.view(), y, &ids, tissues.as_deref(), &cfg, pid)?;
            fit.representation = r;
            Ok(fit)
        })
        .collect::<Result<_>>()?;

    let mut fits: BTreeMap<String, Vec<PerturbationFit>> = BTreeMap::new();
    for fit in results {
        fits.entry(fit.perturbation_id.clone()).or_default().push(fit);
    }
    for v in fits.values_mut() {
        v.sort_by_key(|f| f.representation);
    }
    Ok(LeapEnsemble {
        preprocess: None,
        representations: models,
        fits,
        tune: tune.clone(),
        skipped,
    })
}

impl LeapEnsemble {
    pub fn with_preprocess(mut self, preprocess: PreprocessModel) -> Self {
        self.preprocess = Some(preprocess);
        self
    }

    pub fn perturbation_ids(&self) -> Vec<String> {
        self.fits.keys().cloned().collect()
    }

    pub fn n_regressors(&self, perturbation_id: &str) -> Option<usize> {
        self.fits
            .get(perturbation_id)
            .map(|f| f.iter().map(|p| p.fold_models.len()).sum())
    }

    pub fn predict<S: AsRef<str>>(&self, expr: &ExpressionMatrix, perturbation_ids: &[S]) -> Result<PredictionTable> {
        let all: Vec<usize> = (0..self.representations.len()).collect();
        self.predict_partial(expr, perturbation_ids, &all)
    }

    /// Average only over the regressors of the chosen representations.
    pub fn predict_partial<S: AsRef<str>>(
        &self,
        expr: &ExpressionMatrix,
        perturbation_ids: &[S],
        representations: &[usize],
    ) -> Result<PredictionTable> {
        self.check_subset(representations)?;
        expr.require_stage(Stage::Standardized)?;
        let embeddings: Vec<Option<ExpressionMatrix>> = (0..self.representations.len())
            .into_par_iter()
            .map(|r| {
                representations
                    .contains(&r)
                    .then(|| self.representations[r].encode(expr))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        self.predict_embedded_inner(&embeddings, perturbation_ids, representations)
    }

    /// Predict from precomputed embeddings (`embeddings[r]` from
    /// representation `r`, all with the same sample order).
    pub fn predict_embedded<S: AsRef<str>>(
        &self,
        embeddings: &[ExpressionMatrix],
        perturbation_ids: &[S],
        representations: &[usize],
    ) -> Result<PredictionTable> {
        self.check_subset(representations)?;
        if embeddings.len() != self.representations.len() {
            return Err(LeapError::validation(format!(
                "{} embeddings for {} representations",
                embeddings.len(),
                self.representations.len()
            )));
        }
        let wrapped: Vec<Option<ExpressionMatrix>> = embeddings
            .iter()
            .enumerate()
            .map(|(r, e)| representations.contains(&r).then(|| e.clone()))
            .collect();
        self.predict_embedded_inner(&wrapped, perturbation_ids, representations)
    }

    fn check_subset(&self, representations: &[usize]) -> Result<()> {
        if representations.is_empty() {
            return Err(LeapError::validation("representation subset is empty"));
        }
        if let Some(bad) = representations.iter().find(|&&r| r >= self.representations.len()) {
            return Err(LeapError::validation(format!(
                "representation index {bad} out of range (ensemble has {})",
                self.representations.len()
            )));
        }
        Ok(())
    }

    fn predict_embedded_inner<S: AsRef<str>>(
        &self,
        embeddings: &[Option<ExpressionMatrix>],
        perturbation_ids: &[S],
        representations: &[usize],
    ) -> Result<PredictionTable> {
        let unknown: Vec<&str> = perturbation_ids
            .iter()
            .map(AsRef::as_ref)
            .filter(|p| !self.fits.contains_key(*p))
            .collect();
        if !unknown.is_empty() {
            return Err(LeapError::validation(format!(
                "unknown perturbation ids: {}",
                unknown.join(", ")
            )));
        }
        let mut reps: Vec<usize> = representations.to_vec();
        reps.sort_unstable();
        reps.dedup();
        let sample_ids = embeddings
            .iter()
            .flatten()
            .next()
            .map(|e| e.sample_ids().to_vec())
            .unwrap_or_default();
        let pids: Vec<&str> = perturbation_ids.iter().map(AsRef::as_ref).collect();
        let columns: Vec<Vec<f64>> = pids
            .par_iter()
            .map(|pid| {
                let fits = &self.fits[*pid];
                let mut sum = vec![0.0; sample_ids.len()];
                let mut count = 0usize;
                for &r in &reps {
                    let emb = embeddings[r].as_ref().expect("selected representations are embedded");
                    for m in &fits[r].fold_models {
                        let p = m.predict(emb.values().view())?;
                        for (acc, v) in sum.iter_mut().zip(p.iter()) {
                            *acc += v;
                        }
                        count += 1;
                    }
                }
                Ok(sum.into_iter().map(|s| s / count as f64).collect())
            })
            .collect::<Result<_>>()?;
        let mut records = Vec::with_capacity(sample_ids.len() * perturbation_ids.len());
        for (i, s) in sample_ids.iter().enumerate() {
            for (pid, col) in perturbation_ids.iter().zip(&columns) {
                records.push(Prediction {
                    sample_id: s.clone(),
                    perturbation_id: pid.as_ref().to_string(),
                    value: col[i],
                });
            }
        }
        Ok(PredictionTable::new(records))
    }
}

/// Perturbation-specific K-nearest-neighbour baseline on standardized
/// expression.
#[derive(Debug, Clone)]
pub struct KnnBaseline {
    k: usize,
    train: Array2<f64>,
    gene_ids: Vec<String>,
    labelled: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

pub fn fit_knn_baseline(expr: &ExpressionMatrix, responses: &ResponseTable, k: usize) -> Result<KnnBaseline> {
    let index: HashMap<&str, usize> = expr.sample_index();
    let mut labelled = BTreeMap::new();
    for (pid, by_sample) in responses.by_perturbation()? {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (s, v) in by_sample {
            let row = index
                .get(s.as_str())
                .ok_or_else(|| LeapError::validation(format!("response for unknown sample \"{s}\" ({pid})")))?;
            rows.push(*row);
            y.push(v);
        }
        if y.len() < k {
            warn!(
                "skipping perturbation {pid} for KNN: {} labelled samples, k={k}",
                y.len()
            );
            continue;
        }
        labelled.insert(pid, (rows, y));
    }
    Ok(KnnBaseline {
        k,
        train: expr.values().clone(),
        gene_ids: expr.gene_ids().to_vec(),
        labelled,
    })
}

impl KnnBaseline {
    pub fn perturbation_ids(&self) -> Vec<String> {
        self.labelled.keys().cloned().collect()
    }

    pub fn predict<S: AsRef<str>>(&self, expr: &ExpressionMatrix, perturbation_ids: &[S]) -> Result<PredictionTable> {
        if expr.gene_ids() != self.gene_ids.as_slice() {
            return Err(LeapError::Dimension(
                "query genes differ from the training genes".into(),
            ));
        }
        let pids: Vec<&str> = perturbation_ids.iter().map(AsRef::as_ref).collect();
        let columns: Vec<Vec<f64>> = pids
            .par_iter()
            .map(|pid| {
                let (rows, y) = self
                    .labelled
                    .get(*pid)
                    .ok_or_else(|| LeapError::validation(format!("unknown perturbation id {pid}")))?;
                fit_knn(self.train.select(Axis(0), rows).view(), y, self.k)?.predict(expr.values().view())
            })
            .collect::<Result<_>>()?;
        let mut records = Vec::new();
        for (i, s) in expr.sample_ids().iter().enumerate() {
            for (pid, col) in perturbation_ids.iter().zip(&columns) {
                records.push(Prediction {
                    sample_id: s.clone(),
                    perturbation_id: pid.as_ref().to_string(),
                    value: col[i],
                });
            }
        }
        Ok(PredictionTable::new(records))
    }
}
