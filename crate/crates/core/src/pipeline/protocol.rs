use std::collections::{BTreeMap, HashSet};

use log::info;
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::cache::StageCache;
use super::config::{Challenge, FitPopulation, RunConfig};
use super::corpus::{build_representation, Corpus, Representation};
use crate::dataset::{ExpressionMatrix, ResponseTable};
use crate::ensemble::{fit_knn_baseline, fit_leap_embedded, LeapEnsemble};
use crate::error::{LeapError, Result};
use crate::evaluate::{
    plan_leave_one_tissue_out, plan_repeated_holdout, plan_transfer, score, EvaluationReport, ModelReport, Prediction,
    PredictionTable, RepeatScores, SplitPlan,
};
use crate::regress::{refit_full, Grouping, TuneConfig};

pub const LEAP: &str = "LEAP";
pub const PS_KNN: &str = "PS-KNN";

/// How a model's predictions are formed from the fitted ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    /// Every fold model of the selected representations.
    Ensemble,
    /// Representation 0 only, one model refitted on the whole training set
    /// at the chosen alpha.
    SingleModel,
    /// Representation 0 reused R times, each copy tuned on its own folds.
    OneRepresentationReplicated,
    Knn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub heads: Heads,
    /// Representations averaged for `Heads::Ensemble`; empty means all.
    pub representations: Vec<usize>,
    pub fit_population: FitPopulation,
    pub grouping: Grouping,
}

impl Variant {
    pub fn leap(cfg: &RunConfig) -> Self {
        Self {
            name: LEAP.into(),
            heads: Heads::Ensemble,
            representations: cfg.ensemble.representations_subset.clone(),
            fit_population: cfg.preprocess.fit_population,
            grouping: cfg.tune.grouping,
        }
    }

    pub fn knn(cfg: &RunConfig) -> Self {
        Self {
            name: PS_KNN.into(),
            heads: Heads::Knn,
            ..Self::leap(cfg)
        }
    }

    /// The named ablation step.
    pub fn ablation_step(cfg: &RunConfig, step: &str) -> Result<Self> {
        let base = Self {
            name: step.to_string(),
            representations: Vec::new(),
            ..Self::leap(cfg)
        };
        Ok(match step {
            "single_model" => Self {
                heads: Heads::SingleModel,
                ..base
            },
            "fold_ensemble" => Self {
                representations: vec![0],
                ..base
            },
            "full_leap" => base,
            "one_representation_25" => Self {
                heads: Heads::OneRepresentationReplicated,
                ..base
            },
            "knn" => Self {
                heads: Heads::Knn,
                ..base
            },
            "fit_population_corpus" => Self {
                fit_population: FitPopulation::Corpus,
                ..base
            },
            "fit_population_train" => Self {
                fit_population: FitPopulation::TrainSplit,
                ..base
            },
            "grouping_by_sample" => Self {
                grouping: Grouping::BySample,
                ..base
            },
            "grouping_grouped_by_tissue" => Self {
                grouping: Grouping::GroupedByTissue,
                ..base
            },
            "grouping_leave_one_tissue_out" => Self {
                grouping: Grouping::LeaveOneTissueOut,
                ..base
            },
            other => {
                return Err(LeapError::validation(format!(
                    "unknown ablation step \"{other}\"; expected one of {}",
                    ABLATION_STEPS.join(", ")
                )))
            }
        })
    }
}

pub const ABLATION_STEPS: [&str; 10] = [
    "single_model",
    "fold_ensemble",
    "full_leap",
    "one_representation_25",
    "knn",
    "fit_population_corpus",
    "fit_population_train",
    "grouping_by_sample",
    "grouping_grouped_by_tissue",
    "grouping_leave_one_tissue_out",
];

/// Split plan for the configured challenge over the labelled samples.
pub fn plan_task(cfg: &RunConfig, corpus: &Corpus) -> Result<SplitPlan> {
    let seed = cfg.seeds().split;
    let samples = corpus.labelled_samples();
    let t = &cfg.task;
    let labels = |which: &str, f: fn(&ExpressionMatrix) -> Option<&[String]>| -> Result<Vec<String>> {
        let all = f(&corpus.log).ok_or_else(|| {
            LeapError::validation(format!(
                "the {:?} challenge needs {which} labels in the metadata",
                t.challenge
            ))
        })?;
        let index = corpus.log.sample_index();
        Ok(samples.iter().map(|s| all[index[s.as_str()]].clone()).collect())
    };
    match t.challenge {
        Challenge::RepeatedHoldout => plan_repeated_holdout(&samples, t.holdout_fraction, t.repeats, seed),
        Challenge::LeaveOneTissueOut => {
            let tissues = labels("tissue", ExpressionMatrix::tissue)?;
            plan_leave_one_tissue_out(&samples, &tissues, t.test_subset_size, t.n_bootstrap, seed)
        }
        Challenge::Transfer => {
            let tags = labels("dataset_tag", ExpressionMatrix::dataset_tag)?;
            let pick = |tag: &str| -> Vec<String> {
                samples
                    .iter()
                    .zip(&tags)
                    .filter(|(_, t)| t.as_str() == tag)
                    .map(|(s, _)| s.clone())
                    .collect()
            };
            plan_transfer(
                &pick(&t.train_domain),
                &pick(&t.test_domain),
                t.removed_per_repeat,
                t.repeats,
                seed,
            )
        }
    }
    .map_err(|e| e.in_stage("split"))
}

/// Representations keyed by the training set they were standardized on.
pub struct RepresentationStore<'a> {
    cfg: &'a RunConfig,
    corpus: &'a Corpus,
    cache: &'a StageCache,
    corpus_wide: Option<Representation>,
}

impl<'a> RepresentationStore<'a> {
    pub fn new(cfg: &'a RunConfig, corpus: &'a Corpus, cache: &'a StageCache) -> Self {
        Self {
            cfg,
            corpus,
            cache,
            corpus_wide: None,
        }
    }

    pub fn get(&mut self, population: FitPopulation, train: &[String]) -> Result<Representation> {
        match population {
            FitPopulation::Corpus => {
                if self.corpus_wide.is_none() {
                    self.corpus_wide = Some(build_representation(self.cfg, self.corpus, None, self.cache)?);
                }
                Ok(self.corpus_wide.clone().unwrap())
            }
            FitPopulation::TrainSplit => build_representation(self.cfg, self.corpus, Some(train), self.cache),
        }
    }
}

fn rows_of(m: &ExpressionMatrix, ids: &[String]) -> Result<ExpressionMatrix> {
    m.select_samples(ids)
}

fn fit_ensemble(
    rep: &Representation,
    train: &[String],
    responses: &ResponseTable,
    tune: &TuneConfig,
) -> Result<LeapEnsemble> {
    let embeddings: Vec<ExpressionMatrix> = rep
        .embeddings
        .iter()
        .map(|e| rows_of(e, train))
        .collect::<Result<_>>()?;
    fit_leap_embedded(rep.models.clone(), &embeddings, responses, tune)
}

/// Ensembles already fitted on one training set, reused across variants
/// that differ only in how they average.
#[derive(Default)]
pub struct FittedEnsembles {
    fitted: Vec<((FitPopulation, Grouping), LeapEnsemble)>,
}

impl FittedEnsembles {
    fn get_or_fit(
        &mut self,
        key: (FitPopulation, Grouping),
        fit: impl FnOnce() -> Result<LeapEnsemble>,
    ) -> Result<&LeapEnsemble> {
        let pos = match self.fitted.iter().position(|(k, _)| *k == key) {
            Some(p) => p,
            None => {
                self.fitted.push((key, fit()?));
                self.fitted.len() - 1
            }
        };
        Ok(&self.fitted[pos].1)
    }
}

/// Predictions of one variant for `test` after training on `train`.
pub fn predict_variant(
    variant: &Variant,
    rep: &Representation,
    train: &[String],
    test: &[String],
    responses: &ResponseTable,
    cfg: &RunConfig,
    fitted: &mut FittedEnsembles,
) -> Result<PredictionTable> {
    let train_set: HashSet<&str> = train.iter().map(String::as_str).collect();
    let train_responses = responses.restrict_samples(&train_set);
    let tune = TuneConfig {
        grouping: variant.grouping,
        ..cfg.tune_config()
    };
    let test_emb: Vec<ExpressionMatrix> = rep.embeddings.iter().map(|e| rows_of(e, test)).collect::<Result<_>>()?;
    let key = (variant.fit_population, variant.grouping);
    match variant.heads {
        Heads::Knn => {
            let knn = fit_knn_baseline(&rows_of(&rep.standardized, train)?, &train_responses, cfg.baseline.k)?;
            knn.predict(&rows_of(&rep.standardized, test)?, &knn.perturbation_ids())
        }
        Heads::Ensemble => {
            let ens = fitted.get_or_fit(key, || fit_ensemble(rep, train, &train_responses, &tune))?;
            let subset: Vec<usize> = if variant.representations.is_empty() {
                (0..ens.representations.len()).collect()
            } else {
                variant.representations.clone()
            };
            ens.predict_embedded(&test_emb, &ens.perturbation_ids(), &subset)
        }
        Heads::SingleModel => {
            // representation 0 is tuned identically whatever R is
            let ens = fitted.get_or_fit(key, || fit_ensemble(rep, train, &train_responses, &tune))?;
            let train_emb = rows_of(&rep.embeddings[0], train)?;
            let index = train_emb.sample_index();
            let labels = train_responses.by_perturbation()?;
            let mut records = Vec::new();
            let mut columns = Vec::new();
            for (pid, fits) in &ens.fits {
                let rows: Vec<usize> = labels[pid].keys().map(|s| index[s.as_str()]).collect();
                let y: Vec<f64> = labels[pid].values().copied().collect();
                let x = train_emb.values().select(Axis(0), &rows);
                let model = refit_full(x.view(), &y, fits[0].best_alpha, &tune)?;
                columns.push((pid, model.predict(test_emb[0].values().view())?));
            }
            for (i, s) in test_emb[0].sample_ids().iter().enumerate() {
                for (pid, col) in &columns {
                    records.push(Prediction {
                        sample_id: s.clone(),
                        perturbation_id: pid.to_string(),
                        value: col[i],
                    });
                }
            }
            Ok(PredictionTable::new(records))
        }
        Heads::OneRepresentationReplicated => {
            let r = rep.models.len();
            let replicated = Representation {
                models: vec![rep.models[0].clone(); r],
                embeddings: vec![rep.embeddings[0].clone(); r],
                ..rep.clone()
            };
            let ens = fit_ensemble(&replicated, train, &train_responses, &tune)?;
            let test_emb = vec![test_emb[0].clone(); r];
            let all: Vec<usize> = (0..r).collect();
            ens.predict_embedded(&test_emb, &ens.perturbation_ids(), &all)
        }
    }
}

/// Truth for the predicted perturbations of the given samples.
fn truth_for(responses: &ResponseTable, samples: &[String], preds: &PredictionTable) -> Result<ResponseTable> {
    let keep: HashSet<&str> = samples.iter().map(String::as_str).collect();
    let predicted: HashSet<&str> = preds.records().iter().map(|p| p.perturbation_id.as_str()).collect();
    let records = responses
        .restrict_samples(&keep)
        .into_records()
        .into_iter()
        .filter(|r| predicted.contains(r.perturbation_id.as_str()))
        .collect();
    ResponseTable::new(records)
}

/// Run every variant on every repeat of `plan`. Each split family is
/// fitted once per variant and its repeats are scored from the same
/// predictions.
pub fn evaluate_plan(
    cfg: &RunConfig,
    corpus: &Corpus,
    plan: &SplitPlan,
    variants: &[Variant],
    cache: &StageCache,
    task: &str,
) -> Result<EvaluationReport> {
    let mut store = RepresentationStore::new(cfg, corpus, cache);
    let mut per_variant: BTreeMap<usize, Vec<RepeatScores>> = BTreeMap::new();
    for (family, repeats) in plan.families() {
        let train = &repeats[0].train;
        let mut union: Vec<String> = Vec::new();
        let mut seen = HashSet::new();
        for r in &repeats {
            for s in &r.test {
                if seen.insert(s.as_str()) {
                    union.push(s.clone());
                }
            }
        }
        info!(
            "split family {family}: {} train, {} test samples",
            train.len(),
            union.len()
        );
        let mut fitted = FittedEnsembles::default();
        for (v, variant) in variants.iter().enumerate() {
            let rep = store.get(variant.fit_population, train)?;
            let preds = predict_variant(variant, &rep, train, &union, &corpus.responses, cfg, &mut fitted)
                .map_err(|e| e.in_stage("fit"))?;
            for r in &repeats {
                let truth = truth_for(&corpus.responses, &r.test, &preds)?;
                if truth.is_empty() {
                    return Err(
                        LeapError::validation(format!("repeat {} has no test labels", r.label)).in_stage("evaluate")
                    );
                }
                let scores = score(&truth, &preds).map_err(|e| e.in_stage("evaluate"))?;
                per_variant.entry(v).or_default().push(RepeatScores {
                    family: r.family.clone(),
                    label: r.label.clone(),
                    scores,
                });
            }
        }
    }
    Ok(EvaluationReport {
        task: task.to_string(),
        models: variants
            .iter()
            .enumerate()
            .map(|(v, variant)| ModelReport::new(&variant.name, per_variant.remove(&v).unwrap_or_default()))
            .collect(),
    })
}
