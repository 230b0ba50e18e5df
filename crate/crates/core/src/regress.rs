//! Perturbation-specific regressors on latent embeddings: LASSO by cyclic
//! coordinate descent over an automatic alpha path, a K-nearest-neighbour
//! baseline, fold construction, and the CV tuner that picks alpha by mean
//! held-out Spearman correlation.

use std::collections::BTreeMap;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{LeapError, Result};
use crate::evaluate::spearman;
use crate::seed::derive_seed;

pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

fn check_xy(x: ArrayView2<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(LeapError::Dimension(format!(
            "{} feature rows but {} responses",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(LeapError::validation("non-finite regression input"));
    }
    Ok(())
}

fn is_constant(y: &[f64]) -> bool {
    y.iter().all(|v| *v == y[0])
}

/// Centered design, kept column-wise for coordinate descent.
struct CenteredProblem {
    columns: Vec<Array1<f64>>,
    sq_norms: Vec<f64>,
    x_mean: Array1<f64>,
    y_centered: Array1<f64>,
    y_mean: f64,
    fit_intercept: bool,
}

impl CenteredProblem {
    fn new(x: ArrayView2<f64>, y: &[f64], fit_intercept: bool) -> Self {
        let n = x.nrows() as f64;
        let (x_mean, y_mean) = if fit_intercept {
            (
                x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols())),
                y.iter().sum::<f64>() / n,
            )
        } else {
            (Array1::zeros(x.ncols()), 0.0)
        };
        let columns: Vec<Array1<f64>> = x
            .columns()
            .into_iter()
            .zip(x_mean.iter())
            .map(|(c, m)| c.mapv(|v| v - m))
            .collect();
        let sq_norms = columns.iter().map(|c| c.dot(c) / n).collect();
        Self {
            columns,
            sq_norms,
            x_mean,
            y_centered: Array1::from_iter(y.iter().map(|v| v - y_mean)),
            y_mean,
            fit_intercept,
        }
    }

    fn n(&self) -> f64 {
        self.y_centered.len() as f64
    }

    fn alpha_max(&self, l1_ratio: f64) -> f64 {
        let n = self.n();
        self.columns
            .iter()
            .map(|c| (c.dot(&self.y_centered) / n).abs())
            .fold(0.0, f64::max)
            / l1_ratio
    }

    fn objective(&self, residual: &Array1<f64>, w: &[f64], alpha: f64, l1_ratio: f64) -> f64 {
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        let l2: f64 = w.iter().map(|v| v * v).sum();
        residual.dot(residual) / (2.0 * self.n()) + alpha * l1_ratio * l1 + 0.5 * alpha * (1.0 - l1_ratio) * l2
    }

    /// Cyclic coordinate descent from `init`.
    fn solve(&self, opts: &LassoOptions, init: Option<&[f64]>, mut trace: Option<&mut Vec<f64>>) -> LinearModel {
        let p = self.columns.len();
        let n = self.n();
        let mut w: Vec<f64> = init.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p]);
        let mut residual = self.y_centered.clone();
        for (j, wj) in w.iter().enumerate() {
            if *wj != 0.0 {
                residual.scaled_add(-wj, &self.columns[j]);
            }
        }
        let l1 = opts.alpha * opts.l1_ratio;
        let l2 = opts.alpha * (1.0 - opts.l1_ratio);
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.objective(&residual, &w, opts.alpha, opts.l1_ratio));
        }
        let mut converged = false;
        let mut passes = 0;
        // Full sweeps alternate with sweeps over the current non-zeros; only a
        // full sweep can declare convergence.
        let mut full = true;
        let mut active: Vec<usize> = Vec::with_capacity(p);
        while passes < opts.max_passes {
            passes += 1;
            let mut max_change: f64 = 0.0;
            let coords: &mut dyn Iterator<Item = usize> = if full { &mut (0..p) } else { &mut active.iter().copied() };
            for j in coords {
                let norm = self.sq_norms[j];
                let old = w[j];
                let new = if norm == 0.0 {
                    0.0
                } else {
                    let rho = self.columns[j].dot(&residual) / n + norm * old;
                    soft_threshold(rho, l1) / (norm + l2)
                };
                if new != old {
                    residual.scaled_add(old - new, &self.columns[j]);
                    w[j] = new;
                    max_change = max_change.max((new - old).abs());
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(&residual, &w, opts.alpha, opts.l1_ratio));
            }
            if max_change < opts.tol {
                if full {
                    converged = true;
                    break;
                }
                full = true;
            } else if full {
                active.clear();
                active.extend((0..p).filter(|&j| w[j] != 0.0));
                full = active.is_empty();
            }
        }
        let intercept = if self.fit_intercept {
            self.y_mean - self.x_mean.dot(&ArrayView1::from(&w[..]))
        } else {
            0.0
        };
        LinearModel {
            coefficients: w,
            intercept,
            alpha: opts.alpha,
            converged,
            passes,
            fold: None,
        }
    }
}

/// Geometric alpha grid from alpha_max down to eps·alpha_max, where
/// alpha_max = max_j |⟨x_j − x̄_j, y − ȳ⟩| / (n · l1_ratio) is the smallest
/// alpha with an all-zero solution.
pub fn alpha_path(x: ArrayView2<f64>, y: &[f64], n_alphas: usize, eps: f64, l1_ratio: f64) -> Result<Vec<f64>> {
    check_xy(x, y)?;
    if y.len() < 2 {
        return Err(LeapError::validation("an alpha path needs at least two responses"));
    }
    if n_alphas == 0 || !(eps > 0.0 && eps < 1.0) || !(l1_ratio > 0.0 && l1_ratio <= 1.0) {
        return Err(LeapError::validation(
            "need n_alphas >= 1, eps in (0,1), l1_ratio in (0,1]",
        ));
    }
    if is_constant(y) {
        return Err(LeapError::DegenerateTarget("constant response".into()));
    }
    let alpha_max = CenteredProblem::new(x, y, true).alpha_max(l1_ratio);
    if n_alphas == 1 {
        return Ok(vec![alpha_max]);
    }
    let step = eps.ln() / (n_alphas - 1) as f64;
    Ok((0..n_alphas).map(|i| alpha_max * (step * i as f64).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub alpha: f64,
    /// 1.0 is the pure L1 penalty; smaller values mix in a ridge term.
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub fit_intercept: bool,
}

impl LassoOptions {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            l1_ratio: 1.0,
            tol: 1e-4,
            max_passes: 1000,
            fit_intercept: true,
        }
    }
}

/// Linear predictor on latent dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub converged: bool,
    pub passes: usize,
    /// CV fold that was held out while fitting, if any.
    pub fold: Option<usize>,
}

impl LinearModel {
    pub fn constant(n_features: usize, value: f64) -> Self {
        Self {
            coefficients: vec![0.0; n_features],
            intercept: value,
            alpha: 0.0,
            converged: true,
            passes: 0,
            fold: None,
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.coefficients.len() {
            return Err(LeapError::Dimension(format!(
                "{} features but the model has {} coefficients",
                x.ncols(),
                self.coefficients.len()
            )));
        }
        Ok(x.dot(&ArrayView1::from(&self.coefficients[..])) + self.intercept)
    }
}

fn validate_lasso(x: ArrayView2<f64>, y: &[f64], opts: &LassoOptions) -> Result<()> {
    check_xy(x, y)?;
    if y.len() < 2 {
        return Err(LeapError::validation("LASSO needs at least two samples"));
    }
    if opts.alpha.is_nan() || opts.alpha < 0.0 || !(opts.l1_ratio > 0.0 && opts.l1_ratio <= 1.0) {
        return Err(LeapError::validation("need alpha >= 0 and l1_ratio in (0, 1]"));
    }
    Ok(())
}

/// Minimize (1/2n)‖y − Xw − b‖² + alpha·‖w‖₁ (plus the optional ridge part)
/// by cyclic coordinate descent on centered data.
pub fn fit_lasso(x: ArrayView2<f64>, y: &[f64], opts: &LassoOptions) -> Result<LinearModel> {
    validate_lasso(x, y, opts)?;
    let model = CenteredProblem::new(x, y, opts.fit_intercept).solve(opts, None, None);
    if !model.converged {
        warn!(
            "coordinate descent hit {} passes at alpha {}",
            opts.max_passes, opts.alpha
        );
    }
    Ok(model)
}

/// Same as [`fit_lasso`], also returning the objective before the first pass
/// and after every pass.
pub fn fit_lasso_traced(x: ArrayView2<f64>, y: &[f64], opts: &LassoOptions) -> Result<(LinearModel, Vec<f64>)> {
    validate_lasso(x, y, opts)?;
    let mut trace = Vec::new();
    let model = CenteredProblem::new(x, y, opts.fit_intercept).solve(opts, None, Some(&mut trace));
    Ok((model, trace))
}

/// K-nearest-neighbour regressor under Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnRegressor {
    train: Array2<f64>,
    responses: Vec<f64>,
    k: usize,
}

pub fn fit_knn(x: ArrayView2<f64>, y: &[f64], k: usize) -> Result<KnnRegressor> {
    check_xy(x, y)?;
    if k == 0 || k > y.len() {
        return Err(LeapError::validation(format!("k={k} with {} training rows", y.len())));
    }
    Ok(KnnRegressor {
        train: x.to_owned(),
        responses: y.to_vec(),
        k,
    })
}

impl KnnRegressor {
    /// Unweighted mean response of the k nearest training rows; distance
    /// ties go to the lower training index.
    pub fn predict(&self, query: ArrayView2<f64>) -> Result<Vec<f64>> {
        if query.ncols() != self.train.ncols() {
            return Err(LeapError::Dimension(format!(
                "query has {} features, training data {}",
                query.ncols(),
                self.train.ncols()
            )));
        }
        Ok(query
            .rows()
            .into_iter()
            .map(|q| {
                let mut dist: Vec<(f64, usize)> = self
                    .train
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let d: f64 = t.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                        (d, i)
                    })
                    .collect();
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dist[..self.k].iter().map(|&(_, i)| self.responses[i]).sum::<f64>() / self.k as f64
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    BySample,
    GroupedByTissue,
    LeaveOneTissueOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub n_folds: usize,
    pub grouping: Grouping,
    pub n_alphas: usize,
    pub alpha_eps: f64,
    pub cd_tolerance: f64,
    pub cd_max_passes: usize,
    pub l1_ratio: f64,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            grouping: Grouping::BySample,
            n_alphas: 10,
            alpha_eps: 1e-3,
            cd_tolerance: 1e-4,
            cd_max_passes: 1000,
            l1_ratio: 1.0,
            seed: 0,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(LeapError::validation("n_folds must be at least 2"));
        }
        if self.n_alphas == 0 {
            return Err(LeapError::validation("n_alphas must be at least 1"));
        }
        if !(self.alpha_eps > 0.0 && self.alpha_eps < 1.0) {
            return Err(LeapError::validation("alpha_eps must lie in (0, 1)"));
        }
        if !(self.l1_ratio > 0.0 && self.l1_ratio <= 1.0) {
            return Err(LeapError::validation("l1_ratio must lie in (0, 1]"));
        }
        Ok(())
    }

    fn lasso(&self, alpha: f64) -> LassoOptions {
        LassoOptions {
            alpha,
            l1_ratio: self.l1_ratio,
            tol: self.cd_tolerance,
            max_passes: self.cd_max_passes,
            fit_intercept: true,
        }
    }
}

/// Fold index for every sample. Returns (assignment, number of folds).
///
/// `BySample` orders samples by a hash of (seed, sample id) and deals them
/// round-robin, so the assignment follows ids rather than positions.
/// `GroupedByTissue` deals whole tissues, largest first, to the currently
/// smallest fold; empty folds are dropped. `LeaveOneTissueOut` makes one
/// fold per tissue.
pub fn make_folds(
    sample_ids: &[String],
    tissues: Option<&[String]>,
    grouping: Grouping,
    n_folds: usize,
    seed: u64,
) -> Result<(Vec<usize>, usize)> {
    let n = sample_ids.len();
    match grouping {
        Grouping::BySample => {
            if n < n_folds {
                return Err(LeapError::validation(format!("{n} samples for {n_folds} folds")));
            }
            let mut keyed: Vec<(u64, &str, usize)> = sample_ids
                .iter()
                .enumerate()
                .map(|(i, s)| (derive_seed(seed, &["fold", s]), s.as_str(), i))
                .collect();
            keyed.sort();
            let mut assignment = vec![0; n];
            for (rank, (_, _, i)) in keyed.into_iter().enumerate() {
                assignment[i] = rank % n_folds;
            }
            Ok((assignment, n_folds))
        }
        Grouping::GroupedByTissue | Grouping::LeaveOneTissueOut => {
            let tissues = tissues.ok_or_else(|| LeapError::validation("tissue grouping needs tissue labels"))?;
            if tissues.len() != n {
                return Err(LeapError::Dimension("one tissue label per sample required".into()));
            }
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for t in tissues {
                *counts.entry(t).or_default() += 1;
            }
            if counts.len() < 2 {
                return Err(LeapError::validation(
                    "tissue grouping needs at least two distinct tissues",
                ));
            }
            let fold_of: BTreeMap<&str, usize> = if grouping == Grouping::LeaveOneTissueOut {
                counts.keys().enumerate().map(|(i, t)| (*t, i)).collect()
            } else {
                let mut by_size: Vec<(&str, usize)> = counts.iter().map(|(t, c)| (*t, *c)).collect();
                by_size.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                let mut loads = vec![0usize; n_folds];
                let mut raw: BTreeMap<&str, usize> = BTreeMap::new();
                for (t, c) in by_size {
                    let f = (0..n_folds).min_by_key(|&f| (loads[f], f)).unwrap();
                    loads[f] += c;
                    raw.insert(t, f);
                }
                // renumber non-empty folds densely
                let mut used: Vec<usize> = raw.values().copied().collect();
                used.sort_unstable();
                used.dedup();
                raw.into_iter()
                    .map(|(t, f)| (t, used.binary_search(&f).unwrap()))
                    .collect()
            };
            let k = fold_of.values().max().map_or(0, |m| m + 1);
            Ok((tissues.iter().map(|t| fold_of[t.as_str()]).collect(), k))
        }
    }
}

/// Tuned regressors for one perturbation on one representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFit {
    pub perturbation_id: String,
    pub representation: usize,
    pub best_alpha: f64,
    pub alphas: Vec<f64>,
    /// Mean held-out Spearman per alpha, aligned with `alphas`.
    pub cv_scores: Vec<f64>,
    pub cv_score: f64,
    /// One model per CV fold, each fitted at `best_alpha` without its fold.
    pub fold_models: Vec<LinearModel>,
    /// Training responses were constant; every fold model predicts their mean.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

impl PerturbationFit {
    /// Mean of the fold-model predictions.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let mut acc = Array1::zeros(x.nrows());
        for m in &self.fold_models {
            acc += &m.predict(x)?;
        }
        Ok(acc / self.fold_models.len() as f64)
    }
}

/// Choose alpha by cross-validated Spearman and keep the fold models fitted
/// at the chosen alpha. Rows of `x` are the samples labelled for this
/// perturbation.
pub fn tune_and_fit(
    x: ArrayView2<f64>,
    y: &[f64],
    sample_ids: &[String],
    tissues: Option<&[String]>,
    cfg: &TuneConfig,
    perturbation_id: &str,
) -> Result<PerturbationFit> {
    cfg.validate()?;
    check_xy(x, y)?;
    if sample_ids.len() != y.len() {
        return Err(LeapError::Dimension("one sample id per response required".into()));
    }
    if y.len() < cfg.n_folds {
        return Err(LeapError::validation(format!(
            "perturbation {perturbation_id}: {} labelled samples for {} folds",
            y.len(),
            cfg.n_folds
        )));
    }
    let fold_seed = derive_seed(cfg.seed, &["cv", perturbation_id]);
    let (assignment, k) = make_folds(sample_ids, tissues, cfg.grouping, cfg.n_folds, fold_seed)?;

    if is_constant(y) {
        let models = (0..k)
            .map(|f| LinearModel {
                fold: Some(f),
                ..LinearModel::constant(x.ncols(), y[0])
            })
            .collect();
        return Ok(PerturbationFit {
            perturbation_id: perturbation_id.to_string(),
            representation: 0,
            best_alpha: 0.0,
            alphas: Vec::new(),
            cv_scores: Vec::new(),
            cv_score: 0.0,
            fold_models: models,
            degenerate: true,
            warnings: vec!["constant training response; using the mean predictor".into()],
        });
    }

    let alphas = alpha_path(x, y, cfg.n_alphas, cfg.alpha_eps, cfg.l1_ratio)?;
    let mut warnings = Vec::new();
    let mut scores = vec![vec![0.0; k]; alphas.len()];
    let mut models: Vec<Vec<LinearModel>> = vec![Vec::with_capacity(k); alphas.len()];
    for fold in 0..k {
        let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != fold).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == fold).collect();
        if train.len() < 2 {
            return Err(LeapError::validation(format!(
                "perturbation {perturbation_id}: fold {fold} leaves fewer than two training samples"
            )));
        }
        let x_train = x.select(Axis(0), &train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let x_test = x.select(Axis(0), &test);
        let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let truth_constant = is_constant(&y_test);
        if truth_constant {
            let msg = format!("fold {fold} has constant held-out truth; its Spearman counts as 0");
            warn!("perturbation {perturbation_id}: {msg}");
            warnings.push(msg);
        }
        let problem = CenteredProblem::new(x_train.view(), &y_train, true);
        let mut warm: Option<Vec<f64>> = None;
        for (a, &alpha) in alphas.iter().enumerate() {
            let mut model = problem.solve(&cfg.lasso(alpha), warm.as_deref(), None);
            model.fold = Some(fold);
            warm = Some(model.coefficients.clone());
            let pred = model.predict(x_test.view())?;
            scores[a][fold] = if truth_constant {
                0.0
            } else {
                spearman(&y_test, pred.as_slice().unwrap())?.unwrap_or(0.0)
            };
            models[a].push(model);
        }
    }
    let cv_scores: Vec<f64> = scores.iter().map(|s| s.iter().sum::<f64>() / k as f64).collect();
    // alphas are descending, so a strict comparison keeps the larger alpha on ties
    let mut best = 0;
    for (a, s) in cv_scores.iter().enumerate() {
        if *s > cv_scores[best] {
            best = a;
        }
    }
    Ok(PerturbationFit {
        perturbation_id: perturbation_id.to_string(),
        representation: 0,
        best_alpha: alphas[best],
        cv_score: cv_scores[best],
        fold_models: std::mem::take(&mut models[best]),
        alphas,
        cv_scores,
        degenerate: false,
        warnings,
    })
}

/// One model on all rows at `alpha` (the single-model ablation step).
pub fn refit_full(x: ArrayView2<f64>, y: &[f64], alpha: f64, cfg: &TuneConfig) -> Result<LinearModel> {
    if is_constant(y) {
        return Ok(LinearModel::constant(x.ncols(), y[0]));
    }
    fit_lasso(x, y, &cfg.lasso(alpha))
}
