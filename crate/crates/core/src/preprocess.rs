//! Raw TPM → log₂(TPM+1) → per-gene standardization, with gene selection by
//! per-dataset variance. Fitting and applying are kept separate so the
//! reference population is a configuration choice.

use std::collections::{BTreeSet, HashSet};

use log::warn;
use ndarray::{Array1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::dataset::{ExpressionMatrix, Stage};
use crate::error::{LeapError, Result};

/// Fitted standardization: gene order, per-gene mean and population sd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessModel {
    pub selected_gene_ids: Vec<String>,
    pub per_gene_mean: Vec<f64>,
    pub per_gene_sd: Vec<f64>,
    pub fit_population_tag: String,
    /// Requested genes removed at fit time because they were constant.
    pub dropped_constant_genes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneSelection {
    /// Lexicographically sorted union of per-dataset top genes.
    pub genes: Vec<String>,
    /// Genes not shared by every input matrix, excluded before ranking.
    pub dropped_unshared: Vec<String>,
}

pub fn log_transform(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    m.require_stage(Stage::RawTpm)?;
    if m.values().iter().any(|v| *v < 0.0) {
        return Err(LeapError::validation("negative TPM value"));
    }
    let values = m.values().mapv(|x| (x + 1.0).log2());
    m.derive(m.gene_ids().to_vec(), values, Stage::LogTpm)
}

/// Union of the `k_per_dataset` most variable genes of each matrix.
///
/// Variance uses the n denominator on log-scale values. At the top-k
/// boundary the lexicographically lower gene id wins.
pub fn select_genes(matrices: &[&ExpressionMatrix], k_per_dataset: usize) -> Result<GeneSelection> {
    let Some(first) = matrices.first() else {
        return Err(LeapError::validation("gene selection needs at least one matrix"));
    };
    for m in matrices {
        m.require_stage(Stage::LogTpm)?;
    }
    let mut shared: BTreeSet<&str> = first.gene_ids().iter().map(String::as_str).collect();
    let mut all: BTreeSet<&str> = shared.clone();
    for m in &matrices[1..] {
        let genes: HashSet<&str> = m.gene_ids().iter().map(String::as_str).collect();
        all.extend(genes.iter().copied());
        shared.retain(|g| genes.contains(g));
    }
    let dropped_unshared: Vec<String> = all.difference(&shared).map(|g| g.to_string()).collect();
    if !dropped_unshared.is_empty() {
        warn!(
            "{} genes are not shared by all datasets and were dropped",
            dropped_unshared.len()
        );
    }
    if k_per_dataset == 0 || k_per_dataset > shared.len() {
        return Err(LeapError::validation(format!(
            "k_per_dataset={k_per_dataset} but {} shared genes are available",
            shared.len()
        )));
    }

    let mut union: BTreeSet<String> = BTreeSet::new();
    for m in matrices {
        if m.n_samples() == 0 {
            return Err(LeapError::validation("gene selection on an empty matrix"));
        }
        let variances = m.values().var_axis(Axis(0), 0.0);
        let mut ranked: Vec<(&str, f64)> = m
            .gene_ids()
            .iter()
            .zip(variances.iter())
            .filter(|(g, _)| shared.contains(g.as_str()))
            .map(|(g, v)| (g.as_str(), *v))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        union.extend(ranked.iter().take(k_per_dataset).map(|(g, _)| g.to_string()));
    }
    Ok(GeneSelection {
        genes: union.into_iter().collect(),
        dropped_unshared,
    })
}

/// Per-gene mean and population sd over `m`, restricted to `genes`.
/// Constant genes are dropped with a warning.
pub fn fit(m: &ExpressionMatrix, genes: &[String], population_tag: &str) -> Result<PreprocessModel> {
    m.require_stage(Stage::LogTpm)?;
    if m.n_samples() == 0 {
        return Err(LeapError::validation("cannot fit preprocessing on zero samples"));
    }
    let sub = m.select_genes(genes)?;
    let mut model = PreprocessModel {
        selected_gene_ids: Vec::with_capacity(genes.len()),
        per_gene_mean: Vec::with_capacity(genes.len()),
        per_gene_sd: Vec::with_capacity(genes.len()),
        fit_population_tag: population_tag.to_string(),
        dropped_constant_genes: Vec::new(),
    };
    for (gene, column) in genes.iter().zip(sub.values().columns()) {
        let first = column[0];
        let mean = column.sum() / column.len() as f64;
        let var = column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / column.len() as f64;
        if column.iter().all(|x| *x == first) || var <= 0.0 {
            model.dropped_constant_genes.push(gene.clone());
            continue;
        }
        model.selected_gene_ids.push(gene.clone());
        model.per_gene_mean.push(mean);
        model.per_gene_sd.push(var.sqrt());
    }
    if !model.dropped_constant_genes.is_empty() {
        warn!(
            "dropped {} constant genes at fit: {}",
            model.dropped_constant_genes.len(),
            model.dropped_constant_genes.join(", ")
        );
    }
    if model.selected_gene_ids.is_empty() {
        return Err(LeapError::validation("every selected gene is constant"));
    }
    Ok(model)
}

/// Standardize a log-scale matrix; output columns follow the model's gene order.
pub fn apply(model: &PreprocessModel, m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    m.require_stage(Stage::LogTpm)?;
    let sub = m.select_genes(&model.selected_gene_ids)?;
    let mean = Array1::from(model.per_gene_mean.clone());
    let sd = Array1::from(model.per_gene_sd.clone());
    let mut values = sub.values().clone();
    for mut row in values.rows_mut() {
        Zip::from(&mut row)
            .and(&mean)
            .and(&sd)
            .for_each(|x, mu, s| *x = (*x - mu) / s);
    }
    m.derive(model.selected_gene_ids.clone(), values, Stage::Standardized)
}

impl PreprocessModel {
    pub fn n_genes(&self) -> usize {
        self.selected_gene_ids.len()
    }

    /// log transform then standardize.
    pub fn transform_raw(&self, raw: &ExpressionMatrix) -> Result<ExpressionMatrix> {
        apply(self, &log_transform(raw)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:03}")).collect()
    }

    fn log_matrix(values: Array2<f64>) -> ExpressionMatrix {
        let (r, c) = values.dim();
        ExpressionMatrix::new(ids("s", r), ids("g", c), values, Stage::LogTpm).unwrap()
    }

    fn random_log(seed: u64, rows: usize, cols: usize) -> ExpressionMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scales: Vec<f64> = (0..cols).map(|_| rng.random_range(0.1..3.0)).collect();
        log_matrix(Array2::from_shape_fn((rows, cols), |(_, j)| {
            scales[j] * rng.random_range(0.0..4.0)
        }))
    }

    #[test]
    fn log_transform_known_values() {
        let m = ExpressionMatrix::new(ids("s", 1), ids("g", 3), array![[0.0, 1.0, 1023.0]], Stage::RawTpm).unwrap();
        let out = log_transform(&m).unwrap();
        assert_eq!(out.stage(), Stage::LogTpm);
        assert_eq!(out.values()[[0, 0]], 0.0);
        assert_eq!(out.values()[[0, 1]], 1.0);
        assert!((out.values()[[0, 2]] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn log_transform_requires_raw_stage() {
        assert!(log_transform(&log_matrix(array![[1.0]])).is_err());
    }

    #[test]
    fn selection_edge_cases() {
        let m = random_log(1, 20, 8);
        assert_eq!(select_genes(&[&m], 8).unwrap().genes, m.gene_ids().to_vec());
        assert_eq!(select_genes(&[&m, &m], 3).unwrap().genes.len(), 3);
        assert!(select_genes(&[], 3).is_err());
        assert!(select_genes(&[&m], 9).is_err());
    }

    #[test]
    fn selection_matches_sort_by_variance_oracle() {
        let mats: Vec<ExpressionMatrix> = (0..3).map(|s| random_log(10 + s, 30, 120)).collect();
        let refs: Vec<&ExpressionMatrix> = mats.iter().collect();
        let got = select_genes(&refs, 50).unwrap().genes;
        let mut expected: Vec<String> = Vec::new();
        for m in &mats {
            let mut scored: Vec<(String, f64)> = (0..m.n_genes())
                .map(|j| {
                    let col: Vec<f64> = m.values().column(j).to_vec();
                    let mu = col.iter().sum::<f64>() / col.len() as f64;
                    let v = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / col.len() as f64;
                    (m.gene_ids()[j].clone(), v)
                })
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            expected.extend(scored.into_iter().take(50).map(|(g, _)| g));
        }
        expected.sort();
        expected.dedup();
        assert_eq!(got, expected);
        assert!(got.len() >= 50 && got.len() <= 150);
    }

    #[test]
    fn ties_prefer_lower_gene_id() {
        // every gene has the same variance
        let m = log_matrix(array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        assert_eq!(select_genes(&[&m], 2).unwrap().genes, vec!["g000", "g001"]);
    }

    #[test]
    fn unshared_genes_are_dropped_and_recorded() {
        let a = log_matrix(array![[0.0, 1.0], [2.0, 3.0]]);
        let b = ExpressionMatrix::new(
            ids("s", 2),
            vec!["g000".into(), "zz".into()],
            array![[0.0, 1.0], [2.0, 5.0]],
            Stage::LogTpm,
        )
        .unwrap();
        let sel = select_genes(&[&a, &b], 1).unwrap();
        assert_eq!(sel.genes, vec!["g000"]);
        assert_eq!(sel.dropped_unshared, vec!["g001", "zz"]);
    }

    #[test]
    fn fit_drops_constant_and_uses_population_sd() {
        let m = log_matrix(array![[1.0, 0.0], [1.0, 2.0]]);
        let model = fit(&m, m.gene_ids(), "all").unwrap();
        assert_eq!(model.selected_gene_ids, vec!["g001"]);
        assert_eq!(model.dropped_constant_genes, vec!["g000"]);
        assert_eq!(model.per_gene_mean, vec![1.0]);
        assert_eq!(model.per_gene_sd, vec![1.0]);
    }

    #[test]
    fn fit_rejects_all_constant() {
        let m = log_matrix(array![[0.1, 0.1], [0.1, 0.1], [0.1, 0.1]]);
        assert!(fit(&m, m.gene_ids(), "all").is_err());
    }

    #[test]
    fn fit_matches_two_pass_reference() {
        let m = random_log(3, 40, 12);
        let model = fit(&m, m.gene_ids(), "all").unwrap();
        for j in 0..12 {
            let col: Vec<f64> = m.values().column(j).to_vec();
            let mu = col.iter().sum::<f64>() / 40.0;
            let sd = (col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / 40.0).sqrt();
            assert!((model.per_gene_mean[j] - mu).abs() < 1e-12);
            assert!((model.per_gene_sd[j] - sd).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_standardizes_fit_population() {
        let m = random_log(4, 50, 10);
        let model = fit(&m, m.gene_ids(), "all").unwrap();
        let z = apply(&model, &m).unwrap();
        assert_eq!(z.stage(), Stage::Standardized);
        for col in z.values().columns() {
            let mu = col.sum() / col.len() as f64;
            let sd = (col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mu.abs() < 1e-10);
            assert!((sd - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn apply_to_fit_mean_gives_zeros() {
        let m = random_log(5, 10, 4);
        let model = fit(&m, m.gene_ids(), "all").unwrap();
        let row = Array2::from_shape_vec((1, 4), model.per_gene_mean.clone()).unwrap();
        let z = apply(&model, &log_matrix(row)).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn apply_lists_missing_genes() {
        let m = random_log(6, 10, 4);
        let model = fit(&m, m.gene_ids(), "all").unwrap();
        let narrow = m.select_genes(&["g000", "g001"]).unwrap();
        let err = apply(&model, &narrow).unwrap_err().to_string();
        assert!(err.contains("g002") && err.contains("g003"), "{err}");
    }

    #[test]
    fn apply_reorders_columns_to_model_order() {
        let m = random_log(7, 10, 4);
        let model = fit(&m, &["g003".to_string(), "g001".to_string()], "all").unwrap();
        let z = apply(&model, &m).unwrap();
        assert_eq!(z.gene_ids(), &["g003".to_string(), "g001".to_string()]);
        let expected = (m.values()[[2, 3]] - model.per_gene_mean[0]) / model.per_gene_sd[0];
        assert!((z.values()[[2, 0]] - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn apply_is_the_affine_formula(seed in 0u64..1000, seed_b in 0u64..1000) {
            let a = random_log(seed, 15, 6);
            let b = random_log(seed_b + 5000, 9, 6);
            let model = fit(&a, a.gene_ids(), "A").unwrap();
            let z = apply(&model, &b).unwrap();
            for ((i, j), v) in z.values().indexed_iter() {
                let expect = (b.values()[[i, j]] - model.per_gene_mean[j]) / model.per_gene_sd[j];
                prop_assert!((v - expect).abs() < 1e-12);
                prop_assert!(v.is_finite());
            }
        }

        #[test]
        fn selection_ignores_sample_order(seed in 0u64..500, k in 1usize..10) {
            let m = random_log(seed, 12, 10);
            let mut rows: Vec<usize> = (0..12).collect();
            rows.reverse();
            rows.swap(0, 5);
            let shuffled = m.select_rows(&rows);
            prop_assert_eq!(select_genes(&[&m], k).unwrap(), select_genes(&[&shuffled], k).unwrap());
        }
    }
}
