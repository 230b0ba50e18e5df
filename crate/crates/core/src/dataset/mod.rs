//! Expression matrices, response tables, curation rules and the synthetic
//! test-bed generator.

mod curation;
mod io;
mod synthetic;

use std::collections::{BTreeMap, HashMap, HashSet};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{LeapError, Result};

pub use curation::{
    aggregate_within_study, curate, dedup_across_studies, exclude_samples, filter_perturbations, CurationParams,
    DEFAULT_STUDY_PRIORITY,
};
pub use io::{
    format_real, load_expression, load_expression_with_metadata, load_metadata, load_responses, write_expression,
    write_metadata, write_responses, SampleMeta,
};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};

/// Processing stage of the values held by an [`ExpressionMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    RawTpm,
    LogTpm,
    Standardized,
    Latent,
}

/// Dense samples × genes matrix with per-sample annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    sample_ids: Vec<String>,
    gene_ids: Vec<String>,
    values: Array2<f64>,
    tissue: Option<Vec<String>>,
    dataset_tag: Option<Vec<String>>,
    stage: Stage,
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().find(|id| !seen.insert(id.as_str())).map(String::as_str)
}

impl ExpressionMatrix {
    pub fn new(sample_ids: Vec<String>, gene_ids: Vec<String>, values: Array2<f64>, stage: Stage) -> Result<Self> {
        if let Some(dup) = first_duplicate(&sample_ids) {
            return Err(LeapError::validation(format!("duplicate sample id \"{dup}\"")));
        }
        if let Some(dup) = first_duplicate(&gene_ids) {
            return Err(LeapError::validation(format!("duplicate gene id \"{dup}\"")));
        }
        if values.nrows() != sample_ids.len() || values.ncols() != gene_ids.len() {
            return Err(LeapError::Dimension(format!(
                "values are {}x{} but there are {} samples and {} genes",
                values.nrows(),
                values.ncols(),
                sample_ids.len(),
                gene_ids.len()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(LeapError::validation(format!(
                "non-finite value {v} at sample \"{}\", gene \"{}\"",
                sample_ids[i], gene_ids[j]
            )));
        }
        if stage == Stage::RawTpm {
            if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| **v < 0.0) {
                return Err(LeapError::validation(format!(
                    "negative TPM value {v} at sample \"{}\", gene \"{}\"",
                    sample_ids[i], gene_ids[j]
                )));
            }
        }
        Ok(Self {
            sample_ids,
            gene_ids,
            values,
            tissue: None,
            dataset_tag: None,
            stage,
        })
    }

    /// Attach per-sample tissue and dataset labels (same order as samples).
    pub fn with_annotations(mut self, tissue: Option<Vec<String>>, dataset_tag: Option<Vec<String>>) -> Result<Self> {
        for (name, labels) in [("tissue", &tissue), ("dataset_tag", &dataset_tag)] {
            if let Some(labels) = labels {
                if labels.len() != self.sample_ids.len() {
                    return Err(LeapError::Dimension(format!(
                        "{name} has {} labels for {} samples",
                        labels.len(),
                        self.sample_ids.len()
                    )));
                }
            }
        }
        self.tissue = tissue;
        self.dataset_tag = dataset_tag;
        Ok(self)
    }

    /// Same samples and annotations, new values and gene axis.
    pub fn derive(&self, gene_ids: Vec<String>, values: Array2<f64>, stage: Stage) -> Result<Self> {
        Self::new(self.sample_ids.clone(), gene_ids, values, stage)?
            .with_annotations(self.tissue.clone(), self.dataset_tag.clone())
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn tissue(&self) -> Option<&[String]> {
        self.tissue.as_deref()
    }

    pub fn dataset_tag(&self) -> Option<&[String]> {
        self.dataset_tag.as_deref()
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn sample_index(&self) -> HashMap<&str, usize> {
        self.sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect()
    }

    pub fn require_stage(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(LeapError::validation(format!(
                "expected a {stage:?} matrix, got {:?}",
                self.stage
            )));
        }
        Ok(())
    }

    /// Rows at the given positions, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let pick = |labels: &Option<Vec<String>>| labels.as_ref().map(|l| rows.iter().map(|&r| l[r].clone()).collect());
        Self {
            sample_ids: rows.iter().map(|&r| self.sample_ids[r].clone()).collect(),
            gene_ids: self.gene_ids.clone(),
            values: self.values.select(Axis(0), rows),
            tissue: pick(&self.tissue),
            dataset_tag: pick(&self.dataset_tag),
            stage: self.stage,
        }
    }

    /// Rows for the given sample ids, in the order given.
    pub fn select_samples<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let index = self.sample_index();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_ref())
                    .copied()
                    .ok_or_else(|| LeapError::validation(format!("unknown sample id \"{}\"", id.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_rows(&rows))
    }

    /// Columns for the given gene ids, in the order given. Missing ids are
    /// all reported at once.
    pub fn select_genes<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let index: HashMap<&str, usize> = self.gene_ids.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
        let missing: Vec<&str> = ids
            .iter()
            .map(AsRef::as_ref)
            .filter(|g| !index.contains_key(g))
            .collect();
        if !missing.is_empty() {
            return Err(LeapError::validation(format!(
                "missing gene ids: {}",
                missing.join(", ")
            )));
        }
        let cols: Vec<usize> = ids.iter().map(|g| index[g.as_ref()]).collect();
        Ok(Self {
            sample_ids: self.sample_ids.clone(),
            gene_ids: ids.iter().map(|g| g.as_ref().to_string()).collect(),
            values: self.values.select(Axis(1), &cols),
            tissue: self.tissue.clone(),
            dataset_tag: self.dataset_tag.clone(),
            stage: self.stage,
        })
    }

    /// Sample ids grouped by dataset tag (all samples under "" when untagged).
    pub fn samples_by_dataset(&self) -> BTreeMap<String, Vec<usize>> {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for i in 0..self.n_samples() {
            let tag = self.dataset_tag.as_ref().map(|t| t[i].clone()).unwrap_or_default();
            groups.entry(tag).or_default().push(i);
        }
        groups
    }
}

/// One observed perturbation response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub sample_id: String,
    pub perturbation_id: String,
    pub value: f64,
    pub study_tag: String,
}

impl ResponseRecord {
    pub fn new(sample: &str, perturbation: &str, value: f64, study: &str) -> Self {
        Self {
            sample_id: sample.to_string(),
            perturbation_id: perturbation.to_string(),
            value,
            study_tag: study.to_string(),
        }
    }
}

/// Sparse (sample, perturbation) observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponseTable {
    records: Vec<ResponseRecord>,
}

impl ResponseTable {
    pub fn new(records: Vec<ResponseRecord>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| !r.value.is_finite()) {
            return Err(LeapError::validation(format!(
                "non-finite response for sample \"{}\", perturbation \"{}\"",
                r.sample_id, r.perturbation_id
            )));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ResponseRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted distinct perturbation ids.
    pub fn perturbation_ids(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> = self.records.iter().map(|r| r.perturbation_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// perturbation → (sample → value). Requires at most one record per pair.
    pub fn by_perturbation(&self) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
        let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for r in &self.records {
            let slot = out.entry(r.perturbation_id.clone()).or_default();
            if slot.insert(r.sample_id.clone(), r.value).is_some() {
                return Err(LeapError::validation(format!(
                    "more than one response for sample \"{}\", perturbation \"{}\"; curate first",
                    r.sample_id, r.perturbation_id
                )));
            }
        }
        Ok(out)
    }

    /// Records whose sample is in `samples`.
    pub fn restrict_samples(&self, samples: &HashSet<&str>) -> Self {
        Self {
            records: self
                .records
                .iter()
                .filter(|r| samples.contains(r.sample_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn duplicate_sample_is_named() {
        let err = ExpressionMatrix::new(
            ids(&["A", "B", "A"]),
            ids(&["g1"]),
            array![[1.0], [2.0], [3.0]],
            Stage::RawTpm,
        )
        .unwrap_err();
        assert!(err.to_string().contains("\"A\""), "{err}");
    }

    #[test]
    fn raw_tpm_rejects_negative_values() {
        let err = ExpressionMatrix::new(ids(&["A"]), ids(&["g1"]), array![[-1.0]], Stage::RawTpm);
        assert!(err.is_err());
        assert!(ExpressionMatrix::new(ids(&["A"]), ids(&["g1"]), array![[-1.0]], Stage::LogTpm).is_ok());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let err = ExpressionMatrix::new(ids(&["A", "B"]), ids(&["g1"]), array![[1.0]], Stage::LogTpm);
        assert!(matches!(err, Err(LeapError::Dimension(_))));
    }

    #[test]
    fn select_genes_lists_every_missing_id() {
        let m = ExpressionMatrix::new(ids(&["A"]), ids(&["g1", "g2"]), array![[1.0, 2.0]], Stage::LogTpm).unwrap();
        let err = m.select_genes(&["g2", "x", "y"]).unwrap_err().to_string();
        assert!(err.contains("x, y"), "{err}");
        let sub = m.select_genes(&["g2", "g1"]).unwrap();
        assert_eq!(sub.values(), &array![[2.0, 1.0]]);
    }

    #[test]
    fn duplicated_pairs_are_refused_by_by_perturbation() {
        let t = ResponseTable::new(vec![
            ResponseRecord::new("s", "p", 1.0, "A"),
            ResponseRecord::new("s", "p", 2.0, "B"),
        ])
        .unwrap();
        assert!(t.by_perturbation().is_err());
    }
}
