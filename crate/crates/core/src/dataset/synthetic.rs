//! Desk-scale synthetic test-bed: latent factors with tissue offsets drive a
//! TPM-like expression matrix and sparse linear perturbation responses with a
//! planted signal fraction.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ExpressionMatrix, ResponseRecord, ResponseTable, Stage};
use crate::error::{LeapError, Result};
use crate::seed::derived_rng;

pub const SYNTHETIC_STUDY: &str = "SYNTH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_genes: usize,
    pub n_latent: usize,
    pub n_perturbations: usize,
    pub n_tissues: usize,
    /// Fraction of label variance explained by the latent factors.
    pub signal_r2: f64,
    pub noise_sd_expression: f64,
    pub seed: u64,
    /// Standard deviation of the per-tissue latent mean offsets.
    pub tissue_shift: f64,
    /// Non-zero latent coefficients per perturbation.
    pub active_per_perturbation: usize,
    /// Probability that a (sample, perturbation) label is left unobserved.
    pub label_missing_rate: f64,
    /// Samples are tagged D0..D{n-1} round-robin.
    pub n_datasets: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 300,
            n_genes: 200,
            n_latent: 16,
            n_perturbations: 20,
            n_tissues: 3,
            signal_r2: 0.5,
            noise_sd_expression: 0.1,
            seed: 0,
            tissue_shift: 0.5,
            active_per_perturbation: 3,
            label_missing_rate: 0.0,
            n_datasets: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(LeapError::validation(format!("synthetic spec: {m}")));
        if self.n_latent == 0 || self.n_latent > self.n_genes {
            return fail("need 1 <= n_latent <= n_genes");
        }
        if self.n_tissues == 0 || self.n_tissues > self.n_samples {
            return fail("need 1 <= n_tissues <= n_samples");
        }
        if self.n_samples < self.n_latent + 3 {
            return fail("need n_samples >= n_latent + 3");
        }
        if !(self.signal_r2 > 0.0 && self.signal_r2 < 1.0) {
            return fail("signal_r2 must lie in (0, 1)");
        }
        if [self.noise_sd_expression, self.tissue_shift]
            .iter()
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return fail("noise and shift scales must be non-negative");
        }
        if self.active_per_perturbation == 0 || self.active_per_perturbation > self.n_latent {
            return fail("need 1 <= active_per_perturbation <= n_latent");
        }
        if !(0.0..1.0).contains(&self.label_missing_rate) {
            return fail("label_missing_rate must lie in [0, 1)");
        }
        if self.n_datasets == 0 {
            return fail("n_datasets must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub expression: ExpressionMatrix,
    pub responses: ResponseTable,
    /// Ground-truth latent factors (n_samples × n_latent), tissue offsets included.
    pub latent: Array2<f64>,
    /// Planted coefficients (n_perturbations × n_latent).
    pub coefficients: Array2<f64>,
    /// Complete label matrix before missingness (n_samples × n_perturbations).
    pub labels: Array2<f64>,
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || sd * rng.sample::<f64, _>(StandardNormal))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Orthonormal basis for the span of the columns, by modified Gram-Schmidt.
fn orthonormal_basis(columns: &[Array1<f64>]) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(columns.len());
    for c in columns {
        let mut v = c.clone();
        for q in &basis {
            let proj = q.dot(&v);
            v.scaled_add(-proj, q);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-10 * c.dot(c).sqrt().max(1e-300) {
            basis.push(v / norm);
        }
    }
    basis
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let n = spec.n_samples;
    let k = spec.n_latent;

    let tissue_of: Vec<usize> = (0..n).map(|i| i % spec.n_tissues).collect();
    let mut rng = derived_rng(spec.seed, &["synthetic", "latent"]);
    let offsets = normal_matrix(&mut rng, spec.n_tissues, k, spec.tissue_shift);
    let mut latent = normal_matrix(&mut rng, n, k, 1.0);
    for (i, mut row) in latent.rows_mut().into_iter().enumerate() {
        row += &offsets.row(tissue_of[i]);
    }

    let mut rng = derived_rng(spec.seed, &["synthetic", "expression"]);
    let loadings = normal_matrix(&mut rng, k, spec.n_genes, 1.0 / (k as f64).sqrt());
    let baseline = normal_matrix(&mut rng, 1, spec.n_genes, 1.0);
    let noise = normal_matrix(&mut rng, n, spec.n_genes, spec.noise_sd_expression);
    let activation = latent.dot(&loadings) + &baseline + &noise;
    // log2(tpm + 1) = 2·softplus(activation)
    let tpm = activation.mapv(|a| (2.0 * softplus(a)).exp2() - 1.0);

    let width = (n.max(1) - 1).to_string().len();
    let sample_ids: Vec<String> = (0..n).map(|i| format!("S{i:0width$}")).collect();
    let gwidth = (spec.n_genes - 1).to_string().len();
    let gene_ids: Vec<String> = (0..spec.n_genes).map(|j| format!("G{j:0gwidth$}")).collect();
    let tissue: Vec<String> = tissue_of.iter().map(|t| format!("T{t}")).collect();
    let dataset: Vec<String> = (0..n).map(|i| format!("D{}", i % spec.n_datasets)).collect();
    let expression = ExpressionMatrix::new(sample_ids.clone(), gene_ids, tpm, Stage::RawTpm)?
        .with_annotations(Some(tissue), Some(dataset))?;

    // Noise is projected off span{1, Z} and rescaled, so the in-sample OLS R²
    // of each label on the latent factors equals signal_r2.
    let mut columns = vec![Array1::ones(n)];
    columns.extend(latent.columns().into_iter().map(|c| c.to_owned()));
    let basis = orthonormal_basis(&columns);

    let pwidth = spec.n_perturbations.saturating_sub(1).to_string().len();
    let mut coefficients = Array2::zeros((spec.n_perturbations, k));
    let mut labels = Array2::zeros((n, spec.n_perturbations));
    let mut records = Vec::new();
    for p in 0..spec.n_perturbations {
        let pid = format!("P{p:0pwidth$}");
        let mut rng = derived_rng(spec.seed, &["synthetic", "perturbation", &pid]);
        let active = rand::seq::index::sample(&mut rng, k, spec.active_per_perturbation);
        for j in active.iter() {
            let magnitude = 0.5 + rng.random::<f64>();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            coefficients[[p, j]] = sign * magnitude;
        }
        let signal = latent.dot(&coefficients.row(p));
        let centered = &signal - signal.mean().unwrap_or(0.0);
        let signal_ss = centered.dot(&centered);

        let mut eps: Array1<f64> = Array1::from_shape_simple_fn(n, || rng.sample(StandardNormal));
        for q in &basis {
            let proj = q.dot(&eps);
            eps.scaled_add(-proj, q);
        }
        let target_ss = signal_ss * (1.0 - spec.signal_r2) / spec.signal_r2;
        let eps_ss = eps.dot(&eps);
        if eps_ss <= 0.0 || signal_ss <= 0.0 {
            return Err(LeapError::numerical("synthetic labels are degenerate"));
        }
        eps *= (target_ss / eps_ss).sqrt();
        let y = &signal + &eps;
        labels.column_mut(p).assign(&y);

        for (i, sid) in sample_ids.iter().enumerate() {
            if spec.label_missing_rate > 0.0 && rng.random::<f64>() < spec.label_missing_rate {
                continue;
            }
            records.push(ResponseRecord::new(sid, &pid, y[i], SYNTHETIC_STUDY));
        }
    }

    Ok(SyntheticData {
        expression,
        responses: ResponseTable::new(records)?,
        latent,
        coefficients,
        labels,
    })
}
