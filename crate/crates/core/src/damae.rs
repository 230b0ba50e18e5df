//! Data-augmented masked autoencoder: VIME-style corruption plus Gaussian
//! noise on each batch, reconstruction of the clean batch, early stopping on
//! a seed-chosen holdout, and seed ensembles of independently trained models.

use std::collections::HashSet;

use log::{debug, info, warn};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExpressionMatrix, Stage};
use crate::error::{LeapError, Result};
use crate::nn::{adam_step, mse_loss, Activation, AdamConfig, DenseNet, Gradients, OptimizerState};
use crate::seed::{derived_rng, LeapRng};

/// How masked entries are allocated within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Each entry is masked independently with probability `mask_rate`.
    Bernoulli,
    /// Each row masks exactly round(mask_rate · n_cols) entries.
    ExactPerRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DamaeConfig {
    /// Number of input genes; 0 means take it from the training data.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub dropout: f64,
    pub mask_rate: f64,
    pub mask_mode: MaskMode,
    pub noise_sd: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub holdout_fraction: f64,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for DamaeConfig {
    fn default() -> Self {
        Self {
            input_dim: 0,
            hidden_dim: 512,
            latent_dim: 256,
            dropout: 0.2,
            mask_rate: 0.3,
            mask_mode: MaskMode::Bernoulli,
            noise_sd: 0.01,
            max_epochs: 3000,
            patience: 20,
            min_delta: 1e-5,
            holdout_fraction: 0.1,
            batch_size: 128,
            optimizer: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl DamaeConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(LeapError::validation(format!("damae config: {m}")));
        if !(0.0..1.0).contains(&self.mask_rate) {
            return fail("mask_rate must lie in [0, 1)");
        }
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return fail("noise_sd must be non-negative");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 0.5) {
            return fail("holdout_fraction must lie in (0, 0.5)");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.hidden_dim == 0 || self.latent_dim == 0 || self.batch_size < 2 {
            return fail("layer sizes must be positive and batch_size at least 2");
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return fail("min_delta must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Validation loss of the freshly initialized model.
    pub initial_validation_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were restored.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub holdout_samples: Vec<String>,
}

impl TrainingLog {
    pub fn best_validation_loss(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.validation_loss)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamaeModel {
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub config: DamaeConfig,
    /// Column order the model expects (the preprocessing gene list).
    pub input_gene_ids: Vec<String>,
    pub training_log: TrainingLog,
}

/// Mask entries and replace each masked value with the same column's value
/// from a different, uniformly drawn row of the batch.
pub fn corrupt(
    batch: ArrayView2<f64>,
    mask_rate: f64,
    mode: MaskMode,
    rng: &mut impl Rng,
) -> Result<(Array2<f64>, Array2<bool>)> {
    let (rows, cols) = batch.dim();
    if rows < 2 {
        return Err(LeapError::validation(
            "corruption needs at least two rows to draw donors from",
        ));
    }
    if !(0.0..1.0).contains(&mask_rate) {
        return Err(LeapError::validation("mask_rate must lie in [0, 1)"));
    }
    let mask = match mode {
        MaskMode::Bernoulli => Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() < mask_rate),
        MaskMode::ExactPerRow => {
            let per_row = (mask_rate * cols as f64).round() as usize;
            let mut mask = Array2::from_elem((rows, cols), false);
            for mut row in mask.rows_mut() {
                for j in rand::seq::index::sample(rng, cols, per_row) {
                    row[j] = true;
                }
            }
            mask
        }
    };
    let mut corrupted = batch.to_owned();
    for ((i, j), &masked) in mask.indexed_iter() {
        if masked {
            // uniform over the other rows
            let mut donor = rng.random_range(0..rows - 1);
            if donor >= i {
                donor += 1;
            }
            corrupted[[i, j]] = batch[[donor, j]];
        }
    }
    Ok((corrupted, mask))
}

/// Add i.i.d. N(0, noise_sd²) to every entry.
pub fn augment(batch: ArrayView2<f64>, noise_sd: f64, rng: &mut impl Rng) -> Result<Array2<f64>> {
    if noise_sd.is_nan() || noise_sd < 0.0 {
        return Err(LeapError::validation("noise_sd must be non-negative"));
    }
    let mut out = batch.to_owned();
    if noise_sd > 0.0 {
        out.iter_mut()
            .for_each(|v| *v += noise_sd * rng.sample::<f64, _>(StandardNormal));
    }
    Ok(out)
}

/// Loss and gradients of clean-target reconstruction through encoder then decoder.
pub fn reconstruction_step(
    encoder: &DenseNet,
    decoder: &DenseNet,
    input: ArrayView2<f64>,
    target: ArrayView2<f64>,
    training: bool,
    rng: &mut impl Rng,
) -> Result<(f64, Gradients, Gradients)> {
    let (latent, enc_cache) = encoder.forward(input, training, rng)?;
    let (recon, dec_cache) = decoder.forward(latent.view(), training, rng)?;
    if recon.dim() != target.dim() {
        return Err(LeapError::Dimension(format!(
            "reconstruction is {:?}, target is {:?}",
            recon.dim(),
            target.dim()
        )));
    }
    let (loss, dloss) = mse_loss(recon.view(), target);
    let (dec_grads, dlatent) = decoder.backward(&dec_cache, dloss.view())?;
    let (enc_grads, _) = encoder.backward(&enc_cache, dlatent.view())?;
    Ok((loss, enc_grads, dec_grads))
}

/// Clean reconstruction MSE (no corruption, no dropout).
pub fn reconstruction_loss(encoder: &DenseNet, decoder: &DenseNet, data: ArrayView2<f64>) -> Result<f64> {
    let recon = decoder.predict(encoder.predict(data)?.view())?;
    Ok(mse_loss(recon.view(), data).0)
}

fn build_networks(cfg: &DamaeConfig, input_dim: usize, rng: &mut LeapRng) -> Result<(DenseNet, DenseNet)> {
    let encoder = DenseNet::kaiming(
        &[input_dim, cfg.hidden_dim, cfg.latent_dim],
        &[Activation::Relu, Activation::Identity],
        &[cfg.dropout, 0.0],
        rng,
    )?;
    let decoder = DenseNet::kaiming(
        &[cfg.latent_dim, cfg.hidden_dim, input_dim],
        &[Activation::Relu, Activation::Identity],
        &[cfg.dropout, 0.0],
        rng,
    )?;
    Ok((encoder, decoder))
}

/// Split row indices into contiguous batches; a trailing single row joins
/// the previous batch so every batch can be corrupted.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = (start + batch_size).min(order.len());
        if order.len() - end == 1 {
            end = order.len();
        }
        out.push(&order[start..end]);
        start = end;
    }
    out
}

/// Train one DAMAE on a standardized matrix.
pub fn train(data: &ExpressionMatrix, config: &DamaeConfig) -> Result<DamaeModel> {
    config.validate()?;
    data.require_stage(Stage::Standardized)?;
    let n = data.n_samples();
    let input_dim = data.n_genes();
    if config.input_dim != 0 && config.input_dim != input_dim {
        return Err(LeapError::Dimension(format!(
            "config input_dim {} but data has {input_dim} genes",
            config.input_dim
        )));
    }
    let n_val = ((config.holdout_fraction * n as f64).round() as usize).max(1);
    if n < n_val + 2 {
        return Err(LeapError::validation(format!(
            "{n} samples are too few to train a DAMAE"
        )));
    }
    if n < 2 * config.batch_size {
        warn!("training on {n} samples with batch size {}", config.batch_size);
    }
    let mut cfg = config.clone();
    cfg.input_dim = input_dim;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived_rng(cfg.seed, &["damae", "holdout"]));
    let (val_rows, train_rows) = order.split_at(n_val);
    let mut val_rows = val_rows.to_vec();
    val_rows.sort_unstable();
    let mut train_rows = train_rows.to_vec();
    train_rows.sort_unstable();
    let values = data.values();
    let val_data = values.select(Axis(0), &val_rows);

    let (mut encoder, mut decoder) = build_networks(&cfg, input_dim, &mut derived_rng(cfg.seed, &["damae", "init"]))?;
    let mut enc_opt = OptimizerState::new(&encoder, cfg.optimizer);
    let mut dec_opt = OptimizerState::new(&decoder, cfg.optimizer);
    let mut rng = derived_rng(cfg.seed, &["damae", "train"]);

    let initial_validation_loss = reconstruction_loss(&encoder, &decoder, val_data.view())?;
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut best_snapshot = (encoder.clone(), decoder.clone());
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut reference_loss = f64::INFINITY;
    let mut since_improvement = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let mut shuffled = train_rows.clone();
        shuffled.shuffle(&mut rng);
        let mut weighted_loss = 0.0;
        for (b, rows) in batches(&shuffled, cfg.batch_size).into_iter().enumerate() {
            let clean = values.select(Axis(0), rows);
            let (corrupted, _) = corrupt(clean.view(), cfg.mask_rate, cfg.mask_mode, &mut rng)?;
            let noisy = augment(corrupted.view(), cfg.noise_sd, &mut rng)?;
            let (loss, enc_grads, dec_grads) =
                reconstruction_step(&encoder, &decoder, noisy.view(), clean.view(), true, &mut rng)?;
            if !loss.is_finite() {
                return Err(LeapError::numerical(format!(
                    "non-finite training loss at epoch {epoch}, batch {b}"
                )));
            }
            adam_step(&mut decoder, &dec_grads, &mut dec_opt)
                .and_then(|_| adam_step(&mut encoder, &enc_grads, &mut enc_opt))
                .map_err(|e| LeapError::numerical(format!("epoch {epoch}, batch {b}: {e}")))?;
            weighted_loss += loss * rows.len() as f64;
        }
        let train_loss = weighted_loss / train_rows.len() as f64;
        let validation_loss = reconstruction_loss(&encoder, &decoder, val_data.view())?;
        if !validation_loss.is_finite() {
            return Err(LeapError::numerical(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        debug!(
            "seed {} epoch {epoch}: train {train_loss:.6} val {validation_loss:.6}",
            cfg.seed
        );

        if validation_loss < best_loss {
            best_loss = validation_loss;
            best_epoch = epoch;
            best_snapshot = (encoder.clone(), decoder.clone());
        }
        // the first epoch always sets the reference; later epochs must beat it by min_delta
        if epoch == 1 || reference_loss - validation_loss > cfg.min_delta {
            reference_loss = validation_loss;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    info!(
        "damae seed {}: {} epochs, best epoch {best_epoch}, validation {:.6} -> {:.6}",
        cfg.seed,
        epochs.len(),
        initial_validation_loss,
        best_loss
    );
    let (encoder, decoder) = best_snapshot;
    Ok(DamaeModel {
        encoder,
        decoder,
        config: cfg,
        input_gene_ids: data.gene_ids().to_vec(),
        training_log: TrainingLog {
            initial_validation_loss,
            epochs,
            best_epoch,
            stopped_early,
            holdout_samples: val_rows.iter().map(|&i| data.sample_ids()[i].clone()).collect(),
        },
    })
}

impl DamaeModel {
    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Embed a standardized matrix; output has stage `Latent`.
    pub fn encode(&self, m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
        m.require_stage(Stage::Standardized)?;
        if m.gene_ids() != self.input_gene_ids.as_slice() {
            return Err(LeapError::Dimension(format!(
                "matrix has {} genes in a different order than the {} the model was trained on",
                m.n_genes(),
                self.input_gene_ids.len()
            )));
        }
        let latent = self.encoder.predict(m.values().view())?;
        let width = self.latent_dim().saturating_sub(1).to_string().len();
        let names = (0..self.latent_dim()).map(|k| format!("latent_{k:0width$}")).collect();
        m.derive(names, latent, Stage::Latent)
    }

    /// Clean reconstruction MSE of a standardized matrix.
    pub fn reconstruction_mse(&self, m: &ExpressionMatrix) -> Result<f64> {
        reconstruction_loss(&self.encoder, &self.decoder, m.values().view())
    }
}

pub fn encode(model: &DamaeModel, m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    model.encode(m)
}

/// Train one model per seed on the same data, in parallel; output order
/// follows `seeds`.
pub fn train_seed_ensemble(
    data: &ExpressionMatrix,
    base_config: &DamaeConfig,
    seeds: &[u64],
) -> Result<Vec<DamaeModel>> {
    let mut seen = HashSet::new();
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(LeapError::validation(format!("duplicate DAMAE seed {dup}")));
    }
    seeds
        .par_iter()
        .map(|&seed| {
            train(
                data,
                &DamaeConfig {
                    seed,
                    ..base_config.clone()
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use ndarray::Array2;

    fn random_batch(seed: u64, r: usize, c: usize) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_simple_fn((r, c), || rng.random_range(-2.0..2.0))
    }

    /// Rank-k standardized matrix plus a little noise.
    pub(crate) fn low_rank(seed: u64, n: usize, genes: usize, rank: usize) -> ExpressionMatrix {
        let mut rng = rng_from_seed(seed);
        let z = Array2::from_shape_simple_fn((n, rank), || rng.sample::<f64, _>(StandardNormal));
        let w = Array2::from_shape_simple_fn((rank, genes), || rng.sample::<f64, _>(StandardNormal));
        let mut x = z.dot(&w) / (rank as f64).sqrt();
        x.mapv_inplace(|v| v + 0.05 * rng.sample::<f64, _>(StandardNormal));
        let sample_ids = (0..n).map(|i| format!("s{i:04}")).collect();
        let gene_ids = (0..genes).map(|j| format!("g{j:04}")).collect();
        ExpressionMatrix::new(sample_ids, gene_ids, x, Stage::Standardized).unwrap()
    }

    fn small_config(seed: u64) -> DamaeConfig {
        DamaeConfig {
            hidden_dim: 32,
            latent_dim: 16,
            batch_size: 32,
            max_epochs: 400,
            patience: 10,
            optimizer: AdamConfig {
                learning_rate: 3e-3,
                ..Default::default()
            },
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_mask_rate_is_identity() {
        let x = random_batch(1, 6, 5);
        let (c, mask) = corrupt(x.view(), 0.0, MaskMode::Bernoulli, &mut rng_from_seed(2)).unwrap();
        assert_eq!(c, x);
        assert!(mask.iter().all(|m| !m));
    }

    #[test]
    fn corrupted_values_come_from_other_rows_of_the_same_column() {
        let x = random_batch(3, 10, 7);
        let copy = x.clone();
        let (c, mask) = corrupt(x.view(), 0.5, MaskMode::Bernoulli, &mut rng_from_seed(4)).unwrap();
        assert_eq!(x, copy);
        for ((i, j), v) in c.indexed_iter() {
            if mask[[i, j]] {
                assert!((0..10).any(|r| r != i && x[[r, j]] == *v));
            } else {
                assert_eq!(*v, x[[i, j]]);
            }
        }
    }

    #[test]
    fn single_row_batch_cannot_be_corrupted() {
        let x = random_batch(5, 1, 4);
        assert!(corrupt(x.view(), 0.3, MaskMode::Bernoulli, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn exact_per_row_mode_masks_fixed_count() {
        let x = random_batch(6, 8, 10);
        let (_, mask) = corrupt(x.view(), 0.3, MaskMode::ExactPerRow, &mut rng_from_seed(7)).unwrap();
        for row in mask.rows() {
            assert_eq!(row.iter().filter(|m| **m).count(), 3);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = random_batch(8, 4, 4);
        assert_eq!(augment(x.view(), 0.0, &mut rng_from_seed(0)).unwrap(), x);
        assert!(augment(x.view(), -1.0, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn batches_never_leave_a_single_row() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order, 3);
        assert_eq!(b.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![3, 3, 3]);
    }

    #[test]
    fn loss_target_is_the_clean_batch() {
        // One instrumented step: the loss returned must equal the MSE between
        // the reconstruction of the corrupted input and the clean batch.
        let data = low_rank(9, 20, 12, 3);
        let cfg = DamaeConfig {
            hidden_dim: 8,
            latent_dim: 4,
            dropout: 0.0,
            ..Default::default()
        };
        let (enc, dec) = build_networks(&cfg, 12, &mut rng_from_seed(1)).unwrap();
        let clean = data.values().clone();
        let (noisy, _) = corrupt(clean.view(), 0.3, MaskMode::Bernoulli, &mut rng_from_seed(2)).unwrap();
        let (loss, _, _) =
            reconstruction_step(&enc, &dec, noisy.view(), clean.view(), true, &mut rng_from_seed(3)).unwrap();
        let recon = dec.predict(enc.predict(noisy.view()).unwrap().view()).unwrap();
        let expected = mse_loss(recon.view(), clean.view()).0;
        let against_noisy = mse_loss(recon.view(), noisy.view()).0;
        assert_eq!(loss, expected);
        assert_ne!(loss, against_noisy);
    }

    #[test]
    fn forced_stop_after_two_epochs() {
        let data = low_rank(10, 60, 10, 2);
        let cfg = DamaeConfig {
            patience: 1,
            min_delta: f64::INFINITY,
            ..small_config(1)
        };
        let model = train(&data, &cfg).unwrap();
        assert_eq!(model.training_log.epochs.len(), 2);
        assert!(model.training_log.stopped_early);
    }

    #[test]
    fn training_is_deterministic_and_restores_best_weights() {
        let data = low_rank(11, 120, 24, 4);
        let a = train(&data, &small_config(5)).unwrap();
        let b = train(&data, &small_config(5)).unwrap();
        assert_eq!(a, b);
        let log = &a.training_log;
        let holdout = data.select_samples(&log.holdout_samples).unwrap();
        let restored = a.reconstruction_mse(&holdout).unwrap();
        assert_eq!(restored, log.best_validation_loss());
        assert_eq!(log.epochs[log.best_epoch - 1].validation_loss, restored);
    }

    #[test]
    fn low_rank_data_is_learnable() {
        let data = low_rank(12, 300, 40, 8);
        let model = train(&data, &small_config(3)).unwrap();
        let log = &model.training_log;
        assert!(
            log.best_validation_loss() < 0.5 * log.initial_validation_loss,
            "{log:?}"
        );
        assert!(log.stopped_early);
    }

    #[test]
    fn encode_is_deterministic_and_row_independent() {
        let data = low_rank(13, 80, 16, 3);
        let model = train(
            &data,
            &DamaeConfig {
                max_epochs: 5,
                ..small_config(2)
            },
        )
        .unwrap();
        let e1 = model.encode(&data).unwrap();
        let e2 = model.encode(&data).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.stage(), Stage::Latent);
        assert_eq!(e1.n_genes(), 16);
        for r in [0, 17, 79] {
            let one = model.encode(&data.select_rows(&[r])).unwrap();
            assert_eq!(one.values().row(0), e1.values().row(r));
        }
    }

    #[test]
    fn encode_rejects_wrong_gene_order() {
        let data = low_rank(14, 40, 6, 2);
        let model = train(
            &data,
            &DamaeConfig {
                max_epochs: 2,
                ..small_config(2)
            },
        )
        .unwrap();
        let mut genes = data.gene_ids().to_vec();
        genes.swap(0, 1);
        let swapped = data.select_genes(&genes).unwrap();
        assert!(model.encode(&swapped).is_err());
    }

    #[test]
    fn different_seeds_give_different_embeddings() {
        let data = low_rank(15, 100, 20, 4);
        let cfg = DamaeConfig {
            max_epochs: 30,
            ..small_config(0)
        };
        let models = train_seed_ensemble(&data, &cfg, &[1, 2]).unwrap();
        let a = models[0].encode(&data).unwrap();
        let b = models[1].encode(&data).unwrap();
        let diff = (a.values() - b.values()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff > 1e-3);
    }

    #[test]
    fn seed_ensemble_matches_sequential_training() {
        let data = low_rank(16, 80, 12, 3);
        let cfg = DamaeConfig {
            max_epochs: 15,
            ..small_config(0)
        };
        let seeds = [4, 9, 1];
        let parallel = train_seed_ensemble(&data, &cfg, &seeds).unwrap();
        for (model, seed) in parallel.iter().zip(seeds) {
            let sequential = train(&data, &DamaeConfig { seed, ..cfg.clone() }).unwrap();
            assert_eq!(*model, sequential);
        }
        assert!(train_seed_ensemble(&data, &cfg, &[1, 1]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DamaeConfig {
            mask_rate: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DamaeConfig {
            holdout_fraction: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DamaeConfig {
            patience: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DamaeConfig::default().validate().is_ok());
    }
}
