use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::damae::DamaeConfig;
use crate::dataset::{CurationParams, SyntheticSpec};
use crate::error::{LeapError, Result};
use crate::regress::TuneConfig;
use crate::seed::{derive_seed, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub expression: PathBuf,
    /// Optional sidecar with tissue and dataset labels.
    pub metadata: Option<PathBuf>,
    pub responses: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            expression: "data/expression.csv".into(),
            metadata: Some("data/metadata.csv".into()),
            responses: "data/responses.csv".into(),
            output: "output".into(),
        }
    }
}

/// Which samples the standardization statistics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitPopulation {
    /// Every sample in the expression file.
    Corpus,
    /// The training samples of each split (the representation is retrained
    /// per split).
    TrainSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessParams {
    pub k_per_dataset: usize,
    pub fit_population: FitPopulation,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            k_per_dataset: 5000,
            fit_population: FitPopulation::Corpus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleParams {
    pub n_representations: usize,
    /// Explicit DAMAE seeds; when empty they are derived from the master seed.
    pub seeds: Vec<u64>,
    /// Representations averaged at prediction time; empty means all.
    pub representations_subset: Vec<usize>,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self {
            n_representations: 5,
            seeds: Vec::new(),
            representations_subset: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Challenge {
    RepeatedHoldout,
    LeaveOneTissueOut,
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub challenge: Challenge,
    pub holdout_fraction: f64,
    pub repeats: usize,
    pub test_subset_size: usize,
    pub n_bootstrap: usize,
    /// Dataset tags of the two domains for the transfer challenge.
    pub train_domain: String,
    pub test_domain: String,
    pub removed_per_repeat: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            challenge: Challenge::RepeatedHoldout,
            holdout_fraction: 0.2,
            repeats: 10,
            test_subset_size: 10,
            n_bootstrap: 1000,
            train_domain: String::new(),
            test_domain: String::new(),
            removed_per_repeat: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub knn: bool,
    pub k: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { knn: false, k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputParams {
    /// Also fit on every labelled sample and save the bundle.
    pub bundle: bool,
}

impl Default for OutputParams {
    fn default() -> Self {
        Self { bundle: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationParams {
    pub steps: Vec<String>,
}

impl Default for AblationParams {
    fn default() -> Self {
        Self {
            steps: vec!["single_model".into(), "fold_ensemble".into(), "full_leap".into()],
        }
    }
}

/// The whole run, as read from one TOML document. The `seed` fields of the
/// `synthetic`, `damae` and `tune` tables are ignored: every stream is
/// derived from the master `seed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synthetic: SyntheticSpec,
    pub curation: CurationParams,
    pub preprocess: PreprocessParams,
    pub damae: DamaeConfig,
    pub tune: TuneConfig,
    pub ensemble: EnsembleParams,
    pub task: TaskConfig,
    pub baseline: BaselineParams,
    pub output: OutputParams,
    pub ablation: AblationParams,
}

/// Seeds of every random stream in a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub synthetic: u64,
    pub damae: Vec<u64>,
    pub tune: u64,
    pub split: u64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LeapError::validation(format!("config: {e}")))
    }

    /// Read a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LeapError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.expression);
        fix(&mut self.paths.responses);
        fix(&mut self.paths.output);
        if let Some(m) = self.paths.metadata.as_mut() {
            fix(m);
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LeapError::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.damae.validate()?;
        self.tune.validate()?;
        if self.ensemble.n_representations == 0 && self.ensemble.seeds.is_empty() {
            return Err(LeapError::validation("need at least one representation"));
        }
        if self.preprocess.k_per_dataset == 0 {
            return Err(LeapError::validation("k_per_dataset must be at least 1"));
        }
        if self.baseline.k == 0 {
            return Err(LeapError::validation("baseline k must be at least 1"));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        let damae = if self.ensemble.seeds.is_empty() {
            (0..self.ensemble.n_representations)
                .map(|r| derive_seed(self.seed, &["damae", &r.to_string()]))
                .collect()
        } else {
            self.ensemble.seeds.clone()
        };
        Seeds {
            master: self.seed,
            synthetic: derive_seed(self.seed, &["synthetic"]),
            damae,
            tune: derive_seed(self.seed, &["tune"]),
            split: derive_seed(self.seed, &["split"]),
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.seeds().synthetic,
            ..self.synthetic.clone()
        }
    }

    pub fn tune_config(&self) -> TuneConfig {
        TuneConfig {
            seed: self.seeds().tune,
            ..self.tune.clone()
        }
    }

    /// SHA-256 of the canonical TOML rendering of this config.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml_string()?.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig {
            seed: 17,
            ..Default::default()
        };
        cfg.task.challenge = Challenge::Transfer;
        cfg.curation.min_label_sd = Some(0.2);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("sed = 1").is_err());
        assert!(RunConfig::from_toml_str("[damae]\nhiden_dim = 3").is_err());
    }

    #[test]
    fn seeds_follow_the_master_seed() {
        let a = RunConfig {
            seed: 1,
            ..Default::default()
        }
        .seeds();
        let b = RunConfig {
            seed: 2,
            ..Default::default()
        }
        .seeds();
        assert_eq!(a.damae.len(), 5);
        assert_ne!(a.damae, b.damae);
        assert_ne!(a.split, b.split);
        let fixed = RunConfig {
            ensemble: EnsembleParams {
                seeds: vec![7, 8],
                ..Default::default()
            },
            ..Default::default()
        };
        assert_eq!(fixed.seeds().damae, vec![7, 8]);
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let mut cfg = RunConfig::default();
        cfg.paths.output = "/abs/out".into();
        cfg.resolve_paths(Path::new("/etc/leap"));
        assert_eq!(cfg.paths.expression, PathBuf::from("/etc/leap/data/expression.csv"));
        assert_eq!(cfg.paths.output, PathBuf::from("/abs/out"));
    }
}
