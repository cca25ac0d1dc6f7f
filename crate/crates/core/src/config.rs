//! Run configuration: one JSON document describing inputs, the shadow plan,
//! the generator and the attack grid. Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{Candidate, FeatureSet, PredictorOptions};
use crate::error::{Error, Result};
use crate::gbdt::{GbdtHyperparams, Loss};
use crate::generators::{ExternalGenerator, GeneratorSpec};
use crate::metrics::DEFAULT_FPR_CAP;
use crate::seed::DEFAULT_SEED;
use crate::shadow::{ShadowRunPlan, DEFAULT_MIN_SPLIT_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub aux: PathBuf,
    pub target_synthetic: PathBuf,
    /// Must carry a `record_id` column.
    pub challenge: PathBuf,
    /// Optional `record_id,label` file for evaluating the challenge scores.
    #[serde(default)]
    pub challenge_labels: Option<PathBuf>,
    /// Optional schema JSON; inferred from the auxiliary data otherwise.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub n_shadows: usize,
    pub n_train: usize,
    pub n_eval: usize,
    #[serde(default)]
    pub n_synth: Option<usize>,
    #[serde(default = "default_min_split")]
    pub min_split_size: usize,
}

fn default_min_split() -> usize {
    DEFAULT_MIN_SPLIT_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    Leaky {
        leakage: f64,
        noise_scale: f64,
        #[serde(default)]
        flip_prob: f64,
    },
    /// Program and arguments; see [`ExternalGenerator`] for placeholders.
    External { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub name: String,
    #[serde(flatten)]
    pub hyper: GbdtHyperparams,
}

/// Two attack-classifier presets: a shallow, slowly-learning ensemble and a
/// deeper, more regularized one.
pub fn classifier_presets() -> Vec<ClassifierConfig> {
    vec![
        ClassifierConfig {
            name: "gbdt-shallow".into(),
            hyper: crate::attack::default_attack_hyper(),
        },
        ClassifierConfig {
            name: "gbdt-deep".into(),
            hyper: GbdtHyperparams {
                n_rounds: 80,
                max_depth: 6,
                learning_rate: 0.1,
                min_samples_leaf: 20,
                loss: Loss::LogisticBinary,
                l2_leaf_reg: 3.0,
            },
        },
    ]
}

fn default_classifiers() -> Vec<ClassifierConfig> {
    classifier_presets().into_iter().take(1).collect()
}

fn default_feature_sets() -> Vec<FeatureSet> {
    vec![FeatureSet::all()]
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_cap() -> f64 {
    DEFAULT_FPR_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub plan: PlanConfig,
    pub generator: GeneratorConfig,
    #[serde(default = "default_feature_sets")]
    pub feature_sets: Vec<FeatureSet>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierConfig>,
    #[serde(default)]
    pub predictors: PredictorOptions,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub fpr_cap: f64,
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Directory that relative paths resolve against.
    pub base_dir: PathBuf,
    /// SHA-256 of the config file bytes, hex encoded.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses, validates and checks that every input path exists.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::config("config", "file is not UTF-8"))?;
        let config = Self::from_json(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate()?;
        let loaded = LoadedConfig {
            config,
            base_dir,
            hash: sha256_hex(&bytes),
        };
        loaded.check_paths()?;
        Ok(loaded)
    }

    pub fn shadow_plan(&self) -> ShadowRunPlan {
        ShadowRunPlan {
            n_shadows: self.plan.n_shadows,
            n_train: self.plan.n_train,
            n_eval: self.plan.n_eval,
            n_synth: self.plan.n_synth,
            master_seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.plan;
        if p.n_shadows == 0 {
            return Err(Error::config("plan.n_shadows", "must be positive"));
        }
        if p.n_train == 0 {
            return Err(Error::config("plan.n_train", "must be positive"));
        }
        if p.n_eval == 0 {
            return Err(Error::config("plan.n_eval", "must be positive"));
        }
        if p.n_train + p.n_eval != p.n_shadows {
            return Err(Error::config(
                "plan.n_train + plan.n_eval",
                format!("{} + {} must equal plan.n_shadows = {}", p.n_train, p.n_eval, p.n_shadows),
            ));
        }
        if p.n_synth == Some(0) {
            return Err(Error::config("plan.n_synth", "must be positive"));
        }
        if p.min_split_size == 0 {
            return Err(Error::config("plan.min_split_size", "must be positive"));
        }
        match &self.generator {
            GeneratorConfig::Leaky {
                leakage,
                noise_scale,
                flip_prob,
            } => GeneratorSpec {
                leakage: *leakage,
                noise_scale: *noise_scale,
                flip_prob: *flip_prob,
            }
            .validate()
            .map_err(|e| Error::config("generator", e.to_string()))?,
            GeneratorConfig::External { command } => {
                if command.is_empty() {
                    return Err(Error::config("generator.command", "must not be empty"));
                }
            }
        }
        if self.feature_sets.is_empty() {
            return Err(Error::config("feature_sets", "must not be empty"));
        }
        if self.classifiers.is_empty() {
            return Err(Error::config("classifiers", "must not be empty"));
        }
        for c in &self.classifiers {
            c.hyper
                .validate()
                .map_err(|e| Error::config(&format!("classifiers.{}", c.name), e.to_string()))?;
        }
        self.predictors
            .hyper
            .validate()
            .map_err(|e| Error::config("predictors.hyper", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.fpr_cap) {
            return Err(Error::config("fpr_cap", format!("{} outside [0, 1]", self.fpr_cap)));
        }
        Ok(())
    }

    /// Every (classifier, feature set) pair, classifier-major.
    pub fn candidates(&self) -> Vec<Candidate> {
        self.classifiers
            .iter()
            .flat_map(|c| {
                self.feature_sets.iter().map(move |&fs| Candidate {
                    classifier: c.name.clone(),
                    feature_set: fs,
                    hyper: c.hyper.clone(),
                })
            })
            .collect()
    }

    pub fn external_generator(&self) -> Option<Result<ExternalGenerator>> {
        match &self.generator {
            GeneratorConfig::External { command } => Some(ExternalGenerator::new(command.clone())),
            GeneratorConfig::Leaky { .. } => None,
        }
    }
}

impl LoadedConfig {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.output_dir)
    }

    fn check_paths(&self) -> Result<()> {
        let p = &self.config.paths;
        let mut inputs = vec![
            ("paths.aux", Some(&p.aux)),
            ("paths.target_synthetic", Some(&p.target_synthetic)),
            ("paths.challenge", Some(&p.challenge)),
        ];
        inputs.push(("paths.challenge_labels", p.challenge_labels.as_ref()));
        inputs.push(("paths.schema", p.schema.as_ref()));
        for (field, path) in inputs {
            if let Some(path) = path {
                let full = self.resolve(path);
                if !full.is_file() {
                    return Err(Error::config(field, format!("{} does not exist", full.display())));
                }
            }
        }
        Ok(())
    }
}
