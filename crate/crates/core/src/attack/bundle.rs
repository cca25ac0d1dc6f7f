//! On-disk attack bundle: everything needed to score challenge records
//! against one target synthetic table.
//!
//! ```text
//! bundle/
//!   manifest.json
//!   layout.json
//!   classifier.json
//!   predictors/column_000.json ...
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttackClassifier, AttributePredictor, PredictorTask, ProfileLayout};
use crate::error::{Error, Result};
use crate::gbdt::GbdtModel;

pub const BUNDLE_VERSION: &str = "bundle-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: String,
    pub tool_version: String,
    pub config_hash: String,
    pub classifier: String,
    pub feature_set: String,
    pub predictors: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PredictorFile {
    target: usize,
    inputs: Vec<usize>,
    task: PredictorTask,
    model: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackBundle {
    pub classifier: AttackClassifier,
    /// Trained on the target synthetic table.
    pub predictors: Vec<AttributePredictor>,
    pub manifest: BundleManifest,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl AttackBundle {
    pub fn new(
        classifier: AttackClassifier,
        predictors: Vec<AttributePredictor>,
        classifier_name: &str,
        config_hash: &str,
    ) -> Self {
        let manifest = BundleManifest {
            version: BUNDLE_VERSION.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            classifier: classifier_name.to_string(),
            feature_set: classifier.feature_set().name(),
            predictors: predictors
                .iter()
                .map(|p| format!("predictors/column_{:03}.json", p.target))
                .collect(),
        };
        Self {
            classifier,
            predictors,
            manifest,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let pred_dir = dir.join("predictors");
        std::fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
        write(&dir.join("layout.json"), &self.classifier.layout.to_json()?)?;
        write(&dir.join("classifier.json"), &self.classifier.model.to_json()?)?;
        for (p, name) in self.predictors.iter().zip(&self.manifest.predictors) {
            let file = PredictorFile {
                target: p.target,
                inputs: p.inputs.clone(),
                task: p.task,
                model: serde_json::from_str(&p.model.to_json()?)?,
            };
            write(&dir.join(name), &serde_json::to_string(&file)?)?;
        }
        write(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(&self.manifest)?,
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest = serde_json::from_str(&read(&dir.join("manifest.json"))?)?;
        if manifest.version != BUNDLE_VERSION {
            return Err(Error::InvalidBundle(format!(
                "unsupported version `{}`",
                manifest.version
            )));
        }
        let layout: ProfileLayout = serde_json::from_str(&read(&dir.join("layout.json"))?)?;
        if ProfileLayout::new(&layout.schema, layout.feature_set)? != layout {
            return Err(Error::InvalidBundle(
                "layout does not match its schema and feature set".into(),
            ));
        }
        let model = GbdtModel::from_json(&read(&dir.join("classifier.json"))?)?;
        if model.n_features() != layout.width() {
            return Err(Error::InvalidBundle(format!(
                "classifier expects {} features, layout has {}",
                model.n_features(),
                layout.width()
            )));
        }
        let predictors = manifest
            .predictors
            .iter()
            .map(|name| {
                let file: PredictorFile = serde_json::from_str(&read(&dir.join(name))?)?;
                let model = GbdtModel::from_json(&file.model.to_string())?;
                if model.n_features() != file.inputs.len() {
                    return Err(Error::InvalidBundle(format!("{name}: input width mismatch")));
                }
                Ok(AttributePredictor {
                    target: file.target,
                    inputs: file.inputs,
                    task: file.task,
                    model,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            classifier: AttackClassifier { model, layout },
            predictors,
            manifest,
        })
    }
}
