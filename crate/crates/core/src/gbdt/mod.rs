//! Gradient-boosted decision trees.
//!
//! One engine serves both the per-column attribute predictors (regression or
//! classification) and the binary attack classifier. Splits are found by
//! exact greedy search over sorted unique values with midpoint thresholds;
//! among equal-gain splits the lowest feature index wins, then the lowest
//! threshold. Squared-error leaves are residual means, logistic and softmax
//! leaves are Newton steps `-G / (H + l2_leaf_reg)`.
//!
//! Serialized models are JSON documents:
//!
//! ```text
//! { "version": "gbdt-v1",
//!   "loss": "squared_error" | "logistic_binary" | "softmax_multiclass",
//!   "n_features": 3,
//!   "base_scores": [0.5],
//!   "trees": [ [ {"nodes": [ {"type": "split", "feature": 0, "threshold": 0.5,
//!                              "left": 1, "right": 2},
//!                             {"type": "leaf", "value": -0.05}, ... ]} ], ... ] }
//! ```
//!
//! `trees` holds one entry per boosting round, each with one tree per model
//! output (one for regression and binary, one per class for softmax). Leaf
//! values already include the learning rate.

mod objective;
mod train;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use train::{fit_classification, fit_regression};
pub use tree::{Node, Tree};

pub const MODEL_VERSION: &str = "gbdt-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    SquaredError,
    LogisticBinary,
    SoftmaxMulticlass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtHyperparams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub loss: Loss,
    /// L2 penalty on Newton leaf values; ignored by squared error.
    pub l2_leaf_reg: f64,
}

impl Default for GbdtHyperparams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            loss: Loss::SquaredError,
            l2_leaf_reg: 1.0,
        }
    }
}

impl GbdtHyperparams {
    pub fn with_loss(mut self, loss: Loss) -> Self {
        self.loss = loss;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparams(m.to_string()));
        if self.n_rounds == 0 {
            return bad("n_rounds must be positive");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be positive");
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return bad("l2_leaf_reg must be non-negative");
        }
        Ok(())
    }
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                found: data.len(),
            });
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len(), n_cols)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |r| self.row(r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Value(f64),
    Probabilities(Vec<f64>),
}

impl Prediction {
    /// Index of the most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        match self {
            Prediction::Value(_) => None,
            Prediction::Probabilities(p) => Some(argmax(p)),
        }
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    loss: Loss,
    n_features: usize,
    base_scores: Vec<f64>,
    trees: Vec<Vec<Tree>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: String,
    #[serde(flatten)]
    model: GbdtModel,
}

impl GbdtModel {
    /// A model with no trees that always predicts class 0. Used for
    /// categorical columns with a single category.
    pub fn constant_class(n_features: usize) -> Self {
        Self {
            loss: Loss::SoftmaxMulticlass,
            n_features,
            base_scores: vec![0.0],
            trees: Vec::new(),
        }
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    pub fn base_scores(&self) -> &[f64] {
        &self.base_scores
    }

    pub fn trees(&self) -> &[Vec<Tree>] {
        &self.trees
    }

    /// Number of classes for classifiers, 1 for regression.
    pub fn n_classes(&self) -> usize {
        match self.loss {
            Loss::SquaredError => 1,
            Loss::LogisticBinary => 2,
            Loss::SoftmaxMulticlass => self.base_scores.len(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(0));
        }
        Ok(())
    }

    /// Raw additive scores after the first `rounds` boosting rounds.
    pub fn raw_scores_staged(&self, x: &[f64], rounds: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = self.base_scores.clone();
        for round in self.trees.iter().take(rounds) {
            for (acc, tree) in out.iter_mut().zip(round) {
                *acc += tree.predict(x);
            }
        }
        Ok(out)
    }

    pub fn raw_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.raw_scores_staged(x, self.trees.len())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.predict_staged(x, self.trees.len())
    }

    pub fn predict_staged(&self, x: &[f64], rounds: usize) -> Result<Prediction> {
        let raw = self.raw_scores_staged(x, rounds)?;
        Ok(objective::transform(self.loss, &raw))
    }

    /// Regression output. Errors on classifiers.
    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        match self.predict(x)? {
            Prediction::Value(v) => Ok(v),
            Prediction::Probabilities(_) => Err(Error::InvalidHyperparams(
                "predict_value called on a classifier".into(),
            )),
        }
    }

    /// Class probabilities. Errors on regressors.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.predict(x)? {
            Prediction::Probabilities(p) => Ok(p),
            Prediction::Value(_) => Err(Error::InvalidHyperparams(
                "predict_proba called on a regressor".into(),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            version: MODEL_VERSION.to_string(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_VERSION {
            return Err(Error::InvalidHyperparams(format!(
                "unsupported model version `{}`",
                file.version
            )));
        }
        let model = file.model;
        let outputs = model.base_scores.len();
        let ok = outputs > 0
            && match model.loss {
                Loss::SquaredError | Loss::LogisticBinary => outputs == 1,
                Loss::SoftmaxMulticlass => true,
            }
            && model.trees.iter().all(|round| {
                round.len() == outputs
                    && round.iter().all(|t| {
                        t.is_well_formed()
                            && t.max_feature().is_none_or(|f| f < model.n_features)
                    })
            });
        if !ok {
            return Err(Error::InvalidHyperparams("malformed model document".into()));
        }
        Ok(model)
    }
}
