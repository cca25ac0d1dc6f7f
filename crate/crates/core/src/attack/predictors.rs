//! Per-column attribute predictors trained on synthetic data only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{fit_classification, fit_regression, GbdtHyperparams, GbdtModel, Loss, Matrix};
use crate::seed::derive_seed;
use crate::tabular::{Cell, ColumnKind, Dataset, Provenance, TableSchema};

pub const DEFAULT_MIN_ROWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorOptions {
    /// Shared by every column; the loss is chosen per column.
    pub hyper: GbdtHyperparams,
    pub min_rows: usize,
}

impl Default for PredictorOptions {
    fn default() -> Self {
        Self {
            hyper: GbdtHyperparams {
                n_rounds: 60,
                max_depth: 4,
                learning_rate: 0.15,
                min_samples_leaf: 3,
                ..GbdtHyperparams::default()
            },
            min_rows: DEFAULT_MIN_ROWS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PredictorTask {
    Regression,
    Classification { n_classes: usize },
}

/// What a predictor says about its target cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predicted {
    Value(f64),
    Class(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributePredictor {
    pub target: usize,
    pub inputs: Vec<usize>,
    pub task: PredictorTask,
    pub model: GbdtModel,
}

impl AttributePredictor {
    pub fn input_vector(&self, record: &[Cell]) -> Vec<f64> {
        self.inputs.iter().map(|&c| record[c].as_f64()).collect()
    }

    pub fn predict(&self, record: &[Cell]) -> Result<Predicted> {
        let x = self.input_vector(record);
        match self.task {
            PredictorTask::Regression => Ok(Predicted::Value(self.model.predict_value(&x)?)),
            PredictorTask::Classification { .. } => {
                let class = self.model.predict(&x)?.argmax().ok_or_else(|| {
                    Error::SchemaMismatch("classifier produced a regression output".into())
                })?;
                Ok(Predicted::Class(class))
            }
        }
    }
}

/// Fits one predictor per non-excluded column of `synthetic`, each seeing
/// every other non-excluded column. Columns are trained in parallel; column
/// `c` uses seed `derive_seed(seed, "column", c)`.
pub fn train_attribute_predictors(
    synthetic: &Dataset,
    options: &PredictorOptions,
    seed: u64,
) -> Result<Vec<AttributePredictor>> {
    if synthetic.provenance() != Provenance::Synthetic {
        return Err(Error::NotSynthetic);
    }
    let schema = synthetic.schema();
    let features = schema.feature_columns();
    if features.len() < 2 {
        return Err(Error::TooFewColumns(features.len()));
    }
    if synthetic.len() < options.min_rows {
        return Err(Error::InsufficientRows {
            needed: options.min_rows,
            available: synthetic.len(),
        });
    }
    check_category_coverage(synthetic, &features)?;

    features
        .par_iter()
        .map(|&target| {
            let inputs: Vec<usize> = features.iter().copied().filter(|&c| c != target).collect();
            let x = input_matrix(synthetic, &inputs)?;
            let column_seed = derive_seed(seed, "column", target as u64);
            let (task, model) = match schema.columns[target].kind {
                ColumnKind::Numeric => {
                    let y: Vec<f64> = synthetic.column(target).map(Cell::as_f64).collect();
                    let hyper = options.hyper.clone().with_loss(Loss::SquaredError);
                    (PredictorTask::Regression, fit_regression(&x, &y, &hyper, column_seed)?)
                }
                ColumnKind::Categorical => {
                    let n_classes = schema.columns[target].n_categories();
                    let model = if n_classes == 1 {
                        GbdtModel::constant_class(inputs.len())
                    } else {
                        let y: Vec<usize> =
                            synthetic.column(target).map(|c| c.as_f64() as usize).collect();
                        let loss = if n_classes == 2 {
                            Loss::LogisticBinary
                        } else {
                            Loss::SoftmaxMulticlass
                        };
                        let hyper = options.hyper.clone().with_loss(loss);
                        fit_classification(&x, &y, n_classes, &hyper, column_seed)?
                    };
                    (PredictorTask::Classification { n_classes }, model)
                }
            };
            Ok(AttributePredictor {
                target,
                inputs,
                task,
                model,
            })
        })
        .collect()
}

fn input_matrix(data: &Dataset, inputs: &[usize]) -> Result<Matrix> {
    let mut values = Vec::with_capacity(data.len() * inputs.len());
    for row in data.rows() {
        values.extend(inputs.iter().map(|&c| row[c].as_f64()));
    }
    Matrix::new(values, data.len(), inputs.len())
}

fn check_category_coverage(data: &Dataset, features: &[usize]) -> Result<()> {
    let schema = data.schema();
    for &c in features {
        let col = &schema.columns[c];
        if col.kind != ColumnKind::Categorical {
            continue;
        }
        let mut seen = vec![false; col.n_categories()];
        for cell in data.column(c) {
            seen[cell.as_f64() as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::MissingCategory {
                column: col.name.clone(),
                category: col.categories.as_ref().expect("categorical")[missing].clone(),
            });
        }
    }
    Ok(())
}

/// Checks that `predictors` cover `columns` of `schema` with matching tasks
/// and returns them indexed by target column.
pub(crate) fn index_predictors<'a>(
    predictors: &'a [AttributePredictor],
    schema: &TableSchema,
    columns: &[usize],
) -> Result<Vec<Option<&'a AttributePredictor>>> {
    let mut by_column = vec![None; schema.len()];
    for p in predictors {
        if p.target >= schema.len() || p.inputs.iter().any(|&c| c >= schema.len()) {
            return Err(Error::SchemaMismatch(format!(
                "predictor for column {} does not fit a {}-column schema",
                p.target,
                schema.len()
            )));
        }
        let expected = match schema.columns[p.target].kind {
            ColumnKind::Numeric => PredictorTask::Regression,
            ColumnKind::Categorical => PredictorTask::Classification {
                n_classes: schema.columns[p.target].n_categories(),
            },
        };
        if p.task != expected {
            return Err(Error::SchemaMismatch(format!(
                "predictor task for column `{}` does not match the schema",
                schema.columns[p.target].name
            )));
        }
        by_column[p.target] = Some(p);
    }
    for &c in columns {
        if by_column[c].is_none() {
            return Err(Error::SchemaMismatch(format!(
                "no predictor for column `{}`",
                schema.columns[c].name
            )));
        }
    }
    Ok(by_column)
}
