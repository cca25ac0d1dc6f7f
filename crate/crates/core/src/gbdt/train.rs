use super::objective::{Objective, Targets};
use super::tree::{grow, Node, Tree, TreeParams};
use super::{GbdtHyperparams, GbdtModel, Loss, Matrix};
use crate::error::{Error, Result};

/// Step halvings tried before a round is committed as a no-op.
const MAX_BACKTRACKS: usize = 40;

fn check_matrix(x: &Matrix, n_targets: usize) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::EmptyInput);
    }
    if n_targets != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            found: n_targets,
        });
    }
    if let Some(r) = (0..x.n_rows()).find(|&r| x.row(r).iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(r));
    }
    Ok(())
}

/// Fits a squared-error regressor. `seed` is accepted for interface
/// stability; the learner itself is deterministic.
pub fn fit_regression(
    x: &Matrix,
    y: &[f64],
    hyper: &GbdtHyperparams,
    _seed: u64,
) -> Result<GbdtModel> {
    hyper.validate()?;
    if hyper.loss != Loss::SquaredError {
        return Err(Error::InvalidHyperparams(
            "regression requires squared_error loss".into(),
        ));
    }
    check_matrix(x, y.len())?;
    if let Some(r) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(r));
    }
    let objective = Objective {
        loss: Loss::SquaredError,
        targets: Targets::Real(y),
        n_outputs: 1,
    };
    Ok(boost(x, &objective, hyper, 0.0))
}

/// Fits a binary (logistic) or multiclass (softmax) classifier. Every class
/// in `0..n_classes` must occur in `y`.
pub fn fit_classification(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    hyper: &GbdtHyperparams,
    _seed: u64,
) -> Result<GbdtModel> {
    hyper.validate()?;
    let n_outputs = match hyper.loss {
        Loss::LogisticBinary if n_classes == 2 => 1,
        Loss::SoftmaxMulticlass if n_classes >= 2 => n_classes,
        _ => {
            return Err(Error::InvalidHyperparams(format!(
                "loss {:?} cannot fit {n_classes} classes",
                hyper.loss
            )))
        }
    };
    check_matrix(x, y.len())?;
    let mut seen = vec![false; n_classes];
    for &c in y {
        if c >= n_classes {
            return Err(Error::LabelOutOfRange {
                label: c,
                n_classes,
            });
        }
        seen[c] = true;
    }
    if let Some(class) = seen.iter().position(|s| !s) {
        return Err(Error::MissingClass { class, n_classes });
    }
    let objective = Objective {
        loss: hyper.loss,
        targets: Targets::Class(y),
        n_outputs,
    };
    Ok(boost(x, &objective, hyper, hyper.l2_leaf_reg))
}

fn presort(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
            idx
        })
        .collect()
}

fn leaf_value(tree: &Tree, node: usize) -> f64 {
    match tree.nodes[node] {
        Node::Leaf { value } => value,
        Node::Split { .. } => unreachable!("rows always end in leaves"),
    }
}

/// Boosting loop. Each round grows one tree per output, scales leaves by the
/// learning rate and halves the step until the training loss does not
/// increase, so the loss sequence is monotone.
fn boost(x: &Matrix, objective: &Objective, hyper: &GbdtHyperparams, l2: f64) -> GbdtModel {
    let n = x.n_rows();
    let k = objective.n_outputs;
    let base_scores = objective.base_scores();
    let mut raw: Vec<f64> = (0..n).flat_map(|_| base_scores.iter().copied()).collect();
    let mut current_loss = objective.loss_value(&raw);
    let sorted = presort(x);
    let params = TreeParams {
        max_depth: hyper.max_depth,
        min_samples_leaf: hyper.min_samples_leaf,
        l2,
    };

    let mut rounds = Vec::with_capacity(hyper.n_rounds);
    let mut candidate = vec![0.0; raw.len()];
    for _ in 0..hyper.n_rounds {
        let grads = objective.gradients(&raw);
        let grown: Vec<(Tree, Vec<usize>)> = grads
            .iter()
            .map(|(g, h)| grow(x, &sorted, g, h, params))
            .collect();

        let mut step = hyper.learning_rate;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trees: Vec<Tree> = grown
                .iter()
                .map(|(t, _)| {
                    let mut t = t.clone();
                    t.scale(step);
                    t
                })
                .collect();
            for i in 0..n {
                for (out, (tree, (_, leaf_of))) in trees.iter().zip(&grown).enumerate() {
                    candidate[i * k + out] = raw[i * k + out] + leaf_value(tree, leaf_of[i]);
                }
            }
            let loss = objective.loss_value(&candidate);
            if loss <= current_loss {
                accepted = Some((trees, loss));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trees, loss)) => {
                std::mem::swap(&mut raw, &mut candidate);
                current_loss = loss;
                rounds.push(trees);
            }
            None => rounds.push(vec![Tree::leaf(0.0); k]),
        }
    }

    GbdtModel {
        loss: objective.loss,
        n_features: x.n_cols(),
        base_scores,
        trees: rounds,
    }
}
