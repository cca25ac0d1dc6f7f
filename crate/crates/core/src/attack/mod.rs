//! The attack: error profiles from synthetic-only attribute predictors, a
//! boosted-tree membership classifier, and feature-set selection.

mod bundle;
mod features;
mod predictors;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbdt::{fit_classification, GbdtHyperparams, GbdtModel, Loss, Matrix};
use crate::metrics;
use crate::seed::derive_seed;
use crate::shadow::ShadowSplit;
use crate::tabular::{Cell, Dataset};

pub use bundle::{AttackBundle, BundleManifest, BUNDLE_VERSION};
pub use features::{
    compute_error_ratio, FeatureKind, FeatureSet, LayoutEntry, ProfileLayout, ERROR_RATIO_CAP,
    ERROR_RATIO_EPS,
};
pub use predictors::{
    train_attribute_predictors, AttributePredictor, Predicted, PredictorOptions, PredictorTask,
    DEFAULT_MIN_ROWS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub record_id: u64,
    pub values: Vec<f64>,
    /// 1 = member, 0 = non-member.
    pub label: Option<u8>,
}

/// Profiles that share one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub layout: ProfileLayout,
    pub profiles: Vec<ErrorProfile>,
}

impl ProfileSet {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Restricts every profile to the entries of `feature_set`.
    pub fn project(&self, feature_set: FeatureSet) -> Result<ProfileSet> {
        let layout = ProfileLayout::new(&self.layout.schema, feature_set)?;
        let positions = layout.positions_in(&self.layout)?;
        let profiles = self
            .profiles
            .iter()
            .map(|p| ErrorProfile {
                record_id: p.record_id,
                values: positions.iter().map(|&i| p.values[i]).collect(),
                label: p.label,
            })
            .collect();
        Ok(ProfileSet { layout, profiles })
    }

    /// Concatenates sets in order; all must share a layout.
    pub fn concat(sets: &[ProfileSet]) -> Result<ProfileSet> {
        let first = sets.first().ok_or(Error::EmptyInput)?;
        if sets.iter().any(|s| s.layout != first.layout) {
            return Err(Error::LayoutMismatch);
        }
        Ok(ProfileSet {
            layout: first.layout.clone(),
            profiles: sets.iter().flat_map(|s| s.profiles.iter().cloned()).collect(),
        })
    }

    pub fn labels(&self) -> Result<Vec<u8>> {
        self.profiles
            .iter()
            .map(|p| p.label.ok_or(Error::Unlabeled(p.record_id)))
            .collect()
    }

    /// Mean of one layout entry over the profiles with `label`.
    pub fn mean_where(&self, entry: usize, label: u8) -> Option<f64> {
        let vals: Vec<f64> = self
            .profiles
            .iter()
            .filter(|p| p.label == Some(label))
            .map(|p| p.values[entry])
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    fn matrix(&self) -> Result<Matrix> {
        let width = self.layout.width();
        let mut data = Vec::with_capacity(self.len() * width);
        for p in &self.profiles {
            if p.values.len() != width {
                return Err(Error::LayoutMismatch);
            }
            data.extend_from_slice(&p.values);
        }
        Matrix::new(data, self.len(), width)
    }
}

fn check_record(layout: &ProfileLayout, record: &[Cell]) -> Result<()> {
    let schema = &layout.schema;
    if record.len() != schema.len() {
        return Err(Error::RowWidth {
            row: 0,
            found: record.len(),
            expected: schema.len(),
        });
    }
    for (col, cell) in schema.columns.iter().zip(record) {
        let ok = match (col.kind, cell) {
            (crate::tabular::ColumnKind::Numeric, Cell::Num(v)) => v.is_finite(),
            (crate::tabular::ColumnKind::Categorical, Cell::Cat(i)) => (*i as usize) < col.n_categories(),
            _ => false,
        };
        if !ok {
            return Err(Error::SchemaMismatch(format!(
                "record cell for `{}` does not conform to the schema",
                col.name
            )));
        }
    }
    Ok(())
}

fn profile_values(
    by_column: &[Option<&AttributePredictor>],
    layout: &ProfileLayout,
    record: &[Cell],
) -> Result<Vec<f64>> {
    check_record(layout, record)?;
    let mut predicted: Vec<Option<Predicted>> = vec![None; record.len()];
    for c in layout.columns() {
        let p = by_column[c].expect("coverage checked");
        predicted[c] = Some(p.predict(record)?);
    }
    layout
        .entries
        .iter()
        .map(|e| {
            let actual = record[e.column].as_f64();
            let value = match (predicted[e.column].expect("predicted above"), e.kind) {
                (_, FeatureKind::Actual) => actual,
                (Predicted::Value(v), FeatureKind::Prediction) => v,
                (Predicted::Class(k), FeatureKind::Prediction) => k as f64,
                (Predicted::Value(v), FeatureKind::Error) => (actual - v).abs(),
                (Predicted::Value(v), FeatureKind::ErrorRatio) => {
                    compute_error_ratio(actual, v, ERROR_RATIO_EPS, ERROR_RATIO_CAP)
                }
                (Predicted::Class(k), FeatureKind::Accuracy) => f64::from(u8::from(k as f64 == actual)),
                _ => unreachable!("layout only holds applicable pairs"),
            };
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFinite(e.column))
            }
        })
        .collect()
}

/// Builds the error profile of one record: each layout column is predicted
/// from the others and compared with the actual cell.
pub fn extract_profile(
    predictors: &[AttributePredictor],
    layout: &ProfileLayout,
    record: &[Cell],
    record_id: u64,
) -> Result<ErrorProfile> {
    let by_column = predictors::index_predictors(predictors, &layout.schema, &layout.columns())?;
    Ok(ErrorProfile {
        record_id,
        values: profile_values(&by_column, layout, record)?,
        label: None,
    })
}

/// Profiles every row of `data` in parallel, in row order, tagging each with
/// `label`.
pub fn extract_profiles(
    predictors: &[AttributePredictor],
    layout: &ProfileLayout,
    data: &Dataset,
    label: Option<u8>,
) -> Result<ProfileSet> {
    if data.schema() != &layout.schema {
        return Err(Error::SchemaMismatch(
            "records do not share the layout's schema".into(),
        ));
    }
    let by_column = predictors::index_predictors(predictors, &layout.schema, &layout.columns())?;
    let profiles = data
        .rows()
        .par_iter()
        .zip(data.ids().par_iter())
        .map(|(row, &record_id)| {
            Ok(ErrorProfile {
                record_id,
                values: profile_values(&by_column, layout, row)?,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProfileSet {
        layout: layout.clone(),
        profiles,
    })
}

/// Trains predictors on the shadow's synthetic table (seed
/// `derive_seed(master_seed, "predictors", index)`) and profiles its members
/// (label 1) followed by its non-members (label 0).
pub fn shadow_profiles(
    split: &ShadowSplit,
    layout: &ProfileLayout,
    options: &PredictorOptions,
    master_seed: u64,
) -> Result<ProfileSet> {
    let synthetic = split.synthetic.as_ref().ok_or_else(|| {
        Error::ShadowInvariant(split.index, "generator has not been run".into())
    })?;
    let seed = derive_seed(master_seed, "predictors", split.index as u64);
    let predictors = train_attribute_predictors(synthetic, options, seed)?;
    let members = extract_profiles(&predictors, layout, &split.members, Some(1))?;
    let non_members = extract_profiles(&predictors, layout, &split.non_members, Some(0))?;
    ProfileSet::concat(&[members, non_members])
}

/// [`shadow_profiles`] for every split, in parallel, in split order.
pub fn all_shadow_profiles(
    splits: &[ShadowSplit],
    layout: &ProfileLayout,
    options: &PredictorOptions,
    master_seed: u64,
) -> Result<Vec<ProfileSet>> {
    splits
        .par_iter()
        .map(|s| shadow_profiles(s, layout, options, master_seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackClassifier {
    pub model: GbdtModel,
    pub layout: ProfileLayout,
}

impl AttackClassifier {
    pub fn feature_set(&self) -> FeatureSet {
        self.layout.feature_set
    }

    /// Predicted member probability.
    pub fn score(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.layout.width() {
            return Err(Error::LayoutMismatch);
        }
        Ok(self.model.predict_proba(values)?[1])
    }

    pub fn score_set(&self, set: &ProfileSet) -> Result<Vec<f64>> {
        if set.layout != self.layout {
            return Err(Error::LayoutMismatch);
        }
        set.profiles
            .par_iter()
            .map(|p| self.score(&p.values))
            .collect()
    }
}

/// Default attack classifier settings.
pub fn default_attack_hyper() -> GbdtHyperparams {
    GbdtHyperparams {
        n_rounds: 150,
        max_depth: 3,
        learning_rate: 0.05,
        min_samples_leaf: 10,
        loss: Loss::LogisticBinary,
        l2_leaf_reg: 1.0,
    }
}

/// Fits a logistic GBDT on the concatenation of `sets`.
pub fn train_attack_classifier(
    sets: &[ProfileSet],
    hyper: &GbdtHyperparams,
    seed: u64,
) -> Result<AttackClassifier> {
    let all = ProfileSet::concat(sets)?;
    let labels = all.labels()?;
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::SingleClass);
    }
    let x = all.matrix()?;
    let y: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let hyper = hyper.clone().with_loss(Loss::LogisticBinary);
    let model = fit_classification(&x, &y, 2, &hyper, seed)?;
    Ok(AttackClassifier {
        model,
        layout: all.layout,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipScore {
    pub record_id: u64,
    pub score: f64,
}

/// Scores the challenge records in input order. `predictors` must have been
/// trained on the target synthetic table.
pub fn score_membership(
    classifier: &AttackClassifier,
    predictors: &[AttributePredictor],
    challenge: &Dataset,
) -> Result<Vec<MembershipScore>> {
    if challenge.schema() != &classifier.layout.schema {
        return Err(Error::SchemaMismatch(
            "challenge records do not match the attack schema".into(),
        ));
    }
    let profiles = extract_profiles(predictors, &classifier.layout, challenge, None)?;
    let scores = classifier.score_set(&profiles)?;
    Ok(profiles
        .profiles
        .iter()
        .zip(scores)
        .map(|(p, score)| MembershipScore {
            record_id: p.record_id,
            score,
        })
        .collect())
}

/// `record_id,score` with six decimals.
pub fn scores_csv(scores: &[MembershipScore]) -> String {
    let mut out = String::from("record_id,score\n");
    for s in scores {
        out.push_str(&format!("{},{:.6}\n", s.record_id, s.score));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Label for the hyperparameter preset.
    pub classifier: String,
    pub feature_set: FeatureSet,
    pub hyper: GbdtHyperparams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub classifier: String,
    pub feature_set: String,
    pub tpr_at_fpr: f64,
    pub auc_roc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Index into the candidate list.
    pub best: usize,
    /// One row per candidate, in candidate order.
    pub report: Vec<AblationRow>,
}

impl Selection {
    pub fn best_row(&self) -> &AblationRow {
        &self.report[self.best]
    }
}

/// Trains every candidate on `train` (projected to its feature set) and
/// evaluates on `validation`. The winner has the highest TPR at `fpr_cap`,
/// then the highest AUC, then the smallest feature-set name, then the
/// earliest position.
pub fn select_best_config(
    candidates: &[Candidate],
    train: &ProfileSet,
    validation: &ProfileSet,
    fpr_cap: f64,
    seed: u64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    if train.layout != validation.layout {
        return Err(Error::LayoutMismatch);
    }
    let val_labels = validation.labels()?;
    let report = candidates
        .par_iter()
        .enumerate()
        .map(|(i, cand)| {
            let tr = train.project(cand.feature_set)?;
            let va = validation.project(cand.feature_set)?;
            let clf = train_attack_classifier(&[tr], &cand.hyper, derive_seed(seed, "candidate", i as u64))?;
            let scores = clf.score_set(&va)?;
            Ok(AblationRow {
                classifier: cand.classifier.clone(),
                feature_set: cand.feature_set.name(),
                tpr_at_fpr: metrics::tpr_at_fpr(&scores, &val_labels, fpr_cap)?,
                auc_roc: metrics::auc(&scores, &val_labels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for i in 1..report.len() {
        if ranks_above(&report[i], &report[best]) {
            best = i;
        }
    }
    Ok(Selection { best, report })
}

fn ranks_above(a: &AblationRow, b: &AblationRow) -> bool {
    a.tpr_at_fpr
        .total_cmp(&b.tpr_at_fpr)
        .then(a.auc_roc.total_cmp(&b.auc_roc))
        .then(b.feature_set.cmp(&a.feature_set))
        .is_gt()
}

/// Ablation report CSV. Metrics are written at full precision so the
/// ranking can be reproduced from the file.
pub fn ablation_csv(report: &[AblationRow]) -> String {
    let mut out = String::from("classifier,feature_set,tpr_at_10fpr,auc_roc\n");
    for r in report {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.classifier, r.feature_set, r.tpr_at_fpr, r.auc_roc
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(fs: &str, tpr: f64, auc: f64) -> AblationRow {
        AblationRow {
            classifier: "c".into(),
            feature_set: fs.into(),
            tpr_at_fpr: tpr,
            auc_roc: auc,
        }
    }

    #[test]
    fn ranking_rules() {
        assert!(ranks_above(&row("b", 0.20, 0.5), &row("a", 0.15, 0.9)));
        assert!(ranks_above(&row("b", 0.20, 0.59), &row("a", 0.20, 0.56)));
        assert!(ranks_above(&row("a", 0.20, 0.59), &row("b", 0.20, 0.59)));
        assert!(!ranks_above(&row("a", 0.20, 0.59), &row("a", 0.20, 0.59)));
    }
}
