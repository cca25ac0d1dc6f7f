//! Shadow-side evaluation: run the generator on every shadow, profile the
//! shadow records, train on the first `n_train` shadows and measure the
//! attack on the held-out ones.

use crate::attack::{
    all_shadow_profiles, train_attack_classifier, AttackClassifier, FeatureSet, PredictorOptions,
    ProfileLayout, ProfileSet,
};
use crate::error::Result;
use crate::gbdt::GbdtHyperparams;
use crate::generators::SyntheticGenerator;
use crate::metrics::{attack_report, AttackReport};
use crate::seed::derive_seed;
use crate::shadow::{partition_shadow_splits, run_shadows, ShadowRunPlan, ShadowSplit};
use crate::tabular::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSettings {
    pub feature_set: FeatureSet,
    pub predictors: PredictorOptions,
    pub classifier: GbdtHyperparams,
    pub fpr_cap: f64,
    pub min_split_size: usize,
}

/// Full-layout profiles of every shadow, split into training and held-out.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowProfiles {
    pub splits: Vec<ShadowSplit>,
    pub train: ProfileSet,
    pub eval: ProfileSet,
}

pub fn simulate_shadows(
    aux: &Dataset,
    generator: &dyn SyntheticGenerator,
    plan: &ShadowRunPlan,
    settings: &AttackSettings,
) -> Result<ShadowProfiles> {
    plan.validate()?;
    let splits = partition_shadow_splits(aux, plan.n_shadows, plan.master_seed, settings.min_split_size)?;
    let splits = run_shadows(splits, generator, plan)?;
    let layout = ProfileLayout::new(aux.schema(), FeatureSet::all())?;
    let sets = all_shadow_profiles(&splits, &layout, &settings.predictors, plan.master_seed)?;
    let train = ProfileSet::concat(&sets[plan.train_indices()])?;
    let eval = ProfileSet::concat(&sets[plan.eval_indices()])?;
    Ok(ShadowProfiles { splits, train, eval })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowEvaluation {
    pub classifier: AttackClassifier,
    pub eval_scores: Vec<f64>,
    pub eval_labels: Vec<u8>,
    pub report: AttackReport,
}

/// Trains the classifier on the training shadows with `feature_set` and
/// scores the held-out shadows.
pub fn evaluate_on_shadows(
    profiles: &ShadowProfiles,
    feature_set: FeatureSet,
    classifier: &GbdtHyperparams,
    fpr_cap: f64,
    master_seed: u64,
) -> Result<ShadowEvaluation> {
    let train = profiles.train.project(feature_set)?;
    let eval = profiles.eval.project(feature_set)?;
    let clf = train_attack_classifier(&[train], classifier, derive_seed(master_seed, "attack", 0))?;
    let eval_scores = clf.score_set(&eval)?;
    let eval_labels = eval.labels()?;
    let report = attack_report(&eval_scores, &eval_labels, fpr_cap)?;
    Ok(ShadowEvaluation {
        classifier: clf,
        eval_scores,
        eval_labels,
        report,
    })
}

/// [`simulate_shadows`] followed by [`evaluate_on_shadows`].
pub fn shadow_attack(
    aux: &Dataset,
    generator: &dyn SyntheticGenerator,
    plan: &ShadowRunPlan,
    settings: &AttackSettings,
) -> Result<(ShadowProfiles, ShadowEvaluation)> {
    let profiles = simulate_shadows(aux, generator, plan, settings)?;
    let eval = evaluate_on_shadows(
        &profiles,
        settings.feature_set,
        &settings.classifier,
        settings.fpr_cap,
        plan.master_seed,
    )?;
    Ok((profiles, eval))
}
