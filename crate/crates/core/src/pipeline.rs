//! End-to-end runs driven by a [`RunConfig`], plus the file-level helpers the
//! command-line tool is built from.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{
    ablation_csv, scores_csv, select_best_config, score_membership, train_attack_classifier,
    train_attribute_predictors, AttackBundle, Candidate, FeatureSet, MembershipScore, Selection,
};
use crate::config::{GeneratorConfig, LoadedConfig};
use crate::error::{Error, Result};
use crate::experiment::{simulate_shadows, AttackSettings, ShadowProfiles};
use crate::generators::{fit_population_model, GeneratorSpec, LeakyGenerator, SyntheticGenerator};
use crate::metrics::{attack_report, roc_curve, AttackReport, RocCurve};
use crate::seed::derive_seed;
use crate::shadow::write_shadow_datasets;
use crate::tabular::{encode_dataset, infer_schema, Dataset, Provenance, RawTable, TableSchema};

pub const RECORD_ID: &str = "record_id";
pub const PIPELINE_MANIFEST_VERSION: &str = "pipeline-v1";

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("threads", "must be positive")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Reads a CSV, dropping a `record_id` column if present. Returns the ids
/// when they were there.
fn read_raw(path: &Path) -> Result<(RawTable, Option<Vec<u64>>)> {
    let mut raw = RawTable::read_csv(path)?;
    if raw.column_index(RECORD_ID).is_none() {
        return Ok((raw, None));
    }
    let ids = raw
        .take_column(RECORD_ID)?
        .iter()
        .enumerate()
        .map(|(row, s)| {
            s.trim().parse::<u64>().map_err(|_| Error::BadNumber {
                column: RECORD_ID.into(),
                row,
                value: s.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((raw, Some(ids)))
}

pub fn load_table(path: &Path, schema: &TableSchema, provenance: Provenance) -> Result<Dataset> {
    let (raw, ids) = read_raw(path)?;
    let data = encode_dataset(&raw, schema)?;
    let data = match ids {
        Some(ids) => Dataset::with_ids(schema.clone(), data.rows().to_vec(), ids, Provenance::Real)?,
        None => data,
    };
    Ok(data.with_provenance(provenance))
}

/// Challenge records keep their `record_id` as the dataset id.
pub fn load_challenge(path: &Path, schema: &TableSchema) -> Result<Dataset> {
    let (raw, ids) = read_raw(path)?;
    let ids = ids.ok_or_else(|| {
        Error::SchemaMismatch(format!("{} has no `{RECORD_ID}` column", path.display()))
    })?;
    let data = encode_dataset(&raw, schema)?;
    Dataset::with_ids(schema.clone(), data.rows().to_vec(), ids, Provenance::Real)
}

pub fn infer_schema_file(path: &Path) -> Result<TableSchema> {
    let (raw, _) = read_raw(path)?;
    infer_schema(&raw)
}

/// Reads `record_id,label` (label 0 or 1).
pub fn load_labels(path: &Path) -> Result<HashMap<u64, u8>> {
    let raw = RawTable::read_csv(path)?;
    let id_col = raw
        .column_index(RECORD_ID)
        .ok_or_else(|| Error::SchemaMismatch(format!("{} has no `{RECORD_ID}` column", path.display())))?;
    let label_col = raw
        .column_index("label")
        .ok_or_else(|| Error::SchemaMismatch(format!("{} has no `label` column", path.display())))?;
    let mut out = HashMap::new();
    for (row, cells) in raw.rows.iter().enumerate() {
        let bad = |column: &str, value: &str| Error::BadNumber {
            column: column.into(),
            row,
            value: value.into(),
        };
        let id: u64 = cells[id_col].trim().parse().map_err(|_| bad(RECORD_ID, &cells[id_col]))?;
        let label = match cells[label_col].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(bad("label", other)),
        };
        if out.insert(id, label).is_some() {
            return Err(Error::SchemaMismatch(format!("duplicate record_id {id} in labels")));
        }
    }
    Ok(out)
}

/// Reads a `record_id,score` file.
pub fn load_scores(path: &Path) -> Result<Vec<MembershipScore>> {
    let raw = RawTable::read_csv(path)?;
    let (Some(id_col), Some(score_col)) = (raw.column_index(RECORD_ID), raw.column_index("score"))
    else {
        return Err(Error::SchemaMismatch(format!(
            "{} must have `record_id` and `score` columns",
            path.display()
        )));
    };
    raw.rows
        .iter()
        .enumerate()
        .map(|(row, cells)| {
            let bad = |column: &str, value: &str| Error::BadNumber {
                column: column.into(),
                row,
                value: value.into(),
            };
            Ok(MembershipScore {
                record_id: cells[id_col].trim().parse().map_err(|_| bad(RECORD_ID, &cells[id_col]))?,
                score: cells[score_col].trim().parse().map_err(|_| bad("score", &cells[score_col]))?,
            })
        })
        .collect()
}

/// Scores as written to the scores CSV, so that evaluating the file and
/// evaluating in memory agree exactly.
fn rounded(scores: &[MembershipScore]) -> Vec<f64> {
    scores
        .iter()
        .map(|s| format!("{:.6}", s.score).parse().expect("formatted float"))
        .collect()
}

/// Matches each score with its label.
pub fn evaluate_scores(
    scores: &[MembershipScore],
    labels: &HashMap<u64, u8>,
    fpr_cap: f64,
) -> Result<(AttackReport, RocCurve)> {
    let y = scores
        .iter()
        .map(|s| {
            labels.get(&s.record_id).copied().ok_or_else(|| {
                Error::SchemaMismatch(format!("no label for record_id {}", s.record_id))
            })
        })
        .collect::<Result<Vec<u8>>>()?;
    let values = rounded(scores);
    Ok((attack_report(&values, &y, fpr_cap)?, roc_curve(&values, &y)?))
}

/// Writes `metrics.json`-style report plus `roc.csv` and `roc.svg` under
/// `dir` with the given file stem.
pub fn write_report(dir: &Path, stem: &str, report: &AttackReport, roc: &RocCurve, title: &str) -> Result<Vec<String>> {
    let names = [
        format!("{stem}.json"),
        format!("roc{}.csv", stem.strip_prefix("metrics").unwrap_or(stem)),
        format!("roc{}.svg", stem.strip_prefix("metrics").unwrap_or(stem)),
    ];
    write_file(&dir.join(&names[0]), &report.to_json()?)?;
    write_file(&dir.join(&names[1]), &roc.to_csv())?;
    write_file(&dir.join(&names[2]), &roc.to_svg(title))?;
    Ok(names.to_vec())
}

/// Parsed inputs of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub schema: TableSchema,
    pub aux: Dataset,
    pub target_synthetic: Dataset,
    pub challenge: Dataset,
    pub challenge_labels: Option<HashMap<u64, u8>>,
}

pub fn load_inputs(cfg: &LoadedConfig) -> Result<Inputs> {
    let p = &cfg.config.paths;
    let schema = match &p.schema {
        Some(path) => TableSchema::load(cfg.resolve(path))?,
        None => infer_schema_file(&cfg.resolve(&p.aux))?,
    };
    let aux = load_table(&cfg.resolve(&p.aux), &schema, Provenance::Real)?;
    let target_synthetic = load_table(&cfg.resolve(&p.target_synthetic), &schema, Provenance::Synthetic)?;
    let challenge = load_challenge(&cfg.resolve(&p.challenge), &schema)?;
    let challenge_labels = p
        .challenge_labels
        .as_ref()
        .map(|path| load_labels(&cfg.resolve(path)))
        .transpose()?;
    Ok(Inputs {
        schema,
        aux,
        target_synthetic,
        challenge,
        challenge_labels,
    })
}

pub fn build_generator(cfg: &LoadedConfig, aux: &Dataset) -> Result<Box<dyn SyntheticGenerator>> {
    match &cfg.config.generator {
        GeneratorConfig::Leaky {
            leakage,
            noise_scale,
            flip_prob,
        } => Ok(Box::new(LeakyGenerator {
            spec: GeneratorSpec {
                leakage: *leakage,
                noise_scale: *noise_scale,
                flip_prob: *flip_prob,
            },
            population: fit_population_model(aux)?,
        })),
        GeneratorConfig::External { command } => {
            Ok(Box::new(crate::generators::ExternalGenerator::new(command.clone())?))
        }
    }
}

pub fn attack_settings(cfg: &LoadedConfig, feature_set: FeatureSet) -> AttackSettings {
    let c = &cfg.config;
    AttackSettings {
        feature_set,
        predictors: c.predictors.clone(),
        classifier: c.classifiers[0].hyper.clone(),
        fpr_cap: c.fpr_cap,
        min_split_size: c.plan.min_split_size,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedConfig {
    pub classifier: String,
    pub feature_set: String,
    pub validation_tpr_at_fpr: f64,
    pub validation_auc_roc: f64,
}

/// Written to `manifest.json` in the output directory after every stage, so
/// a failed run leaves a record of which artifacts are partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub version: String,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    pub stage: String,
    #[serde(default)]
    pub error: Option<String>,
    /// Paths relative to the output directory, in write order.
    pub artifacts: Vec<String>,
    /// True when the run failed and `artifacts` may be incomplete.
    pub partial: bool,
    #[serde(default)]
    pub selected: Option<SelectedConfig>,
    /// `challenge` when `metrics.json` scores the labeled challenge set,
    /// `eval_shadows` otherwise.
    #[serde(default)]
    pub metrics_source: Option<String>,
}

struct Recorder {
    dir: PathBuf,
    manifest: PipelineManifest,
}

impl Recorder {
    fn new(dir: &Path, command: &str, cfg: &LoadedConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rec = Self {
            dir: dir.to_path_buf(),
            manifest: PipelineManifest {
                version: PIPELINE_MANIFEST_VERSION.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config_hash: cfg.hash.clone(),
                seed: cfg.config.seed,
                status: RunStatus::Running,
                stage: "start".into(),
                error: None,
                artifacts: Vec::new(),
                partial: false,
                selected: None,
                metrics_source: None,
            },
        };
        rec.flush()?;
        Ok(rec)
    }

    fn flush(&self) -> Result<()> {
        write_file(
            &self.dir.join("manifest.json"),
            &serde_json::to_string_pretty(&self.manifest)?,
        )
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.manifest.stage = name.into();
        match f(self) {
            Ok(v) => Ok(v),
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.partial = true;
                self.manifest.error = Some(e.to_string());
                let _ = self.flush();
                Err(e)
            }
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_file(&self.dir.join(name), contents)?;
        self.manifest.artifacts.push(name.into());
        self.flush()
    }

    fn record(&mut self, names: impl IntoIterator<Item = String>) -> Result<()> {
        self.manifest.artifacts.extend(names);
        self.flush()
    }

    fn finish(mut self) -> Result<PipelineManifest> {
        self.manifest.status = RunStatus::Complete;
        self.manifest.stage = "done".into();
        self.flush()?;
        Ok(self.manifest)
    }
}

fn shadow_stage(rec: &mut Recorder, cfg: &LoadedConfig, inputs: &Inputs) -> Result<ShadowProfiles> {
    rec.stage("shadows", |rec| {
        let generator = build_generator(cfg, &inputs.aux)?;
        let settings = attack_settings(cfg, FeatureSet::all());
        let plan = cfg.config.shadow_plan();
        let profiles = simulate_shadows(&inputs.aux, generator.as_ref(), &plan, &settings)?;
        let manifest = write_shadow_datasets(&rec.dir.join("shadows"), &plan, &profiles.splits)?;
        let mut names = Vec::new();
        for s in &manifest.shadows {
            names.push(format!("shadows/{}", s.members));
            names.push(format!("shadows/{}", s.non_members));
            names.extend(s.synthetic.iter().map(|n| format!("shadows/{n}")));
        }
        rec.record(names)?;
        rec.write("shadows/run_manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
        Ok(profiles)
    })
}

fn selection_stage(
    rec: &mut Recorder,
    cfg: &LoadedConfig,
    profiles: &ShadowProfiles,
    candidates: &[Candidate],
) -> Result<Selection> {
    rec.stage("selection", |rec| {
        let selection = select_best_config(
            candidates,
            &profiles.train,
            &profiles.eval,
            cfg.config.fpr_cap,
            derive_seed(cfg.config.seed, "selection", 0),
        )?;
        rec.write("ablation.csv", &ablation_csv(&selection.report))?;
        let best = selection.best_row();
        rec.manifest.selected = Some(SelectedConfig {
            classifier: best.classifier.clone(),
            feature_set: best.feature_set.clone(),
            validation_tpr_at_fpr: best.tpr_at_fpr,
            validation_auc_roc: best.auc_roc,
        });
        rec.flush()?;
        Ok(selection)
    })
}

/// Trains the selected classifier on the training shadows, reports it on
/// the held-out shadows and fits predictors on the target synthetic table.
fn attack_stage(
    rec: &mut Recorder,
    cfg: &LoadedConfig,
    inputs: &Inputs,
    profiles: &ShadowProfiles,
    chosen: &Candidate,
) -> Result<(AttackBundle, AttackReport)> {
    rec.stage("attack", |rec| {
        let seed = cfg.config.seed;
        let train = profiles.train.project(chosen.feature_set)?;
        let eval = profiles.eval.project(chosen.feature_set)?;
        let classifier = train_attack_classifier(&[train], &chosen.hyper, derive_seed(seed, "attack", 0))?;
        let eval_scores = classifier.score_set(&eval)?;
        let eval_labels = eval.labels()?;
        let report = attack_report(&eval_scores, &eval_labels, cfg.config.fpr_cap)?;
        let roc = roc_curve(&eval_scores, &eval_labels)?;
        let names = write_report(&rec.dir, "metrics_shadows", &report, &roc, "Held-out shadows")?;
        rec.record(names)?;

        let predictors = train_attribute_predictors(
            &inputs.target_synthetic,
            &cfg.config.predictors,
            derive_seed(seed, "target", 0),
        )?;
        let bundle = AttackBundle::new(classifier, predictors, &chosen.classifier, &cfg.hash);
        bundle.save(&rec.dir.join("bundle"))?;
        let mut names = vec![
            "bundle/layout.json".to_string(),
            "bundle/classifier.json".to_string(),
        ];
        names.extend(bundle.manifest.predictors.iter().map(|p| format!("bundle/{p}")));
        names.push("bundle/manifest.json".into());
        rec.record(names)?;
        Ok((bundle, report))
    })
}

fn start(cfg: &LoadedConfig, out_dir: &Path, command: &str) -> Result<(Recorder, Inputs)> {
    let mut rec = Recorder::new(out_dir, command, cfg)?;
    let inputs = rec.stage("inputs", |rec| {
        let inputs = load_inputs(cfg)?;
        rec.write("schema.json", &inputs.schema.to_json()?)?;
        Ok(inputs)
    })?;
    Ok((rec, inputs))
}

/// The full attack: shadows, configuration selection, classifier, target
/// predictors, challenge scores and metrics.
pub fn run_pipeline(cfg: &LoadedConfig, out_dir: &Path) -> Result<PipelineManifest> {
    let (mut rec, inputs) = start(cfg, out_dir, "pipeline run")?;
    let profiles = shadow_stage(&mut rec, cfg, &inputs)?;
    let candidates = cfg.config.candidates();
    let selection = selection_stage(&mut rec, cfg, &profiles, &candidates)?;
    let chosen = &candidates[selection.best];
    let (bundle, shadow_report) = attack_stage(&mut rec, cfg, &inputs, &profiles, chosen)?;

    let scores = rec.stage("scoring", |rec| {
        let scores = score_membership(&bundle.classifier, &bundle.predictors, &inputs.challenge)?;
        rec.write("scores.csv", &scores_csv(&scores))?;
        Ok(scores)
    })?;

    rec.stage("evaluation", |rec| {
        let (report, roc, source, title) = match &inputs.challenge_labels {
            Some(labels) => {
                let (report, roc) = evaluate_scores(&scores, labels, cfg.config.fpr_cap)?;
                (report, roc, "challenge", "Challenge records")
            }
            None => {
                let eval = profiles.eval.project(chosen.feature_set)?;
                let s = bundle.classifier.score_set(&eval)?;
                let roc = roc_curve(&s, &eval.labels()?)?;
                (shadow_report.clone(), roc, "eval_shadows", "Held-out shadows")
            }
        };
        rec.manifest.metrics_source = Some(source.into());
        let names = write_report(&rec.dir, "metrics", &report, &roc, title)?;
        rec.record(names)
    })?;
    rec.finish()
}

/// Shadow simulation only.
pub fn run_shadow_stage(cfg: &LoadedConfig, out_dir: &Path) -> Result<PipelineManifest> {
    let (mut rec, inputs) = start(cfg, out_dir, "shadow run")?;
    shadow_stage(&mut rec, cfg, &inputs)?;
    rec.finish()
}

/// Shadows, selection and the attack bundle, without scoring.
pub fn run_attack_training(cfg: &LoadedConfig, out_dir: &Path) -> Result<PipelineManifest> {
    let (mut rec, inputs) = start(cfg, out_dir, "attack train")?;
    let profiles = shadow_stage(&mut rec, cfg, &inputs)?;
    let candidates = cfg.config.candidates();
    let selection = selection_stage(&mut rec, cfg, &profiles, &candidates)?;
    attack_stage(&mut rec, cfg, &inputs, &profiles, &candidates[selection.best])?;
    rec.finish()
}

/// Ablation over `feature_sets` (every non-empty subset when `None`) for
/// each configured classifier.
pub fn run_ablation(
    cfg: &LoadedConfig,
    out_dir: &Path,
    feature_sets: Option<Vec<FeatureSet>>,
) -> Result<(PipelineManifest, Selection)> {
    let mut cfg = cfg.clone();
    cfg.config.feature_sets = feature_sets.unwrap_or_else(FeatureSet::all_subsets);
    let (mut rec, inputs) = start(&cfg, out_dir, "ablate")?;
    let profiles = shadow_stage(&mut rec, &cfg, &inputs)?;
    let selection = selection_stage(&mut rec, &cfg, &profiles, &cfg.config.candidates())?;
    Ok((rec.finish()?, selection))
}

/// Scores a challenge CSV with a saved bundle.
pub fn score_with_bundle(bundle_dir: &Path, challenge: &Path) -> Result<Vec<MembershipScore>> {
    let bundle = AttackBundle::load(bundle_dir)?;
    let data = load_challenge(challenge, &bundle.classifier.layout.schema)?;
    score_membership(&bundle.classifier, &bundle.predictors, &data)
}
