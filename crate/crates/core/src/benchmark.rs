//! Synthetic benchmark population with planted inter-column dependencies,
//! used by the quickstart and the acceptance suite.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attack::{FeatureSet, PredictorOptions};
use crate::config::{classifier_presets, GeneratorConfig, PathsConfig, PlanConfig, RunConfig};
use crate::error::{Error, Result};
use crate::generators::{fit_population_model, generate, GeneratorSpec};
use crate::metrics::DEFAULT_FPR_CAP;
use crate::pipeline::RECORD_ID;
use crate::shadow::DEFAULT_MIN_SPLIT_SIZE;
use crate::seed::{self, derive_seed};
use crate::tabular::{Cell, ColumnSchema, Dataset, Provenance, TableSchema};

pub const BENCHMARK_AUX_ROWS: usize = 2000;
pub const BENCHMARK_TARGET_ROWS: usize = 200;

/// Eight numeric columns `x0..x7` and four categorical columns `c0..c3`.
pub fn benchmark_schema() -> TableSchema {
    let mut cols: Vec<ColumnSchema> = (0..8).map(|i| ColumnSchema::numeric(format!("x{i}"))).collect();
    cols.push(ColumnSchema::categorical("c0", ["high", "low", "mid"]));
    cols.push(ColumnSchema::categorical("c1", ["no", "yes"]));
    cols.push(ColumnSchema::categorical("c2", ["a", "b", "c", "d"]));
    cols.push(ColumnSchema::categorical("c3", ["p", "q", "r"]));
    TableSchema::new(cols).expect("static schema")
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn sample_row(rng: &mut impl Rng) -> Vec<Cell> {
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    let (z1, z2, z3) = (n(), n(), n());
    let (e1, e2, e3, e4, e5, e6, e7) = (n(), n(), n(), n(), n(), n(), n());
    let x0 = 50.0 + 10.0 * z1;
    let x1 = 3.0 * z1 + 2.0 * z2 + e1;
    let x2 = 1.5 * z2 - z3 + 0.5 * e2;
    let x3 = 10.0 * (0.5 * z3).exp() + e3;
    let x4 = x0 / 10.0 + x3 / 5.0 + e4;
    let x6 = 2.0 * x1 - x2 + 2.0 * e5;
    let x7 = ((z1 + z3).abs() * 5.0 + e6).round();
    let x5 = rng.random_range(0.0..100.0);

    let flip = |rng: &mut dyn rand::RngCore, k: u32, p: f64, v: u32| {
        if rng.random::<f64>() < p {
            rng.random_range(0..k)
        } else {
            v
        }
    };
    // c0 tertiles of z1: categories sorted as [high, low, mid].
    let tertile = if z1 < -0.43 { 1 } else if z1 < 0.43 { 2 } else { 0 };
    let c0 = flip(rng, 3, 0.1, tertile);
    let c1 = u32::from(z2 + 0.5 * e7 > 0.0);
    let quartile = match x3 {
        v if v < 7.1 => 0,
        v if v < 10.0 => 1,
        v if v < 14.0 => 2,
        _ => 3,
    };
    let c2 = flip(rng, 4, 0.15, quartile);
    let probs: [f64; 3] = match (c0, c1) {
        (0, 1) => [0.6, 0.2, 0.2],
        (1, 0) => [0.2, 0.6, 0.2],
        _ => [0.25, 0.25, 0.5],
    };
    let u: f64 = rng.random();
    let c3 = if u < probs[0] {
        0
    } else if u < probs[0] + probs[1] {
        1
    } else {
        2
    };

    let mut row: Vec<Cell> = [x0, x1, x2, x3, x4, x5, x6, x7]
        .into_iter()
        .map(|v| Cell::Num(round3(v)))
        .collect();
    row.extend([c0, c1, c2, c3].map(Cell::Cat));
    row
}

/// `n` independent rows from the benchmark population.
pub fn sample_benchmark(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = seed::rng(seed);
    let rows = (0..n).map(|_| sample_row(&mut rng)).collect();
    Dataset::new(benchmark_schema(), rows, Provenance::Real)
}

/// Auxiliary data plus a target member/non-member split and the shuffled
/// challenge set built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub aux: Dataset,
    pub target_members: Dataset,
    pub target_non_members: Dataset,
    /// Members and non-members shuffled; ids are the record ids.
    pub challenge: Dataset,
    /// Membership of each challenge row, in challenge order.
    pub challenge_labels: Vec<u8>,
}

pub fn benchmark_scenario(n_aux: usize, n_target: usize, seed: u64) -> Result<Scenario> {
    let aux = sample_benchmark(n_aux, derive_seed(seed, "benchmark-aux", 0))?;
    let pool = sample_benchmark(2 * n_target, derive_seed(seed, "benchmark-target", 0))?;
    let ids: Vec<u64> = (1..=2 * n_target as u64).collect();
    let pool = Dataset::with_ids(pool.schema().clone(), pool.rows().to_vec(), ids, Provenance::Real)?;
    let members_idx: Vec<usize> = (0..n_target).collect();
    let non_members_idx: Vec<usize> = (n_target..2 * n_target).collect();

    let mut order: Vec<usize> = (0..2 * n_target).collect();
    order.shuffle(&mut seed::rng(derive_seed(seed, "benchmark-challenge", 0)));
    let challenge = pool.subset(&order);
    let challenge_labels = order.iter().map(|&i| u8::from(i < n_target)).collect();

    Ok(Scenario {
        aux,
        target_members: pool.subset(&members_idx),
        target_non_members: pool.subset(&non_members_idx),
        challenge,
        challenge_labels,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a self-contained quickstart under `dir`: auxiliary data, a target
/// synthetic table released by a leaky generator with the given leakage,
/// the challenge set with its labels, and `config.json` pointing at them.
/// Returns the config path.
pub fn write_quickstart(dir: &Path, leakage: f64, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let scenario = benchmark_scenario(BENCHMARK_AUX_ROWS, BENCHMARK_TARGET_ROWS, seed)?;
    let spec = GeneratorSpec {
        leakage,
        noise_scale: 0.05,
        flip_prob: 0.0,
    };
    let population = fit_population_model(&scenario.aux)?;
    let target_synthetic = generate(
        &spec,
        &scenario.target_members,
        &population,
        scenario.target_members.len(),
        derive_seed(seed, "target-generator", 0),
    )?;

    scenario.aux.to_raw().write_csv(dir.join("aux.csv"))?;
    target_synthetic.to_raw().write_csv(dir.join("target_synthetic.csv"))?;
    let mut challenge = scenario.challenge.to_raw();
    challenge.headers.insert(0, RECORD_ID.to_string());
    for (row, id) in challenge.rows.iter_mut().zip(scenario.challenge.ids()) {
        row.insert(0, id.to_string());
    }
    challenge.write_csv(dir.join("challenge.csv"))?;
    let mut labels = String::from("record_id,label\n");
    for (id, label) in scenario.challenge.ids().iter().zip(&scenario.challenge_labels) {
        labels.push_str(&format!("{id},{label}\n"));
    }
    write(&dir.join("challenge_labels.csv"), &labels)?;

    let config = RunConfig {
        paths: PathsConfig {
            aux: "aux.csv".into(),
            target_synthetic: "target_synthetic.csv".into(),
            challenge: "challenge.csv".into(),
            challenge_labels: Some("challenge_labels.csv".into()),
            schema: None,
            output_dir: "out".into(),
        },
        plan: PlanConfig {
            n_shadows: 8,
            n_train: 6,
            n_eval: 2,
            n_synth: None,
            min_split_size: DEFAULT_MIN_SPLIT_SIZE,
        },
        generator: GeneratorConfig::Leaky {
            leakage,
            noise_scale: spec.noise_scale,
            flip_prob: spec.flip_prob,
        },
        feature_sets: vec![FeatureSet::all()],
        classifiers: classifier_presets().into_iter().take(1).collect(),
        predictors: PredictorOptions::default(),
        seed,
        fpr_cap: DEFAULT_FPR_CAP,
    };
    config.validate()?;
    let path = dir.join("config.json");
    write(&path, &config.to_json()?)?;
    Ok(path)
}
