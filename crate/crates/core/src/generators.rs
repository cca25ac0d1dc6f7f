//! Synthetic data generators.
//!
//! [`LeakyGenerator`] memorizes a tunable share of its training rows, which
//! gives the attack a ground truth to be checked against. Anything that reads
//! a member CSV and writes a synthetic CSV can be plugged in through
//! [`ExternalGenerator`].

use std::path::PathBuf;
use std::process::Command;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tabular::{encode_dataset, Cell, ColumnKind, Dataset, Provenance, RawTable, TableSchema};

/// A black-box generator: sees only member rows, returns synthetic rows.
pub trait SyntheticGenerator: Send + Sync {
    fn name(&self) -> &str;

    fn generate(&self, members: &Dataset, n: usize, seed: u64) -> Result<Dataset>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Probability that a synthetic row is a perturbed copy of a member row.
    pub leakage: f64,
    /// Gaussian noise on copied numeric cells, relative to the member
    /// column's standard deviation.
    pub noise_scale: f64,
    /// Per-cell probability of resampling a copied categorical cell from the
    /// population marginal.
    #[serde(default)]
    pub flip_prob: f64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.leakage) {
            return Err(Error::InvalidGenerator(format!("leakage {} outside [0, 1]", self.leakage)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidGenerator(format!(
                "noise_scale {} must be non-negative",
                self.noise_scale
            )));
        }
        if !in_unit(self.flip_prob) {
            return Err(Error::InvalidGenerator(format!(
                "flip_prob {} outside [0, 1]",
                self.flip_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    /// Sorted observed values, each with equal mass.
    Numeric(Vec<f64>),
    /// Count per category index.
    Categorical(Vec<usize>),
}

impl Marginal {
    /// Category frequencies; `None` for numeric columns.
    pub fn frequencies(&self) -> Option<Vec<f64>> {
        match self {
            Marginal::Numeric(_) => None,
            Marginal::Categorical(counts) => {
                let total: usize = counts.iter().sum();
                Some(counts.iter().map(|&c| c as f64 / total as f64).collect())
            }
        }
    }

    /// Distinct numeric values with their probability mass.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        let Marginal::Numeric(values) = self else {
            return None;
        };
        let mass = 1.0 / values.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &v in values {
            match out.last_mut() {
                Some((last, m)) if *last == v => *m += mass,
                _ => out.push((v, mass)),
            }
        }
        Some(out)
    }
}

enum Sampler {
    Numeric(Vec<f64>),
    Categorical(WeightedIndex<usize>),
}

impl Sampler {
    fn sample(&self, rng: &mut impl Rng) -> Cell {
        match self {
            Sampler::Numeric(values) => Cell::Num(values[rng.random_range(0..values.len())]),
            Sampler::Categorical(dist) => Cell::Cat(dist.sample(rng) as u32),
        }
    }
}

/// Per-column empirical marginals of a reference table.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    schema: TableSchema,
    marginals: Vec<Marginal>,
}

impl PopulationModel {
    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    fn samplers(&self) -> Vec<Sampler> {
        self.marginals
            .iter()
            .map(|m| match m {
                Marginal::Numeric(values) => Sampler::Numeric(values.clone()),
                // Every fitted column has at least one observed row, so the
                // weights cannot all be zero.
                Marginal::Categorical(counts) => Sampler::Categorical(
                    WeightedIndex::new(counts.iter().copied()).expect("non-empty counts"),
                ),
            })
            .collect()
    }
}

pub fn fit_population_model(reference: &Dataset) -> Result<PopulationModel> {
    if reference.is_empty() {
        return Err(Error::EmptyTable("population reference has no rows".into()));
    }
    let schema = reference.schema().clone();
    let marginals = schema
        .columns
        .iter()
        .enumerate()
        .map(|(c, col)| match col.kind {
            ColumnKind::Numeric => {
                let mut values: Vec<f64> = reference.column(c).map(Cell::as_f64).collect();
                values.sort_by(f64::total_cmp);
                Marginal::Numeric(values)
            }
            ColumnKind::Categorical => {
                let mut counts = vec![0usize; col.n_categories()];
                for cell in reference.column(c) {
                    if let Cell::Cat(i) = cell {
                        counts[i as usize] += 1;
                    }
                }
                Marginal::Categorical(counts)
            }
        })
        .collect();
    Ok(PopulationModel { schema, marginals })
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Draws `n` rows. Each row is, with probability `leakage`, a copy of a
/// uniformly chosen member with numeric noise and categorical flips applied;
/// otherwise every cell is drawn independently from the population.
pub fn generate(
    spec: &GeneratorSpec,
    members: &Dataset,
    population: &PopulationModel,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidGenerator("sample count must be positive".into()));
    }
    if members.is_empty() {
        return Err(Error::EmptyTable("generator members have no rows".into()));
    }
    if members.schema() != population.schema() {
        return Err(Error::SchemaMismatch(
            "population model was fitted on a different schema".into(),
        ));
    }
    let schema = members.schema();
    let noise: Vec<Option<Normal<f64>>> = schema
        .columns
        .iter()
        .enumerate()
        .map(|(c, col)| {
            if col.kind != ColumnKind::Numeric || spec.noise_scale == 0.0 {
                return None;
            }
            let std = population_std(&members.column(c).map(Cell::as_f64).collect::<Vec<_>>());
            (std > 0.0).then(|| Normal::new(0.0, spec.noise_scale * std).expect("finite std"))
        })
        .collect();
    let samplers = population.samplers();

    let mut rng = seed::rng(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let row = if rng.random::<f64>() < spec.leakage {
            let source = members.row(rng.random_range(0..members.len()));
            source
                .iter()
                .enumerate()
                .map(|(c, &cell)| match cell {
                    Cell::Num(v) => match &noise[c] {
                        Some(dist) => Cell::Num(v + dist.sample(&mut rng)),
                        None => cell,
                    },
                    Cell::Cat(_) => {
                        if spec.flip_prob > 0.0 && rng.random::<f64>() < spec.flip_prob {
                            samplers[c].sample(&mut rng)
                        } else {
                            cell
                        }
                    }
                })
                .collect()
        } else {
            samplers.iter().map(|s| s.sample(&mut rng)).collect()
        };
        rows.push(row);
    }
    Dataset::new(schema.clone(), rows, Provenance::Synthetic)
}

#[derive(Debug, Clone)]
pub struct LeakyGenerator {
    pub spec: GeneratorSpec,
    pub population: PopulationModel,
}

impl SyntheticGenerator for LeakyGenerator {
    fn name(&self) -> &str {
        "leaky"
    }

    fn generate(&self, members: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
        generate(&self.spec, members, &self.population, n, seed)
    }
}

/// Runs an external program. Each argument may contain the placeholders
/// `{input}`, `{output}`, `{n}` and `{seed}`.
#[derive(Debug, Clone)]
pub struct ExternalGenerator {
    pub command: Vec<String>,
    /// Where member/synthetic CSVs are staged; a temporary directory when
    /// `None`.
    pub work_dir: Option<PathBuf>,
}

impl ExternalGenerator {
    pub fn new(command: Vec<String>) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::InvalidGenerator("empty external command".into()));
        }
        Ok(Self {
            command,
            work_dir: None,
        })
    }
}

impl SyntheticGenerator for ExternalGenerator {
    fn name(&self) -> &str {
        "external"
    }

    fn generate(&self, members: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidGenerator("sample count must be positive".into()));
        }
        let temp;
        let dir = match &self.work_dir {
            Some(d) => d.clone(),
            None => {
                temp = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
                temp.path().to_path_buf()
            }
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let input = dir.join(format!("members_{seed:016x}.csv"));
        let output = dir.join(format!("synthetic_{seed:016x}.csv"));
        members.to_raw().write_csv(&input)?;

        let args: Vec<String> = self
            .command
            .iter()
            .map(|a| {
                a.replace("{input}", &input.to_string_lossy())
                    .replace("{output}", &output.to_string_lossy())
                    .replace("{n}", &n.to_string())
                    .replace("{seed}", &seed.to_string())
            })
            .collect();
        let status = Command::new(&args[0])
            .args(&args[1..])
            .status()
            .map_err(|e| Error::ExternalGenerator(format!("could not start `{}`: {e}", args[0])))?;
        if !status.success() {
            return Err(Error::ExternalGenerator(format!("`{}` exited with {status}", args.join(" "))));
        }
        let raw = RawTable::read_csv(&output)?;
        let data = encode_dataset(&raw, members.schema())?.with_provenance(Provenance::Synthetic);
        if data.len() != n {
            return Err(Error::ExternalGenerator(format!(
                "expected {n} synthetic rows, got {}",
                data.len()
            )));
        }
        Ok(data)
    }
}
