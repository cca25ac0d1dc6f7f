//! Shadow instances: partition the auxiliary data into member/non-member
//! pairs, run a generator on each member split, and label the records.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::SyntheticGenerator;
use crate::seed::{self, derive_seed};
use crate::tabular::{Cell, Dataset};

pub const DEFAULT_MIN_SPLIT_SIZE: usize = 50;
pub const RUN_MANIFEST_VERSION: &str = "run-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowRunPlan {
    pub n_shadows: usize,
    pub n_train: usize,
    pub n_eval: usize,
    /// Synthetic rows per shadow; defaults to the member count.
    #[serde(default)]
    pub n_synth: Option<usize>,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
}

fn default_seed() -> u64 {
    seed::DEFAULT_SEED
}

impl ShadowRunPlan {
    pub fn new(n_shadows: usize, n_train: usize, n_eval: usize, master_seed: u64) -> Result<Self> {
        let plan = Self {
            n_shadows,
            n_train,
            n_eval,
            n_synth: None,
            master_seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_shadows == 0 || self.n_train == 0 || self.n_eval == 0 {
            return Err(Error::InvalidPlan(
                "n_shadows, n_train and n_eval must be positive".into(),
            ));
        }
        if self.n_train + self.n_eval != self.n_shadows {
            return Err(Error::InvalidPlan(format!(
                "n_train + n_eval ({} + {}) must equal n_shadows ({})",
                self.n_train, self.n_eval, self.n_shadows
            )));
        }
        if self.n_synth == Some(0) {
            return Err(Error::InvalidPlan("n_synth must be positive".into()));
        }
        Ok(())
    }

    /// Shadows used to train the attack classifier: the first `n_train`.
    pub fn train_indices(&self) -> std::ops::Range<usize> {
        0..self.n_train
    }

    /// Held-out shadows: the last `n_eval`.
    pub fn eval_indices(&self) -> std::ops::Range<usize> {
        self.n_train..self.n_shadows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowSplit {
    pub index: usize,
    pub members: Dataset,
    pub non_members: Dataset,
    /// Filled by [`run_shadows`].
    pub synthetic: Option<Dataset>,
}

impl ShadowSplit {
    pub fn seed(&self, master_seed: u64) -> u64 {
        derive_seed(master_seed, "shadow", self.index as u64)
    }
}

/// Shuffles `aux` with the master seed and cuts it into `2 * n_shadows`
/// equal disjoint splits, dropping the remainder. Shadow `i` takes split
/// `2i` as members and `2i + 1` as non-members.
pub fn partition_shadow_splits(
    aux: &Dataset,
    n_shadows: usize,
    master_seed: u64,
    min_split_size: usize,
) -> Result<Vec<ShadowSplit>> {
    if n_shadows == 0 {
        return Err(Error::InvalidPlan("need at least one shadow".into()));
    }
    let n_splits = 2 * n_shadows;
    let needed = n_splits * min_split_size.max(1);
    if aux.len() < needed {
        return Err(Error::InsufficientRows {
            needed,
            available: aux.len(),
        });
    }
    let mut order: Vec<usize> = (0..aux.len()).collect();
    order.shuffle(&mut seed::rng(derive_seed(master_seed, "partition", 0)));
    let size = aux.len() / n_splits;
    let split = |k: usize| aux.subset(&order[k * size..(k + 1) * size]);
    Ok((0..n_shadows)
        .map(|i| ShadowSplit {
            index: i,
            members: split(2 * i),
            non_members: split(2 * i + 1),
            synthetic: None,
        })
        .collect())
}

/// Runs the generator on each shadow's members with seed
/// `derive_seed(master_seed, "shadow", i)`. Shadows run in parallel and are
/// returned in index order.
pub fn run_shadows(
    splits: Vec<ShadowSplit>,
    generator: &dyn SyntheticGenerator,
    plan: &ShadowRunPlan,
) -> Result<Vec<ShadowSplit>> {
    plan.validate()?;
    splits
        .into_par_iter()
        .map(|mut split| {
            let n = plan.n_synth.unwrap_or(split.members.len());
            let seed = split.seed(plan.master_seed);
            let synthetic = generator
                .generate(&split.members, n, seed)
                .map_err(|e| Error::Generator {
                    shadow: split.index,
                    source: Box::new(e),
                })?;
            split.synthetic = Some(synthetic);
            Ok(split)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub shadow: usize,
    pub id: u64,
    pub record: Vec<Cell>,
    /// 1 for members, 0 for non-members.
    pub label: u8,
}

pub fn label_records(splits: &[ShadowSplit]) -> Result<Vec<LabeledRecord>> {
    let mut out = Vec::new();
    for split in splits {
        if split.members.is_empty() || split.non_members.is_empty() {
            return Err(Error::ShadowInvariant(
                split.index,
                "members and non-members must both be non-empty".into(),
            ));
        }
        if split.members.len() != split.non_members.len() {
            return Err(Error::ShadowInvariant(
                split.index,
                format!(
                    "{} members vs {} non-members",
                    split.members.len(),
                    split.non_members.len()
                ),
            ));
        }
        for (data, label) in [(&split.members, 1u8), (&split.non_members, 0u8)] {
            for (row, &id) in data.rows().iter().zip(data.ids()) {
                out.push(LabeledRecord {
                    shadow: split.index,
                    id,
                    record: row.clone(),
                    label,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowManifestEntry {
    pub index: usize,
    pub members: String,
    pub non_members: String,
    pub synthetic: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub plan: ShadowRunPlan,
    pub shadows: Vec<ShadowManifestEntry>,
}

/// Writes every shadow's datasets as CSV under `dir` and returns the manifest
/// (paths relative to `dir`).
pub fn write_shadow_datasets(
    dir: &Path,
    plan: &ShadowRunPlan,
    splits: &[ShadowSplit],
) -> Result<RunManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut shadows = Vec::with_capacity(splits.len());
    for split in splits {
        let name = |kind: &str| format!("shadow_{:03}_{kind}.csv", split.index);
        split.members.to_raw().write_csv(dir.join(name("members")))?;
        split.non_members.to_raw().write_csv(dir.join(name("non_members")))?;
        let synthetic = match &split.synthetic {
            Some(s) => {
                s.to_raw().write_csv(dir.join(name("synthetic")))?;
                Some(name("synthetic"))
            }
            None => None,
        };
        shadows.push(ShadowManifestEntry {
            index: split.index,
            members: name("members"),
            non_members: name("non_members"),
            synthetic,
            seed: split.seed(plan.master_seed),
        });
    }
    Ok(RunManifest {
        version: RUN_MANIFEST_VERSION.to_string(),
        plan: plan.clone(),
        shadows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_validation_names_the_problem() {
        assert!(ShadowRunPlan::new(30, 25, 5, 42).is_ok());
        let err = ShadowRunPlan::new(30, 25, 4, 42).unwrap_err();
        assert!(err.to_string().contains("n_train + n_eval"));
        assert!(ShadowRunPlan::new(2, 2, 0, 42).is_err());
        let plan = ShadowRunPlan::new(8, 6, 2, 42).unwrap();
        assert_eq!(plan.train_indices(), 0..6);
        assert_eq!(plan.eval_indices(), 6..8);
    }
}
