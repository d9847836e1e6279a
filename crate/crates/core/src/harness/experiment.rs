use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::results::{ResultsRow, Stat};
use super::train::{evaluate, train, RunResult, TrainConfig};
use crate::blocks::ModelConfig;
use crate::error::{Error, Result};
use crate::geometry::{SamplerConfig, TransformFamily};
use crate::graph::Dataset;
use crate::polytopes::{families_for_dim, make_augmented_trainset, make_dataset, Normalization, PolytopeDatasetConfig};
use crate::rng::derive_seed;

/// A named test split: `copies_per_class` graphs per class under one
/// transform family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestColumn {
    pub name: String,
    pub family: TransformFamily,
}

/// Results-table column name for a test split drawn from `family`.
pub fn column_name(family: TransformFamily) -> String {
    match family {
        TransformFamily::Orthogonal => "test_orth".into(),
        TransformFamily::OrthogonalDilation => "test_orth_dil".into(),
        TransformFamily::NonOrthogonal { mu } => format!("test_mu{mu:.1}"),
        TransformFamily::Local => "test_local".into(),
    }
}

/// The five test columns of the polytope tables.
pub fn table_columns() -> Vec<TestColumn> {
    [
        TransformFamily::Orthogonal,
        TransformFamily::OrthogonalDilation,
        TransformFamily::NonOrthogonal { mu: 0.5 },
        TransformFamily::NonOrthogonal { mu: 1.5 },
        TransformFamily::NonOrthogonal { mu: 3.0 },
    ]
    .into_iter()
    .map(|family| TestColumn {
        name: column_name(family),
        family,
    })
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: ModelConfig,
    pub dim: usize,
    /// Epochs, learning rate and batch size; the seed is set per run.
    pub train: TrainConfig,
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub columns: Vec<TestColumn>,
    pub copies_per_class: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Transformed training copies per class.
    #[serde(default)]
    pub augment_k: usize,
    #[serde(default = "default_augment_family")]
    pub augment_family: TransformFamily,
    #[serde(default)]
    pub node_features: bool,
    #[serde(default)]
    pub normalization: Normalization,
    /// Seed of the shared test splits.
    #[serde(default)]
    pub data_seed: u64,
}

fn default_augment_family() -> TransformFamily {
    TransformFamily::Orthogonal
}

impl ExperimentSpec {
    /// Full-batch, 1000 epochs, 10 seeds, all five test columns.
    pub fn table(model: ModelConfig, dim: usize) -> Self {
        Self {
            model,
            dim,
            train: TrainConfig::default(),
            seeds: 10,
            base_seed: 0,
            columns: table_columns(),
            copies_per_class: 20,
            sampler: SamplerConfig::default(),
            augment_k: 0,
            augment_family: default_augment_family(),
            node_features: false,
            normalization: Normalization::default(),
            data_seed: 0,
        }
    }

    fn data_config(&self, family: TransformFamily, seed: u64, copies: usize) -> PolytopeDatasetConfig {
        PolytopeDatasetConfig {
            dim: self.dim,
            family,
            sampler: self.sampler,
            copies_per_class: copies,
            seed,
            node_features: self.node_features,
            normalization: self.normalization,
        }
    }

    pub fn run_seed(&self, i: usize) -> u64 {
        self.base_seed + i as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunResult>,
    pub row: ResultsRow,
}

/// Worker count: `EQUIGRAPH_THREADS` when set, otherwise rayon's default.
pub fn thread_count() -> Result<Option<usize>> {
    match std::env::var("EQUIGRAPH_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "EQUIGRAPH_THREADS={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(None),
    }
}

pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Test splits for every column, shared by all seeds.
pub fn test_sets(spec: &ExperimentSpec) -> Result<Vec<(String, Dataset)>> {
    spec.columns
        .iter()
        .map(|c| {
            let (_, test) = make_dataset(&spec.data_config(c.family, spec.data_seed, spec.copies_per_class))?;
            Ok((c.name.clone(), test))
        })
        .collect()
}

/// Trains and evaluates one seed.
pub fn run_one(spec: &ExperimentSpec, seed: u64, tests: &[(String, Dataset)]) -> Result<RunResult> {
    let aug_cfg = spec.data_config(spec.augment_family, derive_seed(seed, "augment"), 0);
    let trainset = make_augmented_trainset(&aug_cfg, spec.augment_k)?;
    let cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let (model, mut result) = train(&spec.model, &trainset, &cfg)?;
    for (name, ds) in tests {
        result
            .test_accuracy
            .push((name.clone(), evaluate(&model, ds)?.accuracy));
    }
    Ok(result)
}

/// Independent train/evaluate runs for `spec.seeds` seeds, in parallel, and
/// their mean and standard deviation per column.
pub fn multi_seed_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    if spec.seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let classes = families_for_dim(spec.dim)?.len();
    if spec.model.readout.num_classes != classes {
        return Err(Error::Config(format!(
            "model emits {} classes, dimension {} has {classes}",
            spec.model.readout.num_classes, spec.dim
        )));
    }
    let tests = test_sets(spec)?;
    let runs = with_pool(|| {
        (0..spec.seeds)
            .into_par_iter()
            .map(|i| run_one(spec, spec.run_seed(i), &tests))
            .collect::<Result<Vec<_>>>()
    })??;
    let row = summarise(spec, &runs);
    Ok(ExperimentOutcome { runs, row })
}

pub fn summarise(spec: &ExperimentSpec, runs: &[RunResult]) -> ResultsRow {
    let train: Vec<f64> = runs.iter().map(|r| r.train_accuracy).collect();
    let tests = spec
        .columns
        .iter()
        .map(|c| {
            let v: Vec<f64> = runs.iter().filter_map(|r| r.test(&c.name)).collect();
            (c.name.clone(), Stat::of(&v))
        })
        .collect();
    ResultsRow {
        block: spec.model.label(),
        rho: spec.model.aggregation().name().to_string(),
        psi: spec.model.psi().short_name().to_string(),
        dim: spec.dim,
        train_acc: Stat::of(&train),
        tests,
        seed_count: runs.len(),
        augment_k: spec.augment_k,
    }
}
