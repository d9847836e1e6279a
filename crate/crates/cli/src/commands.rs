use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use equigraph::geometry::{PsiInputs, SamplerConfig};
use equigraph::harness::{
    build_report, check_equivariance, column_name, evaluate, grad_check, read_results_csv, render_table, train,
    with_pool, write_results_csv, EquivarianceConfig, GradCheckConfig, ResultsRow, RunResult, Stat, TrainConfig,
};
use equigraph::json::to_string_precise;
use equigraph::polytopes::{
    base_graphs, families_for_dim, make_augmented_trainset, make_dataset, PolytopeDatasetConfig,
};
use equigraph::{Batch, Dataset, Model, ModelConfig, PsiChoice, TransformFamily};

use crate::manifest::RunManifest;
use crate::{
    CheckArgs, Cli, Command, Failure, FamilyArg, FormatArg, GenArgs, GradcheckArgs, ModelArgs, PresetArg, PsiArg,
    ReportArgs, RerunArgs, TrainArgs,
};

type Outcome = Result<(), Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Gen(a) => gen(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Check(a) => check(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::Report(a) => report(&a),
        Command::Rerun(a) => rerun(&a),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn gen(a: &GenArgs) -> Outcome {
    families_for_dim(a.dim).map_err(|e| usage(format!("--dim {}: {e}", a.dim)))?;
    let family = match (a.family, a.mu) {
        (FamilyArg::NonOrthogonal, Some(mu)) if mu.is_finite() && mu >= 0.0 => TransformFamily::NonOrthogonal { mu },
        (FamilyArg::NonOrthogonal, Some(mu)) => return Err(usage(format!("--mu must be non-negative, got {mu}"))),
        (FamilyArg::NonOrthogonal, None) => return Err(usage("--family non-orthogonal needs --mu")),
        (_, Some(_)) => return Err(usage("--mu only applies to --family non-orthogonal")),
        (FamilyArg::Orthogonal, None) => TransformFamily::Orthogonal,
        (FamilyArg::OrthogonalDilation, None) => TransformFamily::OrthogonalDilation,
    };
    if !(a.gamma_min > 0.0 && a.gamma_min <= a.gamma_max && a.gamma_max.is_finite()) {
        return Err(usage(format!(
            "need 0 < --gamma-min <= --gamma-max, got {} and {}",
            a.gamma_min, a.gamma_max
        )));
    }
    if !(a.translation >= 0.0 && a.translation.is_finite()) {
        return Err(usage(format!(
            "--translation must be non-negative, got {}",
            a.translation
        )));
    }
    if a.copies == 0 {
        return Err(usage("--copies must be at least 1"));
    }
    let cfg = PolytopeDatasetConfig {
        dim: a.dim,
        family,
        sampler: SamplerConfig {
            gamma_range: (a.gamma_min, a.gamma_max),
            translation: a.translation,
            dilate_non_orthogonal: true,
        },
        copies_per_class: a.copies,
        seed: a.seed,
        node_features: a.node_features,
        normalization: Default::default(),
    };
    let classes: Vec<String> = families_for_dim(a.dim)?.iter().map(|f| f.label()).collect();
    let mut trainset = make_augmented_trainset(&cfg, a.augment_k)?;
    let (_, mut testset) = make_dataset(&cfg)?;
    for ds in [&mut trainset, &mut testset] {
        ds.meta.details.insert("classes".into(), serde_json::json!(classes));
        ds.meta
            .details
            .insert("augment_k".into(), serde_json::json!(a.augment_k));
    }
    let (train_dir, test_dir) = (a.out.join("train"), a.out.join("test"));
    trainset.save(&train_dir)?;
    testset.save(&test_dir)?;
    let mut m = RunManifest::new("gen", serde_json::json!({ "dataset": cfg, "augment_k": a.augment_k }));
    m.seeds = vec![a.seed];
    m.outputs = vec![train_dir, test_dir];
    m.write(&a.out)?;
    println!(
        "wrote {} train and {} test graphs ({} classes) to {}",
        trainset.len(),
        testset.len(),
        classes.len(),
        a.out.display()
    );
    Ok(())
}

/// Loads `dir` itself when it is a dataset, otherwise `dir/split`.
fn load_split(dir: &Path, split: &str) -> anyhow::Result<(Dataset, PathBuf)> {
    let path = if dir.join("metadata.json").is_file() {
        dir.to_path_buf()
    } else {
        dir.join(split)
    };
    if !path.join("metadata.json").is_file() {
        return Err(anyhow!(
            "{} is not a dataset directory (no metadata.json)",
            path.display()
        ));
    }
    let ds = Dataset::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok((ds, path))
}

fn detail<T: for<'de> Deserialize<'de>>(ds: &Dataset, key: &str) -> Option<T> {
    ds.meta
        .details
        .get(key)
        .and_then(|v| serde_json::from_value(v.clone()).ok())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Full {
        model: ModelConfig,
        #[serde(default)]
        train: Option<TrainConfig>,
    },
    Model(ModelConfig),
}

/// Model and training configuration from a file or preset, before flag
/// overrides.
fn resolve_model(a: &ModelArgs, num_classes: usize) -> Result<(ModelConfig, TrainConfig), Failure> {
    match (&a.config, a.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: ConfigFile =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            Ok(match file {
                ConfigFile::Full { model, train } => (model, train.unwrap_or_default()),
                ConfigFile::Model(model) => (model, TrainConfig::default()),
            })
        }
        (None, Some(preset)) => {
            let (kind, scaling) = preset.kind();
            let psi = match a.psi {
                PsiArg::Identity => PsiChoice::Identity,
                PsiArg::Weighted => PsiChoice::weighted(PsiInputs::Full),
                PsiArg::WeightedEdge => PsiChoice::weighted(PsiInputs::Edge),
            };
            Ok((
                ModelConfig::preset(kind, a.rho.into(), psi, scaling, num_classes),
                TrainConfig::default(),
            ))
        }
        (None, None) => Err(usage("give --config or --preset")),
    }
}

#[derive(Serialize)]
struct TrainManifestConfig<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    columns: &'a [String],
}

fn train_cmd(a: &TrainArgs) -> Outcome {
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    if a.batch_size == Some(0) {
        return Err(usage("--batch-size must be at least 1"));
    }
    if !a.data.is_dir() {
        return Err(Failure::Runtime(anyhow!(
            "data directory {} does not exist",
            a.data.display()
        )));
    }
    let (trainset, train_path) = load_split(&a.data, "train")?;
    let (model, mut tc) = resolve_model(&a.model, trainset.meta.num_classes)?;
    if model.readout.num_classes != trainset.meta.num_classes {
        return Err(Failure::Runtime(anyhow!(
            "model emits {} classes but {} has {}",
            model.readout.num_classes,
            train_path.display(),
            trainset.meta.num_classes
        )));
    }
    tc.epochs = a.epochs.unwrap_or(tc.epochs);
    tc.lr = a.lr.unwrap_or(tc.lr);
    if a.batch_size.is_some() {
        tc.batch_size = a.batch_size;
    }

    let mut tests: Vec<(String, Dataset)> = Vec::new();
    let mut datasets = vec![train_path];
    // A bare dataset directory or a gen directory without a test split
    // contributes no column of its own.
    let own_test = !a.data.join("metadata.json").is_file() && a.data.join("test").is_dir();
    let test_dirs = own_test.then_some(&a.data).into_iter().chain(&a.tests);
    for dir in test_dirs {
        let (ds, path) = load_split(dir, "test")?;
        let name = detail::<TransformFamily>(&ds, "transform")
            .map(column_name)
            .unwrap_or_else(|| format!("test_{}", tests.len()));
        if tests.iter().any(|(n, _)| *n == name) {
            return Err(usage(format!("two test splits share the column name {name}")));
        }
        tests.push((name, ds));
        datasets.push(path);
    }

    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| a.base_seed + i).collect();
    let runs: Vec<RunResult> = with_pool(|| {
        seeds
            .par_iter()
            .map(|&seed| -> anyhow::Result<RunResult> {
                let cfg = TrainConfig { seed, ..tc.clone() };
                let (m, mut result) = train(&model, &trainset, &cfg)?;
                for (name, ds) in &tests {
                    result.test_accuracy.push((name.clone(), evaluate(&m, ds)?.accuracy));
                }
                let dir = a.out.join(format!("seed_{seed}"));
                m.save(&dir)?;
                std::fs::write(dir.join("run.json"), to_string_precise(&result)?)?;
                Ok(result)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })??;

    let row = ResultsRow {
        block: model.label(),
        rho: model.aggregation().name().into(),
        psi: model.psi().short_name().into(),
        dim: trainset.meta.dims.n_x,
        train_acc: Stat::of(&runs.iter().map(|r| r.train_accuracy).collect::<Vec<_>>()),
        tests: tests
            .iter()
            .map(|(name, _)| {
                let v: Vec<f64> = runs.iter().filter_map(|r| r.test(name)).collect();
                (name.clone(), Stat::of(&v))
            })
            .collect(),
        seed_count: runs.len(),
        augment_k: detail(&trainset, "augment_k").unwrap_or(0),
    };
    let csv_path = a.out.join("results.csv");
    std::fs::write(&csv_path, write_results_csv(std::slice::from_ref(&row))?)?;

    let columns: Vec<String> = tests.iter().map(|(n, _)| n.clone()).collect();
    let mut m = RunManifest::new(
        "train",
        serde_json::to_value(TrainManifestConfig {
            model: &model,
            train: &tc,
            columns: &columns,
        })?,
    );
    m.seeds = seeds.clone();
    m.datasets = datasets;
    m.outputs = std::iter::once(csv_path)
        .chain(seeds.iter().map(|s| a.out.join(format!("seed_{s}"))))
        .collect();
    m.write(&a.out)?;
    print!("{}", render_table(&[row]));
    Ok(())
}

fn check(a: &CheckArgs) -> Outcome {
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if a.tol.is_nan() || a.tol <= 0.0 {
        return Err(usage(format!("--tol must be positive, got {}", a.tol)));
    }
    let model = Model::load(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let (data, data_path) = load_split(&a.data, "test")?;
    let mut cfg = EquivarianceConfig::new(a.group, a.trials, a.tol);
    cfg.seed = a.seed;
    cfg.gamma_range = (
        a.gamma_min.unwrap_or(cfg.gamma_range.0),
        a.gamma_max.unwrap_or(cfg.gamma_range.1),
    );
    if !(cfg.gamma_range.0 > 0.0 && cfg.gamma_range.0 <= cfg.gamma_range.1) {
        return Err(usage(format!(
            "need 0 < gamma-min <= gamma-max, got {:?}",
            cfg.gamma_range
        )));
    }
    let report = check_equivariance(&model, &data.samples, &cfg)?;
    let out = a.out.clone().unwrap_or_else(|| a.checkpoint.clone());
    std::fs::create_dir_all(&out)?;
    let json_path = out.join("equivariance.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&[&report])?)?;
    let mut m = RunManifest::new("check", serde_json::to_value(&cfg)?);
    m.seeds = vec![a.seed];
    m.datasets = vec![data_path, a.checkpoint.clone()];
    m.outputs = vec![json_path];
    m.write(&out)?;
    println!("{}", report.summary());
    if report.pass {
        return Ok(());
    }
    let worst = serde_json::to_string(&report.worst_case)?;
    Err(Failure::Check(format!(
        "worst case: sample {} under {worst}",
        report.worst_sample.map_or("-".into(), |s| s.to_string())
    )))
}

fn gradcheck(a: &GradcheckArgs) -> Outcome {
    let samples = match &a.data {
        Some(dir) => load_split(dir, "train")?.0.samples,
        None => base_graphs(&PolytopeDatasetConfig::new(3, TransformFamily::Orthogonal, 0))?,
    };
    let classes = samples
        .iter()
        .filter_map(|s| s.label().and_then(|l| l.class()))
        .max()
        .map_or(0, |c| c + 1);
    let model_args = ModelArgs {
        preset: a.model.preset.or(Some(PresetArg::Dgn)),
        config: a.model.config.clone(),
        ..a.model
    };
    let (mut config, _) = resolve_model(&model_args, classes)?;
    config.seed = a.seed;
    let mut model = Model::new(config, samples[0].dims())?;
    let batch = Batch::new(&samples.iter().collect::<Vec<_>>())?;
    let cfg = GradCheckConfig {
        coordinates: a.coordinates,
        step: a.step,
        tolerance: a.tol,
        seed: a.seed,
        ..GradCheckConfig::default()
    };
    let r = grad_check(&mut model, &batch, &cfg)?;
    println!(
        "{} checked={} skipped={} max_rel_err={:.3e} tol={:.1e}",
        if r.pass { "PASS" } else { "FAIL" },
        r.checked,
        r.skipped,
        r.max_relative_error,
        r.tolerance
    );
    if r.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("worst coordinate: {:?}", r.worst)))
    }
}

fn report(a: &ReportArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let rows = read_results_csv(&text).with_context(|| format!("malformed {}", a.input.display()))?;
    match a.format {
        FormatArg::Table => print!("{}", render_table(&rows)),
        FormatArg::Json => println!("{}", serde_json::to_string_pretty(&build_report(&rows))?),
    }
    Ok(())
}

fn rerun(a: &RerunArgs) -> Outcome {
    let m = RunManifest::read(&a.manifest)?;
    let mut args = m.args.clone();
    if let Some(out) = &a.out {
        args.push("--out".into());
        args.push(out.display().to_string());
    }
    crate::manifest::set_args(args.clone());
    let cli = <Cli as clap::Parser>::try_parse_from(std::iter::once("equigraph".to_string()).chain(args))
        .map_err(|e| usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(usage("a manifest cannot record a rerun"));
    }
    run(cli.command)
}
