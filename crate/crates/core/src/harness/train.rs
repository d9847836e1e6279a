use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::blocks::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::graph::{Batch, Dataset, GraphSample};
use crate::rng::{derive_seed, rng_for};
use crate::tensor::{Adam, AdamConfig, Mode, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 1e-3,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    /// Accuracy of the predictions made during the epoch's forward passes.
    pub accuracy: f64,
}

/// Outcome of one training run. Equality ignores the timing field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub history: Vec<EpochStats>,
    /// Evaluation-mode accuracy on the training set after the last step.
    pub train_accuracy: f64,
    /// Named test accuracies, filled in by the caller.
    #[serde(default)]
    pub test_accuracy: Vec<(String, f64)>,
    /// Mean wall-clock seconds per optimiser step.
    pub step_seconds: f64,
}

impl PartialEq for RunResult {
    fn eq(&self, other: &Self) -> bool {
        self.model == other.model
            && self.train == other.train
            && self.history == other.history
            && self.train_accuracy == other.train_accuracy
            && self.test_accuracy == other.test_accuracy
    }
}

impl RunResult {
    pub fn test(&self, name: &str) -> Option<f64> {
        self.test_accuracy.iter().find(|(n, _)| n == name).map(|(_, a)| *a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// Number of predictions per class.
    pub class_counts: Vec<usize>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| argmax(logits.row(i)) == l)
        .count();
    hits as f64 / labels.len() as f64
}

fn labelled(dataset: &Dataset) -> Result<Vec<usize>> {
    dataset
        .labels()
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Contract(format!("sample {i} has no class label"))))
        .collect()
}

fn check_widths(model: &Model, dataset: &Dataset) -> Result<()> {
    if model.dims() != dataset.meta.dims {
        return Err(Error::Shape(format!(
            "dataset widths {:?} do not match model widths {:?}",
            dataset.meta.dims,
            model.dims()
        )));
    }
    if dataset.meta.num_classes > model.num_classes() {
        return Err(Error::Shape(format!(
            "dataset has {} classes, model emits {}",
            dataset.meta.num_classes,
            model.num_classes()
        )));
    }
    Ok(())
}

/// Evaluation-mode logits for many samples, computed in chunks.
pub fn predict_all(model: &Model, samples: &[GraphSample]) -> Result<Tensor> {
    const CHUNK: usize = 256;
    let mut parts = Vec::new();
    for chunk in samples.chunks(CHUNK) {
        let refs: Vec<&GraphSample> = chunk.iter().collect();
        parts.push(model.predict(&Batch::new(&refs)?)?);
    }
    if parts.is_empty() {
        return Ok(Tensor::zeros(vec![0, model.num_classes()]));
    }
    Tensor::vstack(&parts.iter().collect::<Vec<_>>())
}

pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<Evaluation> {
    check_widths(model, dataset)?;
    let labels = labelled(dataset)?;
    let logits = predict_all(model, &dataset.samples)?;
    let predictions: Vec<usize> = (0..logits.rows()).map(|i| argmax(logits.row(i))).collect();
    let mut class_counts = vec![0; model.num_classes()];
    for &p in &predictions {
        class_counts[p] += 1;
    }
    Ok(Evaluation {
        accuracy: accuracy(&logits, &labels),
        predictions,
        class_counts,
    })
}

/// Trains a fresh model with softmax cross-entropy and Adam. The run seed
/// replaces `model_config.seed`.
pub fn train(model_config: &ModelConfig, dataset: &Dataset, cfg: &TrainConfig) -> Result<(Model, RunResult)> {
    if dataset.is_empty() {
        return Err(Error::Contract("empty training set".into()));
    }
    if cfg.batch_size == Some(0) {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut mc = model_config.clone();
    mc.seed = derive_seed(cfg.seed, "init");
    let mut model = Model::new(mc, dataset.meta.dims)?;
    check_widths(&model, dataset)?;
    let labels = labelled(dataset)?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), model.params());
    let dropout_seed = derive_seed(cfg.seed, "dropout");
    let mut counter = 0u64;

    let n = dataset.len();
    let batch_size = cfg.batch_size.unwrap_or(n).min(n);
    let full = if batch_size == n {
        Some(Batch::new(&dataset.samples.iter().collect::<Vec<_>>())?)
    } else {
        None
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;
    let started = Instant::now();
    for epoch in 0..cfg.epochs {
        if full.is_none() {
            order.shuffle(&mut rng_for(cfg.seed, &format!("shuffle/{epoch}")));
        }
        let (mut loss_sum, mut hits) = (0.0, 0.0);
        for chunk in order.chunks(batch_size) {
            let owned;
            let batch = match &full {
                Some(b) => b,
                None => {
                    owned = Batch::new(&chunk.iter().map(|&i| &dataset.samples[i]).collect::<Vec<_>>())?;
                    &owned
                }
            };
            let chunk_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            tape.bind_all(model.params());
            let mut mode = Mode::Train {
                seed: dropout_seed,
                counter,
            };
            let logits = model.forward(&mut tape, batch, &mut mode)?;
            if let Mode::Train { counter: c, .. } = mode {
                counter = c;
            }
            let loss = tape.softmax_cross_entropy(logits, &chunk_labels)?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(Error::Diverged(format!("loss {loss_value} at epoch {epoch}")));
            }
            let m = chunk.len() as f64;
            loss_sum += loss_value * m;
            hits += accuracy(tape.value(logits), &chunk_labels) * m;
            let grads = tape.backward(loss)?;
            adam.step(model.params_mut(), &grads)?;
            steps += 1;
        }
        history.push(EpochStats {
            loss: loss_sum / n as f64,
            accuracy: hits / n as f64,
        });
    }
    let step_seconds = if steps > 0 {
        started.elapsed().as_secs_f64() / steps as f64
    } else {
        0.0
    };
    let train_accuracy = evaluate(&model, dataset)?.accuracy;
    let result = RunResult {
        model: model.config().clone(),
        train: cfg.clone(),
        history,
        train_accuracy,
        test_accuracy: Vec::new(),
        step_seconds,
    };
    Ok((model, result))
}
