use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Index, Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::{counter_uniform, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
    Identity,
}

/// Forward-pass mode. Dropout draws come from a counter-based stream, so a
/// training pass is reproducible from `(seed, counter)` alone.
#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    Eval,
    Train { seed: u64, counter: u64 },
}

impl Mode {
    pub fn train(seed: u64) -> Self {
        Mode::Train { seed, counter: 0 }
    }

    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    fn dropout_mask(&mut self, len: usize, rate: f64) -> Option<Vec<f64>> {
        let Mode::Train { seed, counter } = self else {
            return None;
        };
        if rate <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..len as u64)
            .map(|i| {
                if counter_uniform(*seed, *counter + i) < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        *counter += len as u64;
        Some(mask)
    }
}

/// One input block of a multi-part MLP input. When `gather` is set, the
/// block's first-layer projection is computed once per source row and then
/// gathered, which is algebraically the same as gathering the raw rows and
/// concatenating them.
#[derive(Clone, Debug)]
pub struct MlpInput {
    pub value: Var,
    pub gather: Option<Index>,
}

impl MlpInput {
    pub fn rows(value: Var) -> Self {
        Self { value, gather: None }
    }

    pub fn gathered(value: Var, index: &Index) -> Self {
        Self {
            value,
            gather: Some(index.clone()),
        }
    }
}

/// Fully connected network: affine layers with `activation` between them
/// and a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    weights: Vec<ParamId>,
    biases: Vec<ParamId>,
    activation: Activation,
    dropout: f64,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!("MLP {name} needs at least two widths")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
            weights.push(store.insert(format!("{name}.{l}.weight"), Tensor::matrix(fan_in, fan_out, w)));
            biases.push(store.insert(format!("{name}.{l}.bias"), Tensor::zeros(vec![1, fan_out])));
        }
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            activation,
            dropout,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: &mut Mode) -> Result<Var> {
        let rows = tape.shape(x).0;
        self.forward_parts(tape, store, &[MlpInput::rows(x)], rows, mode)
    }

    /// Evaluates the MLP on the column concatenation of `parts`, each with
    /// `rows` rows after its optional gather.
    pub fn forward_parts(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        parts: &[MlpInput],
        rows: usize,
        mode: &mut Mode,
    ) -> Result<Var> {
        let total: usize = parts.iter().map(|p| tape.shape(p.value).1).sum();
        if total != self.input_width() {
            return Err(Error::Shape(format!(
                "MLP expects input width {}, got {total}",
                self.input_width()
            )));
        }
        let w0 = tape.param(store, self.weights[0]);
        let mut projected = Vec::with_capacity(parts.len());
        let mut offset = 0;
        for part in parts {
            let width = tape.shape(part.value).1;
            if width == 0 {
                continue;
            }
            let slice = tape.row_slice(w0, offset, width)?;
            offset += width;
            projected.push((tape.matmul(part.value, slice)?, part.gather.clone()));
        }
        let b0 = tape.param(store, self.biases[0]);
        let mut h = tape.gather_sum(&projected, Some(b0), rows)?;
        for l in 1..self.weights.len() {
            h = self.activate(tape, h, mode)?;
            let w = tape.param(store, self.weights[l]);
            let b = tape.param(store, self.biases[l]);
            let z = tape.matmul(h, w)?;
            h = tape.add(z, b)?;
        }
        Ok(h)
    }

    fn activate(&self, tape: &mut Tape, h: Var, mode: &mut Mode) -> Result<Var> {
        let a = match self.activation {
            Activation::Swish => tape.swish(h),
            Activation::Identity => h,
        };
        match mode.dropout_mask(tape.value(a).len(), self.dropout) {
            Some(mask) => tape.dropout_mask(a, mask),
            None => Ok(a),
        }
    }
}
