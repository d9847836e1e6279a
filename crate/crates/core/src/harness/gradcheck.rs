use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::blocks::Model;
use crate::error::{Error, Result};
use crate::graph::Batch;
use crate::rng::rng_for;
use crate::tensor::{Mode, ParamId, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub coordinates: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates where both gradients are below this magnitude are
    /// skipped. The effective floor also grows with the rounding error of
    /// the difference quotient, `16 eps (|loss| + max |logit|) / (step * tolerance)`.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            coordinates: 200,
            step: 1e-6,
            tolerance: 1e-4,
            floor: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub tolerance: f64,
    pub pass: bool,
}

fn loss(model: &Model, batch: &Batch, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let logits = model.forward(&mut tape, batch, &mut Mode::Eval)?;
    let l = tape.softmax_cross_entropy(logits, labels)?;
    Ok(tape.value(l).item())
}

/// Compares reverse-mode gradients of the evaluation-mode cross-entropy
/// against central differences on randomly ordered parameter coordinates,
/// stopping once `coordinates` of them have been checked. Passes when every
/// checked coordinate is within tolerance and at least one was checked.
pub fn grad_check(model: &mut Model, batch: &Batch, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let labels = batch
        .labels
        .clone()
        .ok_or_else(|| Error::Contract("gradient check needs class labels".into()))?;
    let mut tape = Tape::new();
    tape.bind_all(model.params());
    let logits = model.forward(&mut tape, batch, &mut Mode::Eval)?;
    let l = tape.softmax_cross_entropy(logits, &labels)?;
    // The loss carries rounding error of several ulps of its largest
    // term; below that resolution the difference quotient is noise.
    let magnitude = tape.value(l).item().abs() + tape.value(logits).data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let grads = tape.backward(l)?;
    let resolution = 16.0 * f64::EPSILON * magnitude / (cfg.step * cfg.tolerance);
    let floor = cfg.floor.max(resolution);

    let ids: Vec<ParamId> = model.params().ids().collect();
    let mut coords = Vec::new();
    for &id in &ids {
        for k in 0..model.params().get(id).len() {
            coords.push((id, k));
        }
    }
    let mut rng = rng_for(cfg.seed, "gradcheck");
    coords.shuffle(&mut rng);

    let (mut checked, mut skipped, mut max_err, mut worst) = (0, 0, 0.0f64, None);
    for (id, k) in coords {
        if checked == cfg.coordinates {
            break;
        }
        let analytic = grads
            .param(id)
            .ok_or_else(|| Error::Contract(format!("no gradient for {}", model.params().name(id))))?
            .data()[k];
        let original = model.params().get(id).data()[k];
        model.params_mut().get_mut(id).data_mut()[k] = original + cfg.step;
        let up = loss(model, batch, &labels);
        model.params_mut().get_mut(id).data_mut()[k] = original - cfg.step;
        let down = loss(model, batch, &labels);
        model.params_mut().get_mut(id).data_mut()[k] = original;
        let numeric = (up? - down?) / (2.0 * cfg.step);
        let scale = analytic.abs().max(numeric.abs());
        if scale < floor {
            skipped += 1;
            continue;
        }
        checked += 1;
        let err = (analytic - numeric).abs() / scale;
        if err > max_err || err.is_nan() {
            max_err = err;
            worst = Some((model.params().name(id).to_string(), k));
        }
    }
    Ok(GradCheckReport {
        checked,
        skipped,
        max_relative_error: max_err,
        worst,
        tolerance: cfg.tolerance,
        pass: checked > 0 && max_err < cfg.tolerance,
    })
}
