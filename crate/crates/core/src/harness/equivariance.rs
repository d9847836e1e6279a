use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::blocks::Model;
use crate::error::{Error, Result};
use crate::geometry::{sample_local_transform, sample_transform, SamplerConfig, TransformFamily, TransformSpec};
use crate::graph::GraphSample;
use crate::rng::rng_for;

use super::train::predict_all;

/// Transformation group probed by [`check_equivariance`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupTag {
    /// `Qx + q`.
    #[serde(rename = "e3")]
    Euclidean,
    /// `gamma Q x`.
    #[serde(rename = "co")]
    ConformalOrthogonal,
    /// `gamma Q x + q`.
    #[serde(rename = "conf")]
    ConformalSubgroup,
    #[serde(rename = "perm")]
    Permutation,
    /// Rotation of the far side of a bridge edge about the bridge axis.
    #[serde(rename = "local")]
    Local,
}

impl GroupTag {
    pub fn parse(tag: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(tag.into())).map_err(|_| {
            Error::Config(format!(
                "unknown group tag {tag:?} (expected e3, co, conf, perm or local)"
            ))
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupTag::Euclidean => "e3",
            GroupTag::ConformalOrthogonal => "co",
            GroupTag::ConformalSubgroup => "conf",
            GroupTag::Permutation => "perm",
            GroupTag::Local => "local",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceConfig {
    pub group: GroupTag,
    pub trials: usize,
    pub tolerance: f64,
    /// Dilation range for the `co` and `conf` groups.
    pub gamma_range: (f64, f64),
    pub translation: f64,
    pub seed: u64,
}

impl EquivarianceConfig {
    pub fn new(group: GroupTag, trials: usize, tolerance: f64) -> Self {
        let s = SamplerConfig::default();
        Self {
            group,
            trials,
            tolerance,
            gamma_range: s.gamma_range,
            translation: s.translation,
            seed: 0,
        }
    }
}

/// The input change applied in one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrialInput {
    Transform {
        spec: TransformSpec,
    },
    /// `perm[old] = new`.
    Permutation {
        perm: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub group: GroupTag,
    pub trials: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Index of the graph and the input change with the largest deviation.
    pub worst_sample: Option<usize>,
    pub worst_case: Option<TrialInput>,
}

impl EquivarianceReport {
    pub fn summary(&self) -> String {
        format!(
            "{} group={} trials={} max_dev={:.3e} tol={:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.group.as_str(),
            self.trials,
            self.max_deviation,
            self.tolerance
        )
    }
}

fn sample_input(g: &GraphSample, cfg: &EquivarianceConfig, trial: usize) -> Result<(GraphSample, TrialInput)> {
    let mut rng = rng_for(cfg.seed, &format!("equivariance/{}/{trial}", cfg.group.as_str()));
    let n = g.coords().cols();
    let sampler = |translation: f64| SamplerConfig {
        gamma_range: cfg.gamma_range,
        translation,
        dilate_non_orthogonal: true,
    };
    let spec = match cfg.group {
        GroupTag::Euclidean => sample_transform(TransformFamily::Orthogonal, n, &sampler(cfg.translation), &mut rng)?,
        GroupTag::ConformalOrthogonal => {
            sample_transform(TransformFamily::OrthogonalDilation, n, &sampler(0.0), &mut rng)?
        }
        GroupTag::ConformalSubgroup => sample_transform(
            TransformFamily::OrthogonalDilation,
            n,
            &sampler(cfg.translation),
            &mut rng,
        )?,
        GroupTag::Local => sample_local_transform(g, &mut rng)?,
        GroupTag::Permutation => {
            let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
            perm.shuffle(&mut rng);
            return Ok((g.permute_nodes(&perm)?, TrialInput::Permutation { perm }));
        }
    };
    Ok((spec.apply_to(g)?, TrialInput::Transform { spec }))
}

/// Largest absolute logit difference between each original and its changed
/// copy, one entry per pair.
pub fn logit_deviations(model: &Model, originals: &[GraphSample], changed: &[GraphSample]) -> Result<Vec<f64>> {
    if originals.len() != changed.len() {
        return Err(Error::Contract(format!(
            "{} originals vs {} changed samples",
            originals.len(),
            changed.len()
        )));
    }
    let a = predict_all(model, originals)?;
    let b = predict_all(model, changed)?;
    Ok((0..a.rows())
        .map(|i| {
            a.row(i)
                .iter()
                .zip(b.row(i))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Runs `trials` trials, cycling through `samples`: each trial samples a
/// group element, applies it and records the largest logit change.
pub fn check_equivariance(
    model: &Model,
    samples: &[GraphSample],
    cfg: &EquivarianceConfig,
) -> Result<EquivarianceReport> {
    if cfg.trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    if samples.is_empty() {
        return Err(Error::Contract("no graphs to check".into()));
    }
    let mut originals = Vec::with_capacity(cfg.trials);
    let mut changed = Vec::with_capacity(cfg.trials);
    let mut inputs = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let g = &samples[t % samples.len()];
        let (h, input) = sample_input(g, cfg, t)?;
        originals.push(g.clone());
        changed.push(h);
        inputs.push(input);
    }
    let devs = logit_deviations(model, &originals, &changed)?;
    let (worst, max) = devs.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &d)| {
        if d > acc.1 || d.is_nan() {
            (i, d)
        } else {
            acc
        }
    });
    Ok(EquivarianceReport {
        group: cfg.group,
        trials: cfg.trials,
        max_deviation: max,
        tolerance: cfg.tolerance,
        pass: max < cfg.tolerance,
        worst_sample: Some(worst % samples.len()),
        worst_case: Some(inputs.swap_remove(worst)),
    })
}
