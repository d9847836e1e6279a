use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Gradients;
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam with bias-corrected moments, one accumulator pair per parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| Tensor::zeros(store.get(id).shape().to_vec()))
                .collect()
        };
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter. Each parameter must have a
    /// gradient; a missing one is a contract violation and nothing changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for &id in &ids {
            match grads.param(id) {
                Some(g) if g.shape() == store.get(id).shape() => {}
                Some(g) => {
                    return Err(Error::Contract(format!(
                        "gradient for {} has shape {:?}",
                        store.name(id),
                        g.shape()
                    )))
                }
                None => {
                    return Err(Error::Contract(format!(
                        "missing gradient for parameter {}",
                        store.name(id)
                    )))
                }
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (slot, &id) in ids.iter().enumerate() {
            let g = grads.param(id).expect("checked above").data();
            let m = self.first[slot].data_mut();
            let v = self.second[slot].data_mut();
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamId, Tape};

    fn bowl_grads(store: &ParamStore, x: ParamId) -> Gradients {
        let mut tape = Tape::new();
        let xv = tape.param(store, x);
        let sq = tape.square(xv);
        let s = tape.sum_cols(sq);
        tape.backward(s).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]));
        let before = store.clone();
        let mut tape = Tape::new();
        tape.param(&store, x);
        let c = tape.constant(Tensor::scalar(4.0));
        let grads = tape.backward(c).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, &grads).unwrap();
        assert_eq!(store, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]));
        let grads = bowl_grads(&store, x);
        let mut adam = Adam::new(AdamConfig::with_lr(0.01), &store);
        adam.step(&mut store, &grads).unwrap();
        let expect = [0.99, -1.99, 0.49];
        for (v, e) in store.get(x).data().iter().zip(expect) {
            assert!((v - e).abs() < 1e-8, "{v} vs {e}");
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]));
        let mut adam = Adam::new(AdamConfig::with_lr(0.01), &store);
        let mut reached = None;
        for step in 1..=2000 {
            let grads = bowl_grads(&store, x);
            adam.step(&mut store, &grads).unwrap();
            let norm = store.get(x).data().iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-3 {
                reached = Some(step);
                break;
            }
        }
        assert!(reached.is_some(), "did not reach |x| < 1e-3");
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::scalar(1.0));
        let grads = bowl_grads(&store, x);
        store.insert("y", Tensor::scalar(1.0));
        let mut adam = Adam::new(AdamConfig::default(), &store);
        assert!(matches!(adam.step(&mut store, &grads), Err(Error::Contract(_))));
        assert_eq!(adam.step_count(), 0);
    }
}
