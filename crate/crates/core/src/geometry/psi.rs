use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which embeddings feed the scalar weight network of the
/// neighbour-difference coordinate map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiInputs {
    /// `a_ji = phi_x(e+_ji, v+_j, v+_i, u)`.
    #[default]
    Full,
    /// `a_ji = phi_x(e+_ji)`, the EGNN wiring.
    Edge,
}

/// Coordinate update applied by DGN/AGN blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PsiChoice {
    /// `x+_i = x_i`.
    #[default]
    Identity,
    /// `x+_i = x_i + sum_{j in N_i} a_ji (x_j - x_i)` with a learned scalar
    /// `a_ji` per edge.
    WeightedNeighbourDifference {
        #[serde(default)]
        inputs: PsiInputs,
    },
}

impl PsiChoice {
    pub fn weighted(inputs: PsiInputs) -> Self {
        PsiChoice::WeightedNeighbourDifference { inputs }
    }

    pub fn has_weight_net(&self) -> bool {
        matches!(self, PsiChoice::WeightedNeighbourDifference { .. })
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            PsiChoice::Identity => "identity",
            PsiChoice::WeightedNeighbourDifference {
                inputs: PsiInputs::Full,
            } => "weighted",
            PsiChoice::WeightedNeighbourDifference {
                inputs: PsiInputs::Edge,
            } => "weighted_edge",
        }
    }
}

/// Neighbour-difference map with given per-edge weights `a_ji`, summed over
/// the in-neighbours of each node. `edges` are `(src j, dst i)`.
pub fn psi_weighted(coords: &Tensor, edges: &[(usize, usize)], weights: &[f64]) -> Result<Tensor> {
    if weights.len() != edges.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} edges",
            weights.len(),
            edges.len()
        )));
    }
    let mut out = coords.clone();
    for (&(j, i), &a) in edges.iter().zip(weights) {
        for d in 0..coords.cols() {
            out.row_mut(i)[d] += a * (coords.get(j, d) - coords.get(i, d));
        }
    }
    Ok(out)
}

/// Uniform affine update `x+ = scale * R x + shift`, applied identically to
/// every node. With orthogonal `R` it preserves relative distances up to
/// `scale^2` and all angles.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePsi {
    pub scale: f64,
    pub rotation: DMatrix<f64>,
    pub shift: Vec<f64>,
}

impl AffinePsi {
    pub fn apply(&self, coords: &Tensor) -> Tensor {
        let n = coords.cols();
        let mut out = coords.clone();
        for r in 0..coords.rows() {
            let x = coords.row(r);
            for (d, o) in out.row_mut(r).iter_mut().enumerate() {
                let rx: f64 = (0..n).map(|c| self.rotation[(d, c)] * x[c]).sum();
                *o = self.scale * rx + self.shift[d];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_are_identity() {
        let x = Tensor::matrix(3, 2, vec![0.0, 1.0, 2.0, 3.0, -1.0, 0.5]);
        let e = [(0, 1), (1, 0), (1, 2), (2, 1)];
        assert_eq!(psi_weighted(&x, &e, &[0.0; 4]).unwrap(), x);
    }

    #[test]
    fn weights_move_towards_neighbours() {
        let x = Tensor::matrix(2, 1, vec![0.0, 1.0]);
        let y = psi_weighted(&x, &[(0, 1), (1, 0)], &[0.5, 0.25]).unwrap();
        assert_eq!(y.data(), &[0.25, 0.5]);
    }

    #[test]
    fn serde_shape() {
        let s = serde_json::to_string(&PsiChoice::weighted(PsiInputs::Edge)).unwrap();
        assert_eq!(s, r#"{"kind":"weighted_neighbour_difference","inputs":"edge"}"#);
        let back: PsiChoice = serde_json::from_str(r#"{"kind":"identity"}"#).unwrap();
        assert_eq!(back, PsiChoice::Identity);
    }
}
