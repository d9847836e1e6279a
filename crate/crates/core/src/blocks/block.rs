use serde::{Deserialize, Serialize};

use super::config::{BlockConfig, BlockKind};
use super::ops;
use crate::error::{Error, Result};
use crate::geometry::{PsiChoice, PsiInputs};
use crate::graph::Batch;
use crate::rng::Rng;
use crate::tensor::{Activation, Mlp, MlpInput, Mode, ParamStore, Tape, Var};

/// Widths of the embeddings flowing between blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDims {
    pub n_v: usize,
    pub n_e: usize,
    pub n_alpha: usize,
    pub n_u: usize,
    pub n_x: usize,
}

/// Embeddings of a batch between blocks: nodes, edges, angles, globals and
/// coordinates.
#[derive(Clone, Copy, Debug)]
pub struct GraphState {
    pub v: Var,
    pub e: Var,
    pub a: Var,
    pub u: Var,
    pub x: Var,
}

#[derive(Clone, Debug)]
pub struct Block {
    config: BlockConfig,
    input: StateDims,
    phi_e: Mlp,
    phi_v: Mlp,
    phi_u: Mlp,
    phi_a: Option<Mlp>,
    phi_x: Option<Mlp>,
}

impl Block {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        config: &BlockConfig,
        input: StateDims,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let kind = config.kind;
        if kind.updates_coords() && input.n_x == 0 {
            return Err(Error::Config(format!("{name}: {kind:?} block needs coordinates")));
        }
        let h = config.hidden_width;
        let i = input;
        let mlp = |store: &mut ParamStore, part: &str, fan_in: usize, out: usize, rng: &mut Rng| {
            Mlp::new(
                store,
                &format!("{name}.{part}"),
                &[fan_in, h, out],
                Activation::Swish,
                dropout,
                rng,
            )
        };
        let geo_e = usize::from(kind.uses_distances());
        let phi_a = if kind.uses_angles() {
            Some(mlp(
                store,
                "phi_alpha",
                3 * i.n_v + i.n_alpha + 1 + i.n_u,
                config.n_alpha,
                rng,
            )?)
        } else {
            None
        };
        let phi_e = mlp(store, "phi_e", 2 * i.n_v + i.n_e + geo_e + i.n_u, config.n_e, rng)?;
        let alpha_in = if kind.uses_angles() { config.n_alpha } else { 0 };
        let phi_v = mlp(store, "phi_v", i.n_v + config.n_e + alpha_in + i.n_u, config.n_v, rng)?;
        let phi_x = match config.psi {
            PsiChoice::WeightedNeighbourDifference { inputs } if kind.updates_coords() => {
                let fan_in = match inputs {
                    PsiInputs::Full => config.n_e + 2 * config.n_v + i.n_u,
                    PsiInputs::Edge => config.n_e,
                };
                Some(mlp(store, "phi_x", fan_in, 1, rng)?)
            }
            _ => None,
        };
        let u_in = match kind {
            BlockKind::Gn | BlockKind::Combined => config.n_v + config.n_e + i.n_u,
            BlockKind::Dgn => config.n_e + config.n_v + 1 + i.n_u,
            BlockKind::Agn => config.n_v + config.n_e + config.n_alpha + i.n_u,
        };
        let phi_u = mlp(store, "phi_u", u_in, config.n_u, rng)?;
        Ok(Self {
            config: config.clone(),
            input,
            phi_e,
            phi_v,
            phi_u,
            phi_a,
            phi_x,
        })
    }

    pub fn config(&self) -> &BlockConfig {
        &self.config
    }

    pub fn input_dims(&self) -> StateDims {
        self.input
    }

    pub fn output_dims(&self) -> StateDims {
        StateDims {
            n_v: self.config.n_v,
            n_e: self.config.n_e,
            n_alpha: if self.config.kind.uses_angles() {
                self.config.n_alpha
            } else {
                self.input.n_alpha
            },
            n_u: self.config.n_u,
            n_x: self.input.n_x,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
        s: GraphState,
        mode: &mut Mode,
    ) -> Result<GraphState> {
        let kind = self.config.kind;
        let rho = self.config.aggregation;
        let (nn, ne, na, ng) = (batch.num_nodes, batch.num_edges(), batch.num_angles(), batch.num_graphs);
        let g = MlpInput::gathered;
        let r = MlpInput::rows;

        let (a_new, alpha_at_node, alpha_total) = match &self.phi_a {
            Some(phi_a) => {
                let theta = ops::angles(tape, s.x, &batch.angle_j, &batch.angle_i, &batch.angle_k)?;
                let parts = [
                    g(s.v, &batch.angle_i),
                    g(s.v, &batch.angle_j),
                    g(s.v, &batch.angle_k),
                    r(s.a),
                    r(theta),
                    g(s.u, &batch.angle_graph),
                ];
                let a_new = phi_a.forward_parts(tape, store, &parts, na, mode)?;
                let at_node = ops::aggregate(tape, a_new, &batch.angle_i, nn, rho)?;
                let total = ops::aggregate(tape, a_new, &batch.angle_graph, ng, rho)?;
                (a_new, Some(at_node), Some(total))
            }
            None => (s.a, None, None),
        };

        let e_new = match kind {
            BlockKind::Gn | BlockKind::Agn => {
                let parts = [
                    g(s.v, &batch.src),
                    g(s.v, &batch.dst),
                    r(s.e),
                    g(s.u, &batch.edge_graph),
                ];
                self.phi_e.forward_parts(tape, store, &parts, ne, mode)?
            }
            BlockKind::Dgn => {
                let d2 = ops::squared_lengths(tape, s.x, &batch.src, &batch.dst)?;
                let parts = [
                    r(s.e),
                    g(s.v, &batch.dst),
                    g(s.v, &batch.src),
                    r(d2),
                    g(s.u, &batch.edge_graph),
                ];
                self.phi_e.forward_parts(tape, store, &parts, ne, mode)?
            }
            BlockKind::Combined => {
                let d2 = ops::squared_lengths(tape, s.x, &batch.src, &batch.dst)?;
                let parts = [
                    g(s.v, &batch.src),
                    g(s.v, &batch.dst),
                    r(s.e),
                    r(d2),
                    g(s.u, &batch.edge_graph),
                ];
                self.phi_e.forward_parts(tape, store, &parts, ne, mode)?
            }
        };

        let e_at_node = ops::aggregate(tape, e_new, &batch.dst, nn, rho)?;
        let u_at_node = g(s.u, &batch.node_graph);
        let v_parts: Vec<MlpInput> = match (kind, alpha_at_node) {
            (BlockKind::Dgn, _) => vec![r(e_at_node), r(s.v), u_at_node],
            (_, Some(alpha)) => vec![r(s.v), r(e_at_node), r(alpha), u_at_node],
            (_, None) => vec![r(s.v), r(e_at_node), u_at_node],
        };
        let v_new = self.phi_v.forward_parts(tape, store, &v_parts, nn, mode)?;

        let x_new = match &self.phi_x {
            Some(phi_x) => {
                let parts = match self.config.psi {
                    PsiChoice::WeightedNeighbourDifference {
                        inputs: PsiInputs::Edge,
                    } => vec![r(e_new)],
                    _ => vec![
                        r(e_new),
                        g(v_new, &batch.src),
                        g(v_new, &batch.dst),
                        g(s.u, &batch.edge_graph),
                    ],
                };
                let weights = phi_x.forward_parts(tape, store, &parts, ne, mode)?;
                ops::neighbour_difference(tape, s.x, weights, batch)?
            }
            None => s.x,
        };

        let v_total = ops::aggregate(tape, v_new, &batch.node_graph, ng, rho)?;
        let e_total = ops::aggregate(tape, e_new, &batch.edge_graph, ng, rho)?;
        let u_parts = match kind {
            BlockKind::Gn | BlockKind::Combined => vec![r(v_total), r(e_total), r(s.u)],
            BlockKind::Dgn => {
                let d2 = ops::squared_lengths(tape, x_new, &batch.src, &batch.dst)?;
                let d2_total = ops::aggregate(tape, d2, &batch.edge_graph, ng, rho)?;
                vec![r(e_total), r(v_total), r(d2_total), r(s.u)]
            }
            BlockKind::Agn => {
                let alpha = alpha_total.expect("AGN blocks update angles");
                vec![r(v_total), r(e_total), r(alpha), r(s.u)]
            }
        };
        let u_new = self.phi_u.forward_parts(tape, store, &u_parts, ng, mode)?;

        Ok(GraphState {
            v: v_new,
            e: e_new,
            a: a_new,
            u: u_new,
            x: x_new,
        })
    }
}
