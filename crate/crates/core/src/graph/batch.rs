use super::{FeatureDims, GraphSample};
use crate::error::{Error, Result};
use crate::tensor::{Index, Tensor};

/// Disjoint union of several samples, with global row indices for edges and
/// angles and per-row graph membership for pooling.
#[derive(Clone, Debug)]
pub struct Batch {
    pub dims: FeatureDims,
    pub num_graphs: usize,
    pub num_nodes: usize,
    pub node_features: Tensor,
    pub coords: Tensor,
    pub edge_features: Tensor,
    pub angle_features: Tensor,
    /// `num_graphs x n_u`.
    pub global: Tensor,
    pub src: Index,
    pub dst: Index,
    pub angle_j: Index,
    pub angle_i: Index,
    pub angle_k: Index,
    pub node_graph: Index,
    pub edge_graph: Index,
    pub angle_graph: Index,
    /// Class label per graph, when every sample has one.
    pub labels: Option<Vec<usize>>,
}

impl Batch {
    pub fn new(samples: &[&GraphSample]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Contract("empty batch".into()));
        };
        let dims = first.dims();
        if let Some(bad) = samples.iter().position(|s| s.dims() != dims) {
            return Err(Error::Shape(format!(
                "sample {bad} has widths {:?}, batch has {dims:?}",
                samples[bad].dims()
            )));
        }
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let (mut aj, mut ai, mut ak) = (Vec::new(), Vec::new(), Vec::new());
        let (mut node_graph, mut edge_graph, mut angle_graph) = (Vec::new(), Vec::new(), Vec::new());
        let mut global = Vec::with_capacity(samples.len() * dims.n_u);
        let mut offset = 0;
        for (g, s) in samples.iter().enumerate() {
            for &(a, b) in s.edges() {
                src.push(a + offset);
                dst.push(b + offset);
                edge_graph.push(g);
            }
            for &[j, i, k] in s.angles() {
                aj.push(j + offset);
                ai.push(i + offset);
                ak.push(k + offset);
                angle_graph.push(g);
            }
            node_graph.extend(std::iter::repeat_n(g, s.num_nodes()));
            global.extend_from_slice(s.global());
            offset += s.num_nodes();
        }
        let labels = samples
            .iter()
            .map(|s| s.label().and_then(|l| l.class()))
            .collect::<Option<Vec<_>>>();
        let stack = |f: fn(&GraphSample) -> &Tensor| Tensor::vstack(&samples.iter().map(|s| f(s)).collect::<Vec<_>>());
        Ok(Self {
            dims,
            num_graphs: samples.len(),
            num_nodes: offset,
            node_features: stack(GraphSample::node_features)?,
            coords: stack(GraphSample::coords)?,
            edge_features: stack(GraphSample::edge_features)?,
            angle_features: stack(GraphSample::angle_features)?,
            global: Tensor::matrix(samples.len(), dims.n_u, global),
            src: src.into(),
            dst: dst.into(),
            angle_j: aj.into(),
            angle_i: ai.into(),
            angle_k: ak.into(),
            node_graph: node_graph.into(),
            edge_graph: edge_graph.into(),
            angle_graph: angle_graph.into(),
            labels,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn num_angles(&self) -> usize {
        self.angle_i.len()
    }
}
