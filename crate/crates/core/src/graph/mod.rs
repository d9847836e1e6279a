//! Attributed graphs with node coordinates and angle triples.

mod batch;
mod dataset;
mod io;

pub use batch::Batch;
pub use dataset::{Dataset, DatasetMeta};
pub use io::{read_graph_json, write_graph_json};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An ordered angle `(j, i, k)` with vertex `i`.
pub type AngleTriple = [usize; 3];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Edges(Vec<usize>),
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Edges(_) => None,
        }
    }
}

/// One attributed graph. Missing attribute families are zero-width
/// matrices. Immutable once built; transforms produce new samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSample {
    node_features: Tensor,
    coords: Tensor,
    edges: Vec<(usize, usize)>,
    edge_features: Tensor,
    angles: Vec<AngleTriple>,
    angle_features: Tensor,
    global: Vec<f64>,
    label: Option<Label>,
}

/// How the angle set of a new sample is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum Angles {
    /// Run [`build_angle_set`] on the edges.
    Auto,
    Explicit(Vec<AngleTriple>),
}

#[derive(Clone, Debug)]
pub struct GraphBuilder {
    coords: Tensor,
    edges: Vec<(usize, usize)>,
    node_features: Option<Tensor>,
    edge_features: Option<Tensor>,
    angles: Angles,
    angle_features: Option<Tensor>,
    global: Vec<f64>,
    label: Option<Label>,
}

impl GraphBuilder {
    pub fn node_features(mut self, f: Tensor) -> Self {
        self.node_features = Some(f);
        self
    }

    pub fn edge_features(mut self, f: Tensor) -> Self {
        self.edge_features = Some(f);
        self
    }

    pub fn angles(mut self, angles: Angles) -> Self {
        self.angles = angles;
        self
    }

    pub fn angle_features(mut self, f: Tensor) -> Self {
        self.angle_features = Some(f);
        self
    }

    pub fn global(mut self, u: Vec<f64>) -> Self {
        self.global = u;
        self
    }

    pub fn label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn build(self) -> Result<GraphSample> {
        let n = self.coords.rows();
        check_edges(&self.edges, n)?;
        let angles = match self.angles {
            Angles::Auto => build_angle_set(&self.edges, n),
            Angles::Explicit(a) => a,
        };
        let g = GraphSample {
            node_features: self.node_features.unwrap_or_else(|| Tensor::zeros(vec![n, 0])),
            edge_features: self
                .edge_features
                .unwrap_or_else(|| Tensor::zeros(vec![self.edges.len(), 0])),
            angle_features: self
                .angle_features
                .unwrap_or_else(|| Tensor::zeros(vec![angles.len(), 0])),
            coords: self.coords,
            edges: self.edges,
            angles,
            global: self.global,
            label: self.label,
        };
        g.validate()?;
        Ok(g)
    }
}

impl GraphSample {
    /// Starts a sample from an `N x n_x` coordinate matrix and directed
    /// `(src, dst)` edges. Angles default to [`Angles::Auto`].
    pub fn builder(coords: Tensor, edges: Vec<(usize, usize)>) -> GraphBuilder {
        GraphBuilder {
            coords,
            edges,
            node_features: None,
            edge_features: None,
            angles: Angles::Auto,
            angle_features: None,
            global: Vec::new(),
            label: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.coords.rows();
        if self.node_features.rows() != n {
            return Err(Error::Shape(format!(
                "{} node feature rows for {n} nodes",
                self.node_features.rows()
            )));
        }
        check_edges(&self.edges, n)?;
        if self.edge_features.rows() != self.edges.len() {
            return Err(Error::Shape(format!(
                "{} edge feature rows for {} edges",
                self.edge_features.rows(),
                self.edges.len()
            )));
        }
        if self.angle_features.rows() != self.angles.len() {
            return Err(Error::Shape(format!(
                "{} angle feature rows for {} angles",
                self.angle_features.rows(),
                self.angles.len()
            )));
        }
        let nbrs = undirected_neighbours(&self.edges, n);
        let mut seen = std::collections::HashSet::with_capacity(self.angles.len());
        for (a, &[j, i, k]) in self.angles.iter().enumerate() {
            if i >= n || j >= n || k >= n {
                return Err(Error::Contract(format!("angle {a} ({j},{i},{k}) out of range")));
            }
            if j == k || nbrs[i].binary_search(&j).is_err() || nbrs[i].binary_search(&k).is_err() {
                return Err(Error::Contract(format!(
                    "angle {a} ({j},{i},{k}) is not formed by two distinct neighbours of {i}"
                )));
            }
            seen.insert([j, i, k]);
        }
        if let Some(&[j, i, k]) = self.angles.iter().find(|&&[j, i, k]| !seen.contains(&[k, i, j])) {
            return Err(Error::Contract(format!(
                "angle set has ({j},{i},{k}) but not its reverse ({k},{i},{j})"
            )));
        }
        if let Some(Label::Edges(l)) = &self.label {
            if l.len() != self.edges.len() {
                return Err(Error::Shape(format!(
                    "{} edge labels for {} edges",
                    l.len(),
                    self.edges.len()
                )));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_features(&self) -> &Tensor {
        &self.edge_features
    }

    pub fn angles(&self) -> &[AngleTriple] {
        &self.angles
    }

    pub fn angle_features(&self) -> &Tensor {
        &self.angle_features
    }

    pub fn global(&self) -> &[f64] {
        &self.global
    }

    pub fn label(&self) -> Option<&Label> {
        self.label.as_ref()
    }

    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            n_v: self.node_features.cols(),
            n_e: self.edge_features.cols(),
            n_x: self.coords.cols(),
            n_alpha: self.angle_features.cols(),
            n_u: self.global.len(),
        }
    }

    /// Same graph with new coordinates of identical shape.
    pub fn with_coords(&self, coords: Tensor) -> Result<GraphSample> {
        if coords.shape() != self.coords.shape() {
            return Err(Error::Shape(format!(
                "replacement coordinates {:?} vs {:?}",
                coords.shape(),
                self.coords.shape()
            )));
        }
        Ok(GraphSample { coords, ..self.clone() })
    }

    pub fn with_node_features(&self, features: Tensor) -> Result<GraphSample> {
        let g = GraphSample {
            node_features: features,
            ..self.clone()
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_label(&self, label: Option<Label>) -> GraphSample {
        GraphSample { label, ..self.clone() }
    }

    /// Relabels node `v` as `perm[v]`, moving node rows, coordinates, edge
    /// endpoints and angle triples consistently. Edge and angle order is kept.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<GraphSample> {
        let n = self.num_nodes();
        let mut hit = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut hit[p], true)) {
            return Err(Error::Contract(format!("not a permutation of 0..{n}")));
        }
        let mut inverse = vec![0; n];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        Ok(GraphSample {
            node_features: self.node_features.select_rows(&inverse),
            coords: self.coords.select_rows(&inverse),
            edges: self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect(),
            edge_features: self.edge_features.clone(),
            angles: self
                .angles
                .iter()
                .map(|&[j, i, k]| [perm[j], perm[i], perm[k]])
                .collect(),
            angle_features: self.angle_features.clone(),
            global: self.global.clone(),
            label: self.label.clone(),
        })
    }
}

/// Widths of each attribute family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub n_v: usize,
    pub n_e: usize,
    pub n_x: usize,
    pub n_alpha: usize,
    pub n_u: usize,
}

fn check_edges(edges: &[(usize, usize)], n: usize) -> Result<()> {
    for (e, &(s, d)) in edges.iter().enumerate() {
        if s >= n || d >= n {
            return Err(Error::Contract(format!(
                "edge {e} ({s}->{d}) out of range for {n} nodes"
            )));
        }
        if s == d {
            return Err(Error::Contract(format!("edge {e} is a self-loop on node {s}")));
        }
    }
    Ok(())
}

/// Sorted, deduplicated in- and out-neighbours of every node.
pub fn undirected_neighbours(edges: &[(usize, usize)], n: usize) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); n];
    for &(s, d) in edges {
        nbrs[d].push(s);
        nbrs[s].push(d);
    }
    for list in &mut nbrs {
        list.sort_unstable();
        list.dedup();
    }
    nbrs
}

/// All ordered triples `(j, i, k)` with `j != k` drawn from the undirected
/// neighbourhood of `i`, sorted by `i`, then `j`, then `k`. Both orders of
/// every geometric angle are present.
pub fn build_angle_set(edges: &[(usize, usize)], n: usize) -> Vec<AngleTriple> {
    let nbrs = undirected_neighbours(edges, n);
    let mut out = Vec::new();
    for (i, list) in nbrs.iter().enumerate() {
        for &j in list {
            for &k in list {
                if j != k {
                    out.push([j, i, k]);
                }
            }
        }
    }
    out
}

/// Angles grouped by vertex: `i -> [(j, k), ...]` in input order.
pub fn per_vertex_angle_index(angles: &[AngleTriple]) -> BTreeMap<usize, Vec<(usize, usize)>> {
    let mut map: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for &[j, i, k] in angles {
        map.entry(i).or_default().push((j, k));
    }
    map
}

/// Stores each undirected pair as both directed edges.
pub fn both_directions(pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect()
}
