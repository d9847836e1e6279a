//! Regular polytope graphs and their transformed train/test splits.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{sample_transform, SamplerConfig, TransformFamily};
use crate::graph::{both_directions, Dataset, DatasetMeta, GraphSample, Label};
use crate::rng::rng_for;
use crate::tensor::Tensor;

/// Golden ratio.
pub const PHI: f64 = 1.618_033_988_749_895;

/// Relative tolerance when collecting minimal-distance pairs.
pub const EDGE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolytopeKind {
    Simplex,
    Hypercube,
    Orthoplex,
    Dodecahedron,
    Icosahedron,
    Cell24,
    Cell120,
    Cell600,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolytopeFamily {
    pub name: PolytopeKind,
    pub dim: usize,
}

impl PolytopeFamily {
    pub fn new(name: PolytopeKind, dim: usize) -> Result<Self> {
        let ok = match name {
            PolytopeKind::Simplex | PolytopeKind::Hypercube | PolytopeKind::Orthoplex => dim >= 2,
            PolytopeKind::Dodecahedron | PolytopeKind::Icosahedron => dim == 3,
            PolytopeKind::Cell24 | PolytopeKind::Cell120 | PolytopeKind::Cell600 => dim == 4,
        };
        if !ok {
            return Err(Error::Config(format!("no regular {name:?} in dimension {dim}")));
        }
        Ok(Self { name, dim })
    }

    pub fn label(&self) -> String {
        let name = serde_json::to_value(self.name).expect("unit variant");
        format!("{}-{}", name.as_str().expect("string"), self.dim)
    }

    /// Vertex coordinates, one row per vertex.
    pub fn vertices(&self) -> Tensor {
        let n = self.dim;
        let rows: Vec<Vec<f64>> = match self.name {
            PolytopeKind::Simplex => simplex(n),
            PolytopeKind::Hypercube => (0..1usize << n)
                .map(|m| (0..n).map(|d| if m >> d & 1 == 1 { 1.0 } else { -1.0 }).collect())
                .collect(),
            PolytopeKind::Orthoplex => (0..n)
                .flat_map(|d| {
                    [1.0, -1.0].map(|s| {
                        let mut v = vec![0.0; n];
                        v[d] = s;
                        v
                    })
                })
                .collect(),
            PolytopeKind::Icosahedron => orbit(&[0.0, 1.0, PHI], Perms::Cyclic),
            PolytopeKind::Dodecahedron => {
                let mut v = orbit(&[1.0, 1.0, 1.0], Perms::Cyclic);
                v.extend(orbit(&[0.0, 1.0 / PHI, PHI], Perms::Cyclic));
                v
            }
            PolytopeKind::Cell24 => orbit(&[1.0, 1.0, 0.0, 0.0], Perms::All),
            PolytopeKind::Cell600 => {
                let mut v = orbit(&[0.5; 4], Perms::All);
                v.extend(orbit(&[1.0, 0.0, 0.0, 0.0], Perms::All));
                v.extend(orbit(&[PHI / 2.0, 0.5, 1.0 / (2.0 * PHI), 0.0], Perms::Even));
                v
            }
            PolytopeKind::Cell120 => {
                let (p, s5) = (PHI, 5f64.sqrt());
                let mut v = Vec::new();
                for base in [
                    [0.0, 0.0, 2.0, 2.0],
                    [1.0, 1.0, 1.0, s5],
                    [p.powi(-2), p, p, p],
                    [1.0 / p, 1.0 / p, 1.0 / p, p * p],
                ] {
                    v.extend(orbit(&base, Perms::All));
                }
                for base in [
                    [0.0, p.powi(-2), 1.0, p * p],
                    [0.0, 1.0 / p, p, s5],
                    [1.0 / p, 1.0, p, 2.0],
                ] {
                    v.extend(orbit(&base, Perms::Even));
                }
                v
            }
        };
        let count = rows.len();
        Tensor::matrix(count, n, rows.into_iter().flatten().collect())
    }

    /// The polytope as a graph: vertices plus both directions of every
    /// minimal-length edge.
    pub fn graph(&self) -> Result<GraphSample> {
        self.graph_with(Normalization::Canonical)
    }

    pub fn graph_with(&self, norm: Normalization) -> Result<GraphSample> {
        let x = norm.apply(self.vertices());
        let edges = edges_by_min_distance(&x)?;
        GraphSample::builder(x, both_directions(&edges)).build()
    }
}

/// Placement of the benchmark graphs before any transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// The constructions as written ({±1}^n hypercube, unit-edge simplex, ...).
    Canonical,
    /// Centred on the origin with every vertex at distance 1. Under the
    /// canonical constructions the cube and the icosahedron share edge length
    /// 2, which a distance-only mean-aggregating model cannot separate.
    #[default]
    UnitCircumradius,
}

impl Normalization {
    pub fn apply(self, mut x: Tensor) -> Tensor {
        if self == Normalization::Canonical || x.rows() == 0 {
            return x;
        }
        let (n, d) = (x.rows(), x.cols());
        let centre: Vec<f64> = (0..d)
            .map(|c| (0..n).map(|r| x.get(r, c)).sum::<f64>() / n as f64)
            .collect();
        for r in 0..n {
            x.row_mut(r).iter_mut().zip(&centre).for_each(|(v, c)| *v -= c);
        }
        let radius = (0..n)
            .map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if radius > 0.0 {
            x.data_mut().iter_mut().for_each(|v| *v /= radius);
        }
        x
    }
}

/// Classes of the benchmark in dimension `dim`, in label order.
pub fn families_for_dim(dim: usize) -> Result<Vec<PolytopeFamily>> {
    use PolytopeKind::*;
    let kinds: &[PolytopeKind] = match dim {
        3 => &[Simplex, Hypercube, Orthoplex, Dodecahedron, Icosahedron],
        4 => &[Simplex, Hypercube, Orthoplex, Cell24, Cell120, Cell600],
        5 => &[Simplex, Hypercube, Orthoplex],
        _ => {
            return Err(Error::Config(format!(
                "benchmark dimension must be 3, 4 or 5, got {dim}"
            )))
        }
    };
    kinds.iter().map(|&k| PolytopeFamily::new(k, dim)).collect()
}

/// Regular simplex with unit edges: the standard basis of `R^{n+1}`
/// expressed in an orthonormal basis of the sum-zero hyperplane.
fn simplex(n: usize) -> Vec<Vec<f64>> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..=n)
        .map(|i| {
            (1..=n)
                .map(|k| {
                    // Helmert vector k: ones on the first k entries, -k at entry k.
                    let norm = ((k * (k + 1)) as f64).sqrt();
                    let c = if i < k {
                        1.0
                    } else if i == k {
                        -(k as f64)
                    } else {
                        0.0
                    };
                    scale * c / norm
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Perms {
    All,
    Even,
    Cyclic,
}

/// All sign choices on the nonzero entries of `base`, under the chosen
/// coordinate permutations, without duplicates.
fn orbit(base: &[f64], perms: Perms) -> Vec<Vec<f64>> {
    let n = base.len();
    let mut perm_list = Vec::new();
    match perms {
        Perms::Cyclic => {
            for s in 0..n {
                perm_list.push((0..n).map(|i| (i + s) % n).collect::<Vec<_>>());
            }
        }
        Perms::All | Perms::Even => {
            let mut p: Vec<usize> = (0..n).collect();
            permutations(&mut p, 0, &mut perm_list);
            if matches!(perms, Perms::Even) {
                perm_list.retain(|p| is_even(p));
            }
        }
    }
    let nonzero: Vec<usize> = (0..n).filter(|&i| base[i] != 0.0).collect();
    let mut seen = BTreeMap::new();
    for p in &perm_list {
        for signs in 0..1usize << nonzero.len() {
            let mut signed = base.to_vec();
            for (b, &i) in nonzero.iter().enumerate() {
                if signs >> b & 1 == 1 {
                    signed[i] = -signed[i];
                }
            }
            let v: Vec<f64> = p.iter().map(|&i| signed[i]).collect();
            let key: Vec<i64> = v.iter().map(|c| (c * 1e9).round() as i64).collect();
            seen.entry(key).or_insert(v);
        }
    }
    seen.into_values().collect()
}

fn permutations(p: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == p.len() {
        out.push(p.clone());
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, out);
        p.swap(k, i);
    }
}

fn is_even(p: &[usize]) -> bool {
    let inversions = (0..p.len())
        .flat_map(|i| (i + 1..p.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| p[i] > p[j])
        .count();
    inversions % 2 == 0
}

/// Undirected pairs `(a, b)`, `a < b`, at minimal pairwise distance.
pub fn edges_by_min_distance(x: &Tensor) -> Result<Vec<(usize, usize)>> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::DegenerateGeometry("need at least two vertices".into()));
    }
    let dist = |a: usize, b: usize| crate::geometry::squared_distance(x.row(a), x.row(b)).sqrt();
    let min = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .map(|(a, b)| dist(a, b))
        .filter(|&d| d > crate::geometry::DEGENERACY)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::DegenerateGeometry("all vertices coincide".into()));
    }
    Ok((0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| ((dist(a, b) - min) / min).abs() <= EDGE_TOLERANCE)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeDatasetConfig {
    pub dim: usize,
    pub family: TransformFamily,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_copies")]
    pub copies_per_class: usize,
    #[serde(default)]
    pub seed: u64,
    /// Attach one random scalar feature per node (shared by all copies of a
    /// class) instead of leaving nodes featureless.
    #[serde(default)]
    pub node_features: bool,
    #[serde(default)]
    pub normalization: Normalization,
}

fn default_copies() -> usize {
    20
}

impl PolytopeDatasetConfig {
    pub fn new(dim: usize, family: TransformFamily, seed: u64) -> Self {
        Self {
            dim,
            family,
            sampler: SamplerConfig::default(),
            copies_per_class: default_copies(),
            seed,
            node_features: false,
            normalization: Normalization::default(),
        }
    }
}

/// One untransformed, labelled graph per class.
pub fn base_graphs(cfg: &PolytopeDatasetConfig) -> Result<Vec<GraphSample>> {
    families_for_dim(cfg.dim)?
        .iter()
        .enumerate()
        .map(|(c, f)| {
            let g = f.graph_with(cfg.normalization)?.with_label(Some(Label::Class(c)));
            if cfg.node_features {
                let mut rng = rng_for(cfg.seed, &format!("node-features/{}", f.label()));
                let feats = (0..g.num_nodes()).map(|_| rng.gen::<f64>()).collect();
                g.with_node_features(Tensor::matrix(g.num_nodes(), 1, feats))
            } else {
                Ok(g)
            }
        })
        .collect()
}

fn transformed_copies(
    bases: &[GraphSample],
    cfg: &PolytopeDatasetConfig,
    copies: usize,
    purpose: &str,
) -> Result<Vec<GraphSample>> {
    let mut out = Vec::with_capacity(bases.len() * copies);
    for (c, g) in bases.iter().enumerate() {
        for k in 0..copies {
            let mut rng = rng_for(cfg.seed, &format!("{purpose}/{c}/{k}"));
            let t = sample_transform(cfg.family, cfg.dim, &cfg.sampler, &mut rng)?;
            out.push(t.apply_to(g)?);
        }
    }
    Ok(out)
}

fn meta(cfg: &PolytopeDatasetConfig, sample: &GraphSample, classes: usize, split: &str, extra: usize) -> DatasetMeta {
    let mut details = BTreeMap::new();
    details.insert("split".into(), json!(split));
    details.insert("dim".into(), json!(cfg.dim));
    details.insert(
        "transform".into(),
        serde_json::to_value(cfg.family).expect("serialisable"),
    );
    details.insert(
        "gamma_range".into(),
        json!([cfg.sampler.gamma_range.0, cfg.sampler.gamma_range.1]),
    );
    details.insert("translation".into(), json!(cfg.sampler.translation));
    details.insert("dilate_non_orthogonal".into(), json!(cfg.sampler.dilate_non_orthogonal));
    details.insert("seed".into(), json!(cfg.seed));
    details.insert("copies_per_class".into(), json!(extra));
    details.insert("node_features".into(), json!(cfg.node_features));
    details.insert(
        "normalization".into(),
        serde_json::to_value(cfg.normalization).expect("serialisable"),
    );
    DatasetMeta {
        dims: sample.dims(),
        num_classes: classes,
        provenance: "regular polytope benchmark".into(),
        details,
    }
}

/// Train split (one untransformed graph per class) and test split
/// (`copies_per_class` transformed graphs per class).
pub fn make_dataset(cfg: &PolytopeDatasetConfig) -> Result<(Dataset, Dataset)> {
    let bases = base_graphs(cfg)?;
    let test = transformed_copies(&bases, cfg, cfg.copies_per_class, "test")?;
    let classes = bases.len();
    let train_meta = meta(cfg, &bases[0], classes, "train", 0);
    let test_meta = meta(cfg, &bases[0], classes, "test", cfg.copies_per_class);
    Ok((Dataset::new(bases, train_meta)?, Dataset::new(test, test_meta)?))
}

/// Train split with `k` extra transformed copies per class, ordered class by
/// class with the untransformed graph first.
pub fn make_augmented_trainset(cfg: &PolytopeDatasetConfig, k: usize) -> Result<Dataset> {
    let bases = base_graphs(cfg)?;
    let extra = transformed_copies(&bases, cfg, k, "augment")?;
    let classes = bases.len();
    let m = meta(cfg, &bases[0], classes, "train", k);
    let mut samples = Vec::with_capacity(classes * (k + 1));
    for (c, base) in bases.into_iter().enumerate() {
        samples.push(base);
        samples.extend(extra[c * k..(c + 1) * k].iter().cloned());
    }
    Dataset::new(samples, m)
}
