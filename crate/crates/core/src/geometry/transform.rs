use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{undirected_neighbours, GraphSample};
use crate::rng::{rng_for, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TransformFamily {
    Orthogonal,
    OrthogonalDilation,
    NonOrthogonal { mu: f64 },
    Local,
}

/// `x -> gamma * A x + q`, optionally restricted to the masked nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub family: TransformFamily,
    /// Row-major `n x n`.
    pub linear: Vec<f64>,
    pub shift: Vec<f64>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Dilation range, used by the dilation and non-orthogonal families.
    pub gamma_range: (f64, f64),
    /// Translations are uniform in `[-t, t]^n`.
    pub translation: f64,
    /// Draw a dilation for non-orthogonal transforms too.
    pub dilate_non_orthogonal: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            gamma_range: (0.5, 2.0),
            translation: 5.0,
            dilate_non_orthogonal: true,
        }
    }
}

impl TransformSpec {
    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn identity(n: usize) -> Self {
        Self::from_linear(TransformFamily::Orthogonal, &DMatrix::identity(n, n), vec![0.0; n], 1.0)
    }

    pub fn from_linear(family: TransformFamily, a: &DMatrix<f64>, shift: Vec<f64>, gamma: f64) -> Self {
        let n = a.nrows();
        let linear = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .map(|(r, c)| a[(r, c)])
            .collect();
        Self {
            family,
            linear,
            shift,
            gamma,
            mask: None,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.linear)
    }

    /// Maps one point.
    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|r| {
                let ax: f64 = (0..n).map(|c| self.linear[r * n + c] * x[c]).sum();
                self.gamma * ax + self.shift[r]
            })
            .collect()
    }

    /// Transforms the masked rows of `coords` (all rows when unmasked).
    pub fn apply(&self, coords: &Tensor) -> Result<Tensor> {
        if coords.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "transform of dimension {} applied to {}-dimensional coordinates",
                self.dim(),
                coords.cols()
            )));
        }
        let mut out = coords.clone();
        let rows: Vec<usize> = match &self.mask {
            Some(m) => m.clone(),
            None => (0..coords.rows()).collect(),
        };
        for r in rows {
            if r >= coords.rows() {
                return Err(Error::Shape(format!("mask row {r} beyond {} nodes", coords.rows())));
            }
            let y = self.apply_point(coords.row(r));
            out.row_mut(r).copy_from_slice(&y);
        }
        Ok(out)
    }

    pub fn apply_to(&self, g: &GraphSample) -> Result<GraphSample> {
        g.with_coords(self.apply(g.coords())?)
    }

    /// `||A^T A - I||_F` of the linear part.
    pub fn deviation(&self) -> f64 {
        frobenius_deviation(&self.matrix())
    }
}

pub fn frobenius_deviation(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    (a.transpose() * a - DMatrix::<f64>::identity(n, n)).norm()
}

fn normal_matrix(n: usize, m: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal moved into Q. Both determinant signs occur.
pub fn sample_orthogonal(n: usize, rng: &mut Rng) -> DMatrix<f64> {
    let qr = normal_matrix(n, n, rng).qr();
    let (mut q, r) = qr.unpack();
    for c in 0..n {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

const CALIBRATION_DRAWS: usize = 10_000;

/// Perturbation scale `eps` such that `A = Q (I + eps M)`, with `M` standard
/// normal, has mean `||A^T A - I||_F` equal to `mu`. Bisection over
/// `[0, 10]` against a fixed 10^4-draw Monte-Carlo estimate; cached per
/// `(n, mu)`.
pub fn calibrated_epsilon(n: usize, mu: f64) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Config(format!("non-orthogonality level {mu} must be >= 0")));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&eps) = cache.lock().expect("calibration cache").get(&(n, mu.to_bits())) {
        return Ok(eps);
    }

    // ||eps S + eps^2 P||_F with S = M + M^T, P = M^T M, expanded so each
    // bisection step is O(draws).
    let mut rng = rng_for(n as u64, "nonorthogonal-calibration");
    let terms: Vec<(f64, f64, f64)> = (0..CALIBRATION_DRAWS)
        .map(|_| {
            let m = normal_matrix(n, n, &mut rng);
            let s = &m + m.transpose();
            let p = m.transpose() * &m;
            (s.norm_squared(), s.dot(&p), p.norm_squared())
        })
        .collect();
    let mean_dev = |eps: f64| {
        terms
            .iter()
            .map(|&(ss, sp, pp)| {
                (eps * eps * ss + 2.0 * eps.powi(3) * sp + eps.powi(4) * pp)
                    .max(0.0)
                    .sqrt()
            })
            .sum::<f64>()
            / CALIBRATION_DRAWS as f64
    };
    let (mut lo, mut hi) = (0.0, 10.0);
    if mean_dev(hi) < mu {
        return Err(Error::Config(format!(
            "cannot reach mean deviation {mu} in dimension {n} with eps <= 10"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_dev(mid) < mu {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let eps = 0.5 * (lo + hi);
    cache.lock().expect("calibration cache").insert((n, mu.to_bits()), eps);
    Ok(eps)
}

fn uniform_gamma(range: (f64, f64), rng: &mut Rng) -> Result<f64> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Config(format!("invalid dilation range [{lo}, {hi}]")));
    }
    Ok(if hi == lo { lo } else { rng.gen_range(lo..=hi) })
}

/// Samples a global transform of the given family. Local transforms need a
/// graph; use [`sample_local_transform`].
pub fn sample_transform(
    family: TransformFamily,
    n: usize,
    config: &SamplerConfig,
    rng: &mut Rng,
) -> Result<TransformSpec> {
    if n == 0 {
        return Err(Error::Config("transform dimension must be >= 1".into()));
    }
    let q = sample_orthogonal(n, rng);
    let t = config.translation;
    let shift = |rng: &mut Rng| -> Vec<f64> {
        (0..n)
            .map(|_| if t > 0.0 { rng.gen_range(-t..=t) } else { 0.0 })
            .collect()
    };
    match family {
        TransformFamily::Orthogonal => {
            let s = shift(rng);
            Ok(TransformSpec::from_linear(family, &q, s, 1.0))
        }
        TransformFamily::OrthogonalDilation => {
            let s = shift(rng);
            let gamma = uniform_gamma(config.gamma_range, rng)?;
            Ok(TransformSpec::from_linear(family, &q, s, gamma))
        }
        TransformFamily::NonOrthogonal { mu } => {
            let eps = calibrated_epsilon(n, mu)?;
            let m = normal_matrix(n, n, rng);
            let a = &q * (DMatrix::identity(n, n) + m * eps);
            let s = shift(rng);
            let gamma = if config.dilate_non_orthogonal {
                uniform_gamma(config.gamma_range, rng)?
            } else {
                1.0
            };
            Ok(TransformSpec::from_linear(family, &a, s, gamma))
        }
        TransformFamily::Local => Err(Error::Config(
            "local transforms are sampled from a graph (sample_local_transform)".into(),
        )),
    }
}

/// Undirected edges `(c, d)` whose removal disconnects `c` from `d`, with
/// the node set on `d`'s side.
pub fn bridge_edges(g: &GraphSample) -> Vec<((usize, usize), Vec<usize>)> {
    let n = g.num_nodes();
    let nbrs = undirected_neighbours(g.edges(), n);
    let mut out = Vec::new();
    for c in 0..n {
        for &d in &nbrs[c] {
            // flood from d without crossing (c, d)
            let mut seen = vec![false; n];
            let mut stack = vec![d];
            seen[d] = true;
            while let Some(v) = stack.pop() {
                for &w in &nbrs[v] {
                    if (v == d && w == c) || (v == c && w == d) || seen[w] {
                        continue;
                    }
                    seen[w] = true;
                    stack.push(w);
                }
            }
            if !seen[c] {
                out.push(((c, d), (0..n).filter(|&v| seen[v]).collect()));
            }
        }
    }
    out
}

/// Orthogonal map fixing the line through `anchor` along `axis`, applied to
/// the `mask` nodes only: `x -> Q (x - anchor) + anchor`, where `Q` fixes
/// `axis` and is Haar-random on its orthogonal complement.
pub fn local_rotation(axis: &[f64], anchor: &[f64], mask: Vec<usize>, rng: &mut Rng) -> Result<TransformSpec> {
    let n = axis.len();
    let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= super::DEGENERACY {
        return Err(Error::DegenerateGeometry("rotation axis has zero length".into()));
    }
    if mask.is_empty() {
        return Err(Error::Config("local transform needs a nonempty mask".into()));
    }
    let mut basis = normal_matrix(n, n, rng);
    for r in 0..n {
        basis[(r, 0)] = axis[r] / norm;
    }
    let p = basis.qr().q();
    let mut inner = DMatrix::<f64>::identity(n, n);
    if n > 1 {
        let r = sample_orthogonal(n - 1, rng);
        inner.view_mut((1, 1), (n - 1, n - 1)).copy_from(&r);
    }
    let q = &p * inner * p.transpose();
    let anchor_v = nalgebra::DVector::from_column_slice(anchor);
    let shift = &anchor_v - &q * &anchor_v;
    let mut spec = TransformSpec::from_linear(TransformFamily::Local, &q, shift.iter().copied().collect(), 1.0);
    spec.mask = Some(mask);
    Ok(spec)
}

/// Rotates the far side of a random bridge edge about the bridge. All edge
/// lengths and all angles of the graph are preserved. Errors when the graph
/// has no bridge.
pub fn sample_local_transform(g: &GraphSample, rng: &mut Rng) -> Result<TransformSpec> {
    let bridges = bridge_edges(g);
    if bridges.is_empty() {
        return Err(Error::Config("graph has no bridge edge to rotate about".into()));
    }
    let ((c, d), side) = bridges[rng.gen_range(0..bridges.len())].clone();
    let (xc, xd) = (g.coords().row(c), g.coords().row(d));
    let axis: Vec<f64> = xd.iter().zip(xc).map(|(a, b)| a - b).collect();
    local_rotation(&axis, xd, side, rng)
}

/// A local transform is valid for a graph when its linear part is
/// orthogonal, it does not dilate, and every edge crossing the mask
/// boundary has both endpoints fixed by the map.
pub fn validate_local(spec: &TransformSpec, g: &GraphSample) -> Result<()> {
    let Some(mask) = &spec.mask else {
        return Err(Error::Contract("local transform without a mask".into()));
    };
    if mask.is_empty() {
        return Err(Error::Contract("local transform with an empty mask".into()));
    }
    if spec.deviation() >= 1e-10 || (spec.gamma - 1.0).abs() > 1e-12 {
        return Err(Error::Contract("local transform must be an isometry".into()));
    }
    let inside: std::collections::HashSet<_> = mask.iter().copied().collect();
    for &(s, d) in g.edges() {
        if inside.contains(&s) == inside.contains(&d) {
            continue;
        }
        for v in [s, d] {
            let x = g.coords().row(v);
            let y = spec.apply_point(x);
            let moved = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = x.iter().map(|a| a.abs()).fold(1.0, f64::max);
            if moved > 1e-9 * scale {
                return Err(Error::Contract(format!(
                    "boundary edge ({s},{d}) is not fixed by the local transform"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angle, squared_distance};
    use crate::graph::both_directions;

    #[test]
    fn one_dimensional_orthogonal_is_sign() {
        let mut rng = rng_for(0, "t");
        for _ in 0..20 {
            let q = sample_orthogonal(1, &mut rng);
            assert!((q[(0, 0)].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_orthogonal_is_orthogonal_and_both_signs_occur() {
        let mut rng = rng_for(1, "t");
        let (mut pos, mut neg) = (0, 0);
        for _ in 0..1000 {
            let q = sample_orthogonal(3, &mut rng);
            assert!(frobenius_deviation(&q) < 1e-10);
            if q.determinant() > 0.0 {
                pos += 1
            } else {
                neg += 1
            }
        }
        assert!(pos > 0 && neg > 0, "{pos} {neg}");
    }

    #[test]
    fn mu_zero_is_orthogonal() {
        let mut rng = rng_for(2, "t");
        let s = sample_transform(
            TransformFamily::NonOrthogonal { mu: 0.0 },
            3,
            &SamplerConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(s.deviation() < 1e-10);
    }

    #[test]
    fn negative_mu_rejected() {
        assert!(calibrated_epsilon(3, -1.0).is_err());
    }

    #[test]
    fn degenerate_gamma_range_is_orthogonal() {
        let mut rng = rng_for(3, "t");
        let cfg = SamplerConfig {
            gamma_range: (1.0, 1.0),
            ..SamplerConfig::default()
        };
        let s = sample_transform(TransformFamily::OrthogonalDilation, 3, &cfg, &mut rng).unwrap();
        assert_eq!(s.gamma, 1.0);
        assert!(s.deviation() < 1e-10);
    }

    #[test]
    fn identity_and_translation() {
        let x = Tensor::matrix(3, 2, vec![0.0, 1.0, 2.0, -1.0, 0.5, 0.5]);
        assert_eq!(TransformSpec::identity(2).apply(&x).unwrap(), x);
        let mut t = TransformSpec::identity(2);
        t.shift = vec![3.0, -4.0];
        let y = t.apply(&x).unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let d0 = squared_distance(x.row(a), x.row(b));
            let d1 = squared_distance(y.row(a), y.row(b));
            assert!((d0 - d1).abs() < 1e-12);
        }
        assert!(t.apply(&Tensor::zeros(vec![2, 3])).is_err());
    }

    /// Two triangles joined by one edge (2 -> 3).
    fn two_triangles(rng: &mut Rng) -> GraphSample {
        let coords: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pairs = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)];
        GraphSample::builder(Tensor::matrix(6, 3, coords), both_directions(&pairs))
            .build()
            .unwrap()
    }

    #[test]
    fn bond_rotation_preserves_all_lengths_and_angles() {
        let mut rng = rng_for(4, "t");
        for _ in 0..20 {
            let g = two_triangles(&mut rng);
            let bridges = bridge_edges(&g);
            assert_eq!(bridges.len(), 2, "the joining edge in both orientations");
            let spec = sample_local_transform(&g, &mut rng).unwrap();
            validate_local(&spec, &g).unwrap();
            let h = spec.apply_to(&g).unwrap();
            assert!(h.coords().max_abs_diff(g.coords()) > 1e-3, "something moved");
            for &(s, d) in g.edges() {
                let a = squared_distance(g.coords().row(s), g.coords().row(d));
                let b = squared_distance(h.coords().row(s), h.coords().row(d));
                assert!((a - b).abs() < 1e-10);
            }
            for &[j, i, k] in g.angles() {
                let x = g.coords();
                let y = h.coords();
                let a = angle(x.row(j), x.row(i), x.row(k)).unwrap();
                let b = angle(y.row(j), y.row(i), y.row(k)).unwrap();
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn local_transform_moving_boundary_is_invalid() {
        let mut rng = rng_for(5, "t");
        let g = two_triangles(&mut rng);
        let mut spec = TransformSpec::from_linear(
            TransformFamily::Local,
            &sample_orthogonal(3, &mut rng),
            vec![1.0, 0.0, 0.0],
            1.0,
        );
        spec.mask = Some(vec![3, 4, 5]);
        assert!(validate_local(&spec, &g).is_err());
        assert!(sample_local_transform(
            &GraphSample::builder(Tensor::zeros(vec![3, 2]), both_directions(&[(0, 1), (1, 2), (2, 0)]))
                .build()
                .unwrap(),
            &mut rng
        )
        .is_err());
    }
}
