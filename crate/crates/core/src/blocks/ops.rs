use super::config::Aggregation;
use crate::error::{Error, Result};
use crate::geometry::{ACOS_MARGIN, DEGENERACY};
use crate::graph::Batch;
use crate::tensor::{Index, Tape, Tensor, Var};

/// Squared distance between the endpoints of each indexed pair, `rows x 1`.
pub fn squared_lengths(tape: &mut Tape, x: Var, a: &Index, b: &Index) -> Result<Var> {
    let xa = tape.gather(x, a)?;
    let xb = tape.gather(x, b)?;
    let d = tape.sub(xa, xb)?;
    let d2 = tape.square(d);
    Ok(tape.sum_cols(d2))
}

/// Angle at `i` between the rays to `j` and `k` for every indexed triple,
/// `rows x 1`. Fails on a ray shorter than [`DEGENERACY`].
pub fn angles(tape: &mut Tape, x: Var, j: &Index, i: &Index, k: &Index) -> Result<Var> {
    let xi = tape.gather(x, i)?;
    let xj = tape.gather(x, j)?;
    let xk = tape.gather(x, k)?;
    let rj = tape.sub(xj, xi)?;
    let rk = tape.sub(xk, xi)?;
    let sj = tape.square(rj);
    let nj2 = tape.sum_cols(sj);
    let sk = tape.square(rk);
    let nk2 = tape.sum_cols(sk);
    let shortest = tape
        .value(nj2)
        .data()
        .iter()
        .chain(tape.value(nk2).data())
        .enumerate()
        .find(|(_, &v)| v.is_nan() || v.sqrt() <= DEGENERACY);
    if let Some((row, &v)) = shortest {
        let t = row % i.len().max(1);
        return Err(Error::DegenerateGeometry(format!(
            "ray of length {:.3e} in angle ({}, {}, {})",
            v.sqrt(),
            j[t],
            i[t],
            k[t]
        )));
    }
    let p = tape.mul(rj, rk)?;
    let dot = tape.sum_cols(p);
    let n2 = tape.mul(nj2, nk2)?;
    let norm = tape.sqrt(n2);
    let cos = tape.div(dot, norm)?;
    let cos = tape.clamp(cos, -1.0 + ACOS_MARGIN, 1.0 - ACOS_MARGIN);
    Ok(tape.acos(cos))
}

pub fn aggregate(tape: &mut Tape, a: Var, segment: &Index, segments: usize, rho: Aggregation) -> Result<Var> {
    match rho {
        Aggregation::Sum => tape.segment_sum(a, segment, segments),
        Aggregation::Mean => tape.segment_mean(a, segment, segments),
    }
}

/// `x+_i = x_i + sum_j a_ji (x_j - x_i)` over in-edges `(j, i)`.
pub fn neighbour_difference(tape: &mut Tape, x: Var, weights: Var, batch: &Batch) -> Result<Var> {
    let xj = tape.gather(x, &batch.src)?;
    let xi = tape.gather(x, &batch.dst)?;
    let diff = tape.sub(xj, xi)?;
    let moved = tape.mul(diff, weights)?;
    let step = tape.segment_sum(moved, &batch.dst, batch.num_nodes)?;
    tape.add(x, step)
}

/// Per-graph factors `alpha / max edge length`.
pub fn scaling_factors(batch: &Batch, alpha: f64) -> Result<Vec<f64>> {
    let mut longest = vec![0.0f64; batch.num_graphs];
    for e in 0..batch.num_edges() {
        let (a, b) = (batch.src[e], batch.dst[e]);
        let d2 = crate::geometry::squared_distance(batch.coords.row(a), batch.coords.row(b));
        let g = batch.edge_graph[e];
        longest[g] = longest[g].max(d2.sqrt());
    }
    longest
        .iter()
        .enumerate()
        .map(|(g, &l)| {
            if l > DEGENERACY && l.is_finite() {
                Ok(alpha / l)
            } else {
                Err(Error::DegenerateGeometry(format!(
                    "graph {g} has no edge longer than {DEGENERACY:e}; cannot normalise scale"
                )))
            }
        })
        .collect()
}

/// Coordinates rescaled so every graph's longest edge has length `alpha`.
pub fn scale_coords(batch: &Batch, alpha: f64) -> Result<Tensor> {
    let factors = scaling_factors(batch, alpha)?;
    let mut out = batch.coords.clone();
    for r in 0..out.rows() {
        let f = factors[batch.node_graph[r]];
        out.row_mut(r).iter_mut().for_each(|v| *v *= f);
    }
    Ok(out)
}
