//! Edge-aware attention, its time-encoded variant, and the transformer block
//! that wraps it. Everything is row-batched: one call processes every query
//! of a branch at once, with neighborhoods described by a flat connection
//! list.

use super::params::{AttnWeights, BlockWeights};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// One (query, neighbor) pair of an attention call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Connection {
    /// Row of the query matrix.
    pub query: usize,
    /// Row of the key-node matrix.
    pub key: usize,
    /// Row of the edge-key matrix.
    pub edge: usize,
    /// Non-negative time offset fed to the time encoding (ignored without it).
    pub offset: f64,
}

/// Result of a batched attention call. `alpha` has one row per query (its
/// self term) followed by one row per connection; `beta` has one row per
/// connection.
pub struct AttentionOutput<'t> {
    pub out: Var<'t>,
    pub alpha: Var<'t>,
    pub alpha_segment: Vec<usize>,
    pub beta: Option<Var<'t>>,
    pub beta_segment: Vec<usize>,
}

/// Encodes each offset `s` as `sqrt(1/k) [cos(rho_1 s), sin(rho_1 s), ...]`
/// where `k` is the number of frequencies in the `1 x k` row `frequencies`.
pub fn time_encode<'t>(tape: &'t Tape, offsets: &[f64], frequencies: Var<'t>) -> Result<Var<'t>> {
    for &s in offsets {
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("time offset {s}")));
        }
        if s < 0.0 {
            return Err(Error::NegativeTimeOffset(s));
        }
    }
    let [r, k] = frequencies.shape();
    if r != 1 || k == 0 {
        return Err(Error::Shape {
            op: "time_encode",
            lhs: [offsets.len(), 1],
            rhs: [r, k],
        });
    }
    let s = tape.constant(Tensor::column(offsets.to_vec()));
    let phase = s.matmul(frequencies)?;
    let te = phase.cos().interleave_cols(phase.sin())?;
    Ok(te.scale((1.0 / k as f64).sqrt()))
}

fn with_time<'t>(x: Var<'t>, te: Option<Var<'t>>) -> Result<Var<'t>> {
    match te {
        Some(te) => x.tape().concat_cols(&[x, te]),
        None => Ok(x),
    }
}

/// Batched edge-aware attention.
///
/// For query `i` with connections `c` the output is
/// `sum_j alpha_j W_N k_j + sum_c beta_c W_E e_c`, where the `k_j` range over
/// the query's own vector and the key nodes of its connections, and `e_c` are
/// the connection edge keys. `alpha` and `beta` are separate softmaxes of
/// `<W_Q q, W_K k> / sqrt(A)` and `<W_Q q, W_E e> / sqrt(A)`. With
/// `frequencies`, every key is first widened by the time encoding of its
/// offset (zero for the self term).
pub fn attention<'t>(
    w: &AttnWeights<Var<'t>>,
    queries: Var<'t>,
    key_nodes: Var<'t>,
    edge_keys: Var<'t>,
    connections: &[Connection],
    frequencies: Option<Var<'t>>,
) -> Result<AttentionOutput<'t>> {
    let tape = queries.tape();
    let nq = queries.shape()[0];
    let width = w.query.shape()[1];
    let inv_sqrt = 1.0 / (width as f64).sqrt();

    for c in connections {
        if c.query >= nq || c.key >= key_nodes.shape()[0] || c.edge >= edge_keys.shape()[0] {
            return Err(Error::InvalidArgument(format!(
                "attention connection {c:?} out of range for {nq} queries, {} key nodes, {} edge keys",
                key_nodes.shape()[0],
                edge_keys.shape()[0]
            )));
        }
    }

    let q = queries.matmul(w.query)?;
    let self_te = match frequencies {
        Some(f) => Some(time_encode(tape, &vec![0.0; nq], f)?),
        None => None,
    };
    let self_keys = with_time(queries, self_te)?;

    let mut alpha_segment: Vec<usize> = (0..nq).collect();
    let (keys, q_rows) = if connections.is_empty() {
        (self_keys, q)
    } else {
        let key_idx: Vec<usize> = connections.iter().map(|c| c.key).collect();
        let query_idx: Vec<usize> = connections.iter().map(|c| c.query).collect();
        alpha_segment.extend_from_slice(&query_idx);
        let te = match frequencies {
            Some(f) => {
                let offsets: Vec<f64> = connections.iter().map(|c| c.offset).collect();
                Some(time_encode(tape, &offsets, f)?)
            }
            None => None,
        };
        let nbr = with_time(key_nodes.gather_rows(&key_idx)?, te)?;
        let keys = tape.concat_rows(&[self_keys, nbr])?;
        (keys, q.gather_rows(&alpha_segment)?)
    };

    let alpha_logits = q_rows.mul(keys.matmul(w.key)?)?.sum_cols().scale(inv_sqrt);
    let alpha = alpha_logits.segment_softmax(&alpha_segment)?;
    let mut out = keys
        .matmul(w.value_node)?
        .scale_rows(alpha)?
        .segment_sum(&alpha_segment, nq)?;

    let mut beta = None;
    let mut beta_segment = Vec::new();
    if !connections.is_empty() {
        beta_segment = connections.iter().map(|c| c.query).collect();
        let edge_idx: Vec<usize> = connections.iter().map(|c| c.edge).collect();
        let te = match frequencies {
            Some(f) => {
                let offsets: Vec<f64> = connections.iter().map(|c| c.offset).collect();
                Some(time_encode(tape, &offsets, f)?)
            }
            None => None,
        };
        let e = with_time(edge_keys.gather_rows(&edge_idx)?, te)?.matmul(w.value_edge)?;
        let logits = q.gather_rows(&beta_segment)?.mul(e)?.sum_cols().scale(inv_sqrt);
        let b = logits.segment_softmax(&beta_segment)?;
        out = out.add(e.scale_rows(b)?.segment_sum(&beta_segment, nq)?)?;
        beta = Some(b);
    }

    Ok(AttentionOutput {
        out,
        alpha,
        alpha_segment,
        beta,
        beta_segment,
    })
}

fn affine_norm<'t>(x: Var<'t>, scale: Var<'t>, shift: Var<'t>) -> Result<Var<'t>> {
    x.layer_norm().mul_row(scale)?.add_row(shift)
}

/// `h~ = LN(q + ATTN(q, ...))`, output `LN(h~ + FF(h~))` with a two-layer
/// relu feed-forward.
pub fn transformer_block<'t>(
    w: &BlockWeights<Var<'t>>,
    queries: Var<'t>,
    key_nodes: Var<'t>,
    edge_keys: Var<'t>,
    connections: &[Connection],
    frequencies: Option<Var<'t>>,
) -> Result<(Var<'t>, AttentionOutput<'t>)> {
    let attn = attention(&w.attn, queries, key_nodes, edge_keys, connections, frequencies)?;
    let mid = affine_norm(queries.add(attn.out)?, w.norm1_scale, w.norm1_shift)?;
    let ff = mid
        .matmul(w.ff_w1)?
        .add_row(w.ff_b1)?
        .relu()
        .matmul(w.ff_w2)?
        .add_row(w.ff_b2)?;
    let out = affine_norm(mid.add(ff)?, w.norm2_scale, w.norm2_shift)?;
    Ok((out, attn))
}

/// For each `(owner, time)` incidence, the offset of `time` from the minimum
/// time over all incidences of the same owner. Owners with no incidence
/// simply do not appear.
pub fn offsets_from_minimum(owners: &[usize], times: &[f64], owner_count: usize) -> Vec<f64> {
    let mut min = vec![f64::INFINITY; owner_count];
    for (&o, &t) in owners.iter().zip(times) {
        min[o] = min[o].min(t);
    }
    owners.iter().zip(times).map(|(&o, &t)| t - min[o]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_encoding_at_zero() {
        let tape = Tape::new();
        let f = tape.leaf(Tensor::row(vec![0.3, 2.0, 7.0, 1e-4]));
        let te = time_encode(&tape, &[0.0], f).unwrap().value();
        let scale = 0.5;
        assert_eq!(te.data(), &[scale, 0.0, scale, 0.0, scale, 0.0, scale, 0.0]);
    }

    #[test]
    fn time_encoding_closed_form() {
        let tape = Tape::new();
        let f = tape.leaf(Tensor::row(vec![std::f64::consts::FRAC_PI_2]));
        let te = time_encode(&tape, &[1.0], f).unwrap().value();
        assert!(te.data()[0].abs() < 1e-15);
        assert!((te.data()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn time_encoding_rejects_negative_offsets() {
        let tape = Tape::new();
        let f = tape.leaf(Tensor::row(vec![1.0]));
        assert!(matches!(
            time_encode(&tape, &[1.0, -0.5], f),
            Err(Error::NegativeTimeOffset(_))
        ));
    }

    #[test]
    fn offsets_subtract_owner_minimum() {
        let off = offsets_from_minimum(&[0, 0, 0, 1], &[3.0, 5.0, 9.0, 4.0], 3);
        assert_eq!(off, vec![0.0, 2.0, 6.0, 0.0]);
    }
}
