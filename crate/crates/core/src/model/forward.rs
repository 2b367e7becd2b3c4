//! The GRANDE forward pass over a [`GraphInput`].

use super::attention::{attention, offsets_from_minimum, transformer_block, AttentionOutput, Connection};
use super::config::ModelConfig;
use super::input::GraphInput;
use super::params::{AttnWeights, BranchWeights, CrossWeights, LayerWeights, Layout};
use crate::error::Result;
use crate::numerics::{Tape, Var};

/// Neighborhood structure shared by every layer.
#[derive(Clone, Debug, Default)]
pub struct Neighborhoods {
    pub node_in: Vec<Connection>,
    pub node_out: Vec<Connection>,
    pub dual_in: Vec<Connection>,
    pub dual_out: Vec<Connection>,
    pub in_lists: Vec<Vec<usize>>,
    pub out_lists: Vec<Vec<usize>>,
}

impl Neighborhoods {
    pub fn new(input: &GraphInput, cfg: &ModelConfig) -> Self {
        let n = input.node_count;
        let m = input.edge_count();
        let mut in_lists = vec![Vec::new(); n];
        let mut out_lists = vec![Vec::new(); n];
        for e in 0..m {
            out_lists[input.tails[e]].push(e);
            in_lists[input.heads[e]].push(e);
        }

        // Node offsets: edge time minus the earliest edge touching the node,
        // in either direction.
        let owners: Vec<usize> = input.heads.iter().chain(&input.tails).copied().collect();
        let times: Vec<f64> = input.times.iter().chain(&input.times).copied().collect();
        let off = offsets_from_minimum(&owners, &times, n);
        let (in_off, out_off) = off.split_at(m);

        let node_in = (0..m)
            .map(|e| Connection {
                query: input.heads[e],
                key: input.tails[e],
                edge: e,
                offset: in_off[e],
            })
            .collect();
        let node_out = if cfg.use_out_branch {
            (0..m)
                .map(|e| Connection {
                    query: input.tails[e],
                    key: input.heads[e],
                    edge: e,
                    offset: out_off[e],
                })
                .collect()
        } else {
            Vec::new()
        };

        // Dual offsets: in the dual, edges act as nodes with their own
        // timestamps; each neighbor is measured from the earliest edge in
        // the closed dual neighborhood.
        let mut min = input.times.clone();
        for d in &input.duals {
            min[d.to] = min[d.to].min(input.times[d.from]);
            min[d.from] = min[d.from].min(input.times[d.to]);
        }
        let (dual_in, dual_out) = if cfg.use_dual {
            let dual_in = input
                .duals
                .iter()
                .enumerate()
                .map(|(i, d)| Connection {
                    query: d.to,
                    key: d.from,
                    edge: i,
                    offset: input.times[d.from] - min[d.to],
                })
                .collect();
            let dual_out = input
                .duals
                .iter()
                .enumerate()
                .map(|(i, d)| Connection {
                    query: d.from,
                    key: d.to,
                    edge: i,
                    offset: input.times[d.to] - min[d.from],
                })
                .collect();
            (dual_in, dual_out)
        } else {
            (Vec::new(), Vec::new())
        };

        Self {
            node_in,
            node_out,
            dual_in,
            dual_out,
            in_lists,
            out_lists,
        }
    }
}

/// Node and edge representations after the message-passing layers.
pub struct Encoded<'t> {
    pub h: Var<'t>,
    pub g: Var<'t>,
}

/// Attention weights of one attention call, kept for inspection.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub alpha: Vec<f64>,
    pub alpha_segment: Vec<usize>,
    pub beta: Vec<f64>,
    pub beta_segment: Vec<usize>,
}

impl AttentionTrace {
    fn record(out: &AttentionOutput<'_>) -> Self {
        Self {
            alpha: out.alpha.value().data().to_vec(),
            alpha_segment: out.alpha_segment.clone(),
            beta: out.beta.map(|b| b.value().data().to_vec()).unwrap_or_default(),
            beta_segment: out.beta_segment.clone(),
        }
    }
}

fn branch<'t>(
    trace: &mut Vec<AttentionTrace>,
    w: &BranchWeights<Var<'t>>,
    entities: Var<'t>,
    connectors: Var<'t>,
    conns: &[Connection],
    frequencies: Option<Var<'t>>,
) -> Result<Var<'t>> {
    let q = entities.matmul(w.proj_node)?;
    let e = connectors.matmul(w.proj_edge)?;
    let (out, attn) = transformer_block(&w.block, q, q, e, conns, frequencies)?;
    trace.push(AttentionTrace::record(&attn));
    Ok(out)
}

/// One layer of node updates on the graph and edge updates on the dual.
#[allow(clippy::too_many_arguments)]
pub fn layer_forward<'t>(
    trace: &mut Vec<AttentionTrace>,
    w: &LayerWeights<Var<'t>>,
    type_table: Option<Var<'t>>,
    frequencies: Option<Var<'t>>,
    input: &GraphInput,
    nb: &Neighborhoods,
    h: Var<'t>,
    g: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let tape = h.tape();
    let phi = branch(trace, &w.node_in, h, g, &nb.node_in, frequencies)?;
    let psi = branch(trace, &w.node_out, h, g, &nb.node_out, frequencies)?;
    let h_next = tape.concat_cols(&[phi, psi])?;

    let g_next = match (w.edge_in.as_ref(), w.edge_out.as_ref(), type_table) {
        (Some(w_in), Some(w_out), Some(table)) => {
            let hat = if input.duals.is_empty() {
                // Nothing to attend to; any matrix with the right width works.
                h.gather_rows(&[])?
            } else {
                let common: Vec<usize> = input.duals.iter().map(|d| d.common_node).collect();
                let kinds: Vec<usize> = input.duals.iter().map(|d| d.kind.index()).collect();
                h.gather_rows(&common)?.add(table.gather_rows(&kinds)?)?
            };
            let theta = branch(trace, w_in, g, hat, &nb.dual_in, frequencies)?;
            let gamma = branch(trace, w_out, g, hat, &nb.dual_out, frequencies)?;
            tape.concat_cols(&[theta, gamma])?
        }
        _ => g,
    };
    Ok((h_next, g_next))
}

/// Input embedding followed by all layers. `x` and `z` are the node and edge
/// feature matrices, passed as variables so callers can probe gradients.
pub fn encode<'t>(
    trace: &mut Vec<AttentionTrace>,
    cfg: &ModelConfig,
    w: &Layout<Var<'t>>,
    input: &GraphInput,
    nb: &Neighborhoods,
    x: Var<'t>,
    z: Var<'t>,
) -> Result<Encoded<'t>> {
    let mut h = x.matmul(w.embed_node_w)?.add_row(w.embed_node_b)?;
    let mut g = z.matmul(w.embed_edge_w)?.add_row(w.embed_edge_b)?;
    let freq = if cfg.use_time_encoding { w.frequencies } else { None };
    for layer in &w.layers {
        (h, g) = layer_forward(trace, layer, w.type_table, freq, input, nb, h, g)?;
    }
    Ok(Encoded { h, g })
}

/// The four cross-query attentions for every target edge `u -> v`:
/// `delta_uv` attends `h_u` to the incoming and outgoing edges of `v`,
/// `delta_vu` attends `h_v` to those of `u`. The target edge itself is not
/// a key.
pub fn cross_query<'t>(
    trace: &mut Vec<AttentionTrace>,
    w: &CrossWeights<Var<'t>>,
    input: &GraphInput,
    nb: &Neighborhoods,
    h: Var<'t>,
    g: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let tape = h.tape();
    let us: Vec<usize> = input.targets.iter().map(|&t| input.tails[t]).collect();
    let vs: Vec<usize> = input.targets.iter().map(|&t| input.heads[t]).collect();
    let hu = h.gather_rows(&us)?;
    let hv = h.gather_rows(&vs)?;

    let conns = |of: &[usize], incoming: bool| -> Vec<Connection> {
        let mut out = Vec::new();
        for (i, (&node, &target)) in of.iter().zip(&input.targets).enumerate() {
            let list = if incoming { &nb.in_lists[node] } else { &nb.out_lists[node] };
            for &e in list {
                if e == target {
                    continue;
                }
                let key = if incoming { input.tails[e] } else { input.heads[e] };
                out.push(Connection {
                    query: i,
                    key,
                    edge: e,
                    offset: 0.0,
                });
            }
        }
        out
    };

    let mut attend = |w: &AttnWeights<Var<'t>>, q: Var<'t>, c: Vec<Connection>| -> Result<Var<'t>> {
        let out = attention(w, q, h, g, &c, None)?;
        trace.push(AttentionTrace::record(&out));
        Ok(out.out)
    };
    let li = attend(&w.left_in, hu, conns(&vs, true))?;
    let lo = attend(&w.left_out, hu, conns(&vs, false))?;
    let ri = attend(&w.right_in, hv, conns(&us, true))?;
    let ro = attend(&w.right_out, hv, conns(&us, false))?;
    Ok((tape.concat_cols(&[li, lo])?, tape.concat_cols(&[ri, ro])?))
}

/// `CONCAT(g_uv, h_v, h_u[, delta_uv, delta_vu])` per target, then the head.
/// Returns logits as a `targets x 1` column.
pub fn classify<'t>(
    w: &Layout<Var<'t>>,
    input: &GraphInput,
    enc: &Encoded<'t>,
    delta: Option<(Var<'t>, Var<'t>)>,
) -> Result<Var<'t>> {
    let tape = enc.h.tape();
    let us: Vec<usize> = input.targets.iter().map(|&t| input.tails[t]).collect();
    let vs: Vec<usize> = input.targets.iter().map(|&t| input.heads[t]).collect();
    let mut parts = vec![
        enc.g.gather_rows(&input.targets)?,
        enc.h.gather_rows(&vs)?,
        enc.h.gather_rows(&us)?,
    ];
    if let Some((duv, dvu)) = delta {
        parts.push(duv);
        parts.push(dvu);
    }
    let features = tape.concat_cols(&parts)?;
    features
        .matmul(w.cls_w1)?
        .add_row(w.cls_b1)?
        .relu()
        .matmul(w.cls_w2)?
        .add_row(w.cls_b2)
}

pub struct ForwardOutput<'t> {
    pub encoded: Encoded<'t>,
    pub delta: Option<(Var<'t>, Var<'t>)>,
    pub logits: Var<'t>,
    pub probabilities: Var<'t>,
    /// Every attention call of the pass, in execution order.
    pub attention: Vec<AttentionTrace>,
}

/// Full forward pass with explicit feature variables.
pub fn forward_with_features<'t>(
    cfg: &ModelConfig,
    w: &Layout<Var<'t>>,
    input: &GraphInput,
    x: Var<'t>,
    z: Var<'t>,
) -> Result<ForwardOutput<'t>> {
    let nb = Neighborhoods::new(input, cfg);
    let mut attention = Vec::new();
    let encoded = encode(&mut attention, cfg, w, input, &nb, x, z)?;
    let delta = match (&w.cross, cfg.use_cross_query) {
        (Some(cw), true) => Some(cross_query(&mut attention, cw, input, &nb, encoded.h, encoded.g)?),
        _ => None,
    };
    let logits = classify(w, input, &encoded, delta)?;
    let probabilities = logits.sigmoid();
    Ok(ForwardOutput {
        encoded,
        delta,
        logits,
        probabilities,
        attention,
    })
}

/// Full forward pass with the input features as constants.
pub fn forward<'t>(
    tape: &'t Tape,
    cfg: &ModelConfig,
    w: &Layout<Var<'t>>,
    input: &GraphInput,
) -> Result<ForwardOutput<'t>> {
    let x = tape.constant(input.node_features.clone());
    let z = tape.constant(input.edge_features.clone());
    forward_with_features(cfg, w, input, x, z)
}
