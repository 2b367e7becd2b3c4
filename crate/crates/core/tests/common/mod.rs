//! Fixtures and independent reference implementations shared by the
//! integration tests. Nothing here calls into the batched model code.

#![allow(dead_code)]

use grande::dual::{AdjacencyType, AugmentedLineGraph, DualEdge, Role};
use grande::graph::DirectedMultigraph;
use grande::model::{ModelConfig, ParamStore};
use grande::numerics::Tensor;
use rand::Rng;

/// Eight-edge sink hub plus a fan-out: `n1..n8 -> n0` are `e0..e7`, then
/// `e8: n5 -> n9`, `e9: n5 -> n10`. Edge `e_i` has timestamp `i`.
pub fn sink_hub() -> DirectedMultigraph {
    let mut triples: Vec<(usize, usize, f64)> = (0..8).map(|i| (i + 1, 0, i as f64)).collect();
    triples.push((5, 9, 8.0));
    triples.push((5, 10, 9.0));
    DirectedMultigraph::from_triples(11, &triples).unwrap()
}

/// Random multigraph without self-loops; multiplicity of any ordered pair is
/// at most `max_mult`.
pub fn random_multigraph<R: Rng>(rng: &mut R, max_nodes: usize, max_edges: usize, max_mult: usize) -> DirectedMultigraph {
    let n = rng.gen_range(2..=max_nodes);
    let target = rng.gen_range(0..=max_edges);
    let mut mult = std::collections::HashMap::new();
    let mut triples = Vec::new();
    let mut attempts = 0;
    while triples.len() < target && attempts < 20 * max_edges + 20 {
        attempts += 1;
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let c = mult.entry((u, v)).or_insert(0usize);
        if *c >= max_mult {
            continue;
        }
        *c += 1;
        triples.push((u, v, rng.gen_range(0..20) as f64));
    }
    DirectedMultigraph::from_triples(n, &triples).unwrap()
}

/// Attaches random node/edge features and random labels.
pub fn featurize<R: Rng>(rng: &mut R, g: DirectedMultigraph, fn_: usize, fe: usize) -> DirectedMultigraph {
    let n = g.node_count();
    let m = g.edge_count();
    let x = (0..n * fn_).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = (0..m * fe).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = (0..m).map(|_| Some(rng.gen_bool(0.5))).collect();
    g.with_node_features(fn_, x)
        .unwrap()
        .with_edge_features(fe, z)
        .unwrap()
        .with_labels(labels)
        .unwrap()
}

fn role(g: &DirectedMultigraph, e: usize, w: usize) -> Vec<Role> {
    let edge = g.edges()[e];
    let mut r = Vec::new();
    if edge.tail == w {
        r.push(Role::Tail);
    }
    if edge.head == w {
        r.push(Role::Head);
    }
    r
}

/// Quadratic pairwise scan: one dual edge per ordered pair of distinct edges
/// and per shared node.
pub fn brute_force_augmented(g: &DirectedMultigraph) -> Vec<DualEdge> {
    let m = g.edge_count();
    let mut out = Vec::new();
    for a in 0..m {
        for b in 0..m {
            if a == b {
                continue;
            }
            for w in 0..g.node_count() {
                for ra in role(g, a, w) {
                    for rb in role(g, b, w) {
                        out.push(DualEdge {
                            from: a,
                            to: b,
                            kind: AdjacencyType::from_roles(ra, rb),
                            common_node: w,
                        });
                    }
                }
            }
        }
    }
    out.sort();
    out
}

pub fn brute_force_line(g: &DirectedMultigraph) -> Vec<DualEdge> {
    let e = g.edges();
    let mut out = Vec::new();
    for a in 0..e.len() {
        for b in 0..e.len() {
            if a != b && e[a].head == e[b].tail {
                out.push(DualEdge {
                    from: a,
                    to: b,
                    kind: AdjacencyType::HeadToTail,
                    common_node: e[a].head,
                });
            }
        }
    }
    out.sort();
    out
}

// ---- scalar reference of the whole model ----

pub fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    assert_eq!(x.len(), w.rows(), "vec_mat width");
    let mut y = vec![0.0; w.cols()];
    for (i, xi) in x.iter().enumerate() {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj += xi * w.get(i, j);
        }
    }
    y
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect()
}

pub fn time_encoding(s: f64, rho: &[f64]) -> Vec<f64> {
    let k = rho.len() as f64;
    rho.iter()
        .flat_map(|r| [(r * s).cos() / k.sqrt(), (r * s).sin() / k.sqrt()])
        .collect()
}

/// A key of an attention call: neighbor node vector, connecting vector,
/// time offset.
pub type Key = (Vec<f64>, Vec<f64>, f64);

pub struct AttnTrace {
    pub out: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

pub struct Oracle<'a> {
    pub cfg: &'a ModelConfig,
    pub store: &'a ParamStore,
}

impl<'a> Oracle<'a> {
    pub fn p(&self, name: &str) -> &Tensor {
        self.store.get(name).unwrap_or_else(|| panic!("no parameter {name}"))
    }

    fn widen(&self, v: &[f64], s: f64, time: bool) -> Vec<f64> {
        let mut out = v.to_vec();
        if time {
            out.extend(time_encoding(s, self.p("time.frequencies").data()));
        }
        out
    }

    /// Direct evaluation of the attention formula for one query.
    pub fn attend(&self, prefix: &str, q: &[f64], keys: &[Key], time: bool) -> AttnTrace {
        let wq = self.p(&format!("{prefix}.query"));
        let wk = self.p(&format!("{prefix}.key"));
        let wn = self.p(&format!("{prefix}.value_node"));
        let we = self.p(&format!("{prefix}.value_edge"));
        let a = wq.cols() as f64;
        let qq = vec_mat(q, wq);
        let mut node_keys = vec![self.widen(q, 0.0, time)];
        node_keys.extend(keys.iter().map(|(k, _, s)| self.widen(k, *s, time)));
        let edge_keys: Vec<Vec<f64>> = keys.iter().map(|(_, e, s)| self.widen(e, *s, time)).collect();

        let alpha = softmax(
            &node_keys
                .iter()
                .map(|k| dot(&qq, &vec_mat(k, wk)) / a.sqrt())
                .collect::<Vec<_>>(),
        );
        let beta = if edge_keys.is_empty() {
            Vec::new()
        } else {
            softmax(
                &edge_keys
                    .iter()
                    .map(|e| dot(&qq, &vec_mat(e, we)) / a.sqrt())
                    .collect::<Vec<_>>(),
            )
        };
        let mut out = vec![0.0; wq.cols()];
        for (w, k) in alpha.iter().zip(&node_keys) {
            for (o, v) in out.iter_mut().zip(vec_mat(k, wn)) {
                *o += w * v;
            }
        }
        for (w, e) in beta.iter().zip(&edge_keys) {
            for (o, v) in out.iter_mut().zip(vec_mat(e, we)) {
                *o += w * v;
            }
        }
        AttnTrace { out, alpha, beta }
    }

    fn affine(&self, x: &[f64], prefix: &str) -> Vec<f64> {
        let s = self.p(&format!("{prefix}.scale")).data();
        let b = self.p(&format!("{prefix}.shift")).data();
        layer_norm(x).iter().zip(s).zip(b).map(|((v, s), b)| v * s + b).collect()
    }

    pub fn block(&self, prefix: &str, q: &[f64], keys: &[Key], time: bool) -> Vec<f64> {
        let att = self.attend(&format!("{prefix}.attn"), q, keys, time).out;
        let mid = self.affine(&add(q, &att), &format!("{prefix}.norm1"));
        let hidden: Vec<f64> = add(&vec_mat(&mid, self.p(&format!("{prefix}.ff.w1"))), self.p(&format!("{prefix}.ff.b1")).data())
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let ff = add(&vec_mat(&hidden, self.p(&format!("{prefix}.ff.w2"))), self.p(&format!("{prefix}.ff.b2")).data());
        self.affine(&add(&mid, &ff), &format!("{prefix}.norm2"))
    }

    /// Node and edge representations after all layers.
    pub fn encode(
        &self,
        g: &DirectedMultigraph,
        dual: Option<&AugmentedLineGraph>,
        x: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let cfg = self.cfg;
        let time = cfg.use_time_encoding;
        let n = g.node_count();
        let m = g.edge_count();
        let t: Vec<f64> = g.edges().iter().map(|e| e.timestamp).collect();
        let mut h: Vec<Vec<f64>> = (0..n)
            .map(|v| add(&vec_mat(&x[v], self.p("embed.node.weight")), self.p("embed.node.bias").data()))
            .collect();
        let mut gg: Vec<Vec<f64>> = (0..m)
            .map(|e| add(&vec_mat(g.edge_features(e), self.p("embed.edge.weight")), self.p("embed.edge.bias").data()))
            .collect();

        for l in 0..cfg.layers {
            let mut h_next = Vec::with_capacity(n);
            for v in 0..n {
                let incident = g.incident_edges(v).unwrap();
                let tmin = incident.iter().map(|&e| t[e]).fold(f64::INFINITY, f64::min);
                let mut parts = Vec::new();
                for (name, outgoing) in [("node_in", false), ("node_out", true)] {
                    let pre = format!("layer{l}.{name}");
                    let pn = self.p(&format!("{pre}.proj_node"));
                    let pe = self.p(&format!("{pre}.proj_edge"));
                    let list = if outgoing { g.out_edges(v).unwrap() } else { g.in_edges(v).unwrap() };
                    let keys: Vec<Key> = if outgoing && !cfg.use_out_branch {
                        Vec::new()
                    } else {
                        list.iter()
                            .map(|&e| {
                                let other = if outgoing { g.edges()[e].head } else { g.edges()[e].tail };
                                (vec_mat(&h[other], pn), vec_mat(&gg[e], pe), t[e] - tmin)
                            })
                            .collect()
                    };
                    parts.extend(self.block(&pre, &vec_mat(&h[v], pn), &keys, time));
                }
                h_next.push(parts);
            }

            let g_next = match dual {
                Some(d) if cfg.use_dual => {
                    let table = self.p("type_embedding");
                    let hat = |de: &DualEdge| -> Vec<f64> { add(&h[de.common_node], table.row_slice(de.kind.index())) };
                    (0..m)
                        .map(|e| {
                            let ins: Vec<DualEdge> = d.in_edges(e).iter().map(|&i| d.edges()[i]).collect();
                            let outs: Vec<DualEdge> = d.out_edges(e).iter().map(|&i| d.edges()[i]).collect();
                            let tmin = ins
                                .iter()
                                .map(|de| t[de.from])
                                .chain(outs.iter().map(|de| t[de.to]))
                                .fold(t[e], f64::min);
                            let mut parts = Vec::new();
                            for (name, list, outgoing) in [("edge_in", &ins, false), ("edge_out", &outs, true)] {
                                let pre = format!("layer{l}.{name}");
                                let pn = self.p(&format!("{pre}.proj_node"));
                                let pe = self.p(&format!("{pre}.proj_edge"));
                                let keys: Vec<Key> = list
                                    .iter()
                                    .map(|de| {
                                        let other = if outgoing { de.to } else { de.from };
                                        (vec_mat(&gg[other], pn), vec_mat(&hat(de), pe), t[other] - tmin)
                                    })
                                    .collect();
                                parts.extend(self.block(&pre, &vec_mat(&gg[e], pn), &keys, time));
                            }
                            parts
                        })
                        .collect()
                }
                _ => gg.clone(),
            };
            h = h_next;
            gg = g_next;
        }
        (h, gg)
    }

    pub fn cross(&self, g: &DirectedMultigraph, h: &[Vec<f64>], gg: &[Vec<f64>], target: usize) -> (Vec<f64>, Vec<f64>) {
        let edge = g.edges()[target];
        let (u, v) = (edge.tail, edge.head);
        let keys = |node: usize, outgoing: bool| -> Vec<Key> {
            let list = if outgoing { g.out_edges(node).unwrap() } else { g.in_edges(node).unwrap() };
            list.iter()
                .filter(|&&e| e != target)
                .map(|&e| {
                    let other = if outgoing { g.edges()[e].head } else { g.edges()[e].tail };
                    (h[other].clone(), gg[e].clone(), 0.0)
                })
                .collect()
        };
        let mut duv = self.attend("cross.left_in", &h[u], &keys(v, false), false).out;
        duv.extend(self.attend("cross.left_out", &h[u], &keys(v, true), false).out);
        let mut dvu = self.attend("cross.right_in", &h[v], &keys(u, false), false).out;
        dvu.extend(self.attend("cross.right_out", &h[v], &keys(u, true), false).out);
        (duv, dvu)
    }

    /// Probability per target edge.
    pub fn predict(&self, g: &DirectedMultigraph, dual: Option<&AugmentedLineGraph>, targets: &[usize]) -> Vec<f64> {
        let x: Vec<Vec<f64>> = (0..g.node_count()).map(|v| g.node_features(v).to_vec()).collect();
        let (h, gg) = self.encode(g, dual, &x);
        targets
            .iter()
            .map(|&t| {
                let e = g.edges()[t];
                let mut feat = gg[t].clone();
                feat.extend(&h[e.head]);
                feat.extend(&h[e.tail]);
                if self.cfg.use_cross_query {
                    let (a, b) = self.cross(g, &h, &gg, t);
                    feat.extend(a);
                    feat.extend(b);
                }
                let hidden: Vec<f64> = add(&vec_mat(&feat, self.p("classifier.w1")), self.p("classifier.b1").data())
                    .into_iter()
                    .map(|v| v.max(0.0))
                    .collect();
                let logit = vec_mat(&hidden, self.p("classifier.w2"))[0] + self.p("classifier.b2").data()[0];
                1.0 / (1.0 + (-logit).exp())
            })
            .collect()
    }
}

pub fn random_featured<R: Rng>(rng: &mut R, max_nodes: usize, max_edges: usize, max_mult: usize, fn_: usize, fe: usize) -> DirectedMultigraph {
    let g = random_multigraph(rng, max_nodes, max_edges, max_mult);
    featurize(rng, g, fn_, fe)
}

/// Relabels nodes by `pn` and edges by `pe` (new id of old id `i` is `p[i]`).
pub fn permute(g: &DirectedMultigraph, pn: &[usize], pe: &[usize]) -> DirectedMultigraph {
    let m = g.edge_count();
    let mut triples = vec![(0, 0, 0.0); m];
    let fe = g.edge_feature_dim();
    let fn_ = g.node_feature_dim();
    let mut z = vec![0.0; m * fe];
    let mut labels = vec![None; m];
    for (e, edge) in g.edges().iter().enumerate() {
        triples[pe[e]] = (pn[edge.tail], pn[edge.head], edge.timestamp);
        z[pe[e] * fe..(pe[e] + 1) * fe].copy_from_slice(g.edge_features(e));
        labels[pe[e]] = g.label(e);
    }
    let mut x = vec![0.0; g.node_count() * fn_];
    for v in 0..g.node_count() {
        x[pn[v] * fn_..(pn[v] + 1) * fn_].copy_from_slice(g.node_features(v));
    }
    DirectedMultigraph::from_triples(g.node_count(), &triples)
        .unwrap()
        .with_node_features(fn_, x)
        .unwrap()
        .with_edge_features(fe, z)
        .unwrap()
        .with_labels(labels)
        .unwrap()
}

pub fn shuffled<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn sink_hub_featurized() -> DirectedMultigraph {
    let g = sink_hub();
    let (dim, x) = grande::graph::degree_one_hot_features(&g, 9);
    g.with_node_features(dim, x)
        .unwrap()
        .with_edge_features(1, vec![1.0; 10])
        .unwrap()
}

/// Two-edge chain plus a fan-in; chosen so that reversal changes both the
/// local neighborhoods and the dual adjacency types.
pub fn direction_witness() -> DirectedMultigraph {
    DirectedMultigraph::from_triples(5, &[(0, 1, 1.0), (1, 2, 2.0), (3, 2, 3.0), (4, 2, 4.0), (2, 0, 5.0)])
        .unwrap()
        .with_node_features(1, vec![1.0, 0.5, -0.5, 0.25, -1.0])
        .unwrap()
        .with_edge_features(1, vec![1.0; 5])
        .unwrap()
}

/// Pairwise Mann-Whitney count over every (positive, negative) pair.
pub fn oracle_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0u128;
    let mut pairs = 0u128;
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

/// Confusion counts `(tp, fp)` for predicting positive at `score >= thr`.
pub fn counts_at(scores: &[f64], labels: &[bool], thr: f64) -> (u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    for (&s, &y) in scores.iter().zip(labels) {
        if s >= thr {
            if y {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (tp, fp)
}

/// Every score value plus one threshold above all of them.
pub fn all_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.push(f64::INFINITY);
    t
}

pub fn class_sizes(labels: &[bool]) -> (u64, u64) {
    let p = labels.iter().filter(|&&y| y).count() as u64;
    (p, labels.len() as u64 - p)
}

/// Largest `|TPR - FPR|`, compared as exact rationals over the common
/// denominator `P N`.
pub fn oracle_ks(scores: &[f64], labels: &[bool]) -> f64 {
    let (p, n) = class_sizes(labels);
    let best = all_thresholds(scores)
        .into_iter()
        .map(|t| {
            let (tp, fp) = counts_at(scores, labels, t);
            ((tp * n) as i128 - (fp * p) as i128).unsigned_abs()
        })
        .max()
        .unwrap();
    best as f64 / (p * n) as f64
}

pub fn oracle_f1(scores: &[f64], labels: &[bool], thr: f64) -> f64 {
    let (p, _) = class_sizes(labels);
    let (tp, fp) = counts_at(scores, labels, thr);
    if tp == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (tp + fp + p) as f64
    }
}

/// Best F1 over every score threshold.
pub fn oracle_f1_best(scores: &[f64], labels: &[bool]) -> f64 {
    all_thresholds(scores)
        .into_iter()
        .map(|t| oracle_f1(scores, labels, t))
        .fold(0.0, f64::max)
}

/// Highest recall among thresholds whose precision is at least `level`.
pub fn oracle_recall_at(scores: &[f64], labels: &[bool], level: f64) -> f64 {
    let (p, _) = class_sizes(labels);
    all_thresholds(scores)
        .into_iter()
        .filter_map(|t| {
            let (tp, fp) = counts_at(scores, labels, t);
            (tp + fp > 0 && tp as f64 / (tp + fp) as f64 >= level).then(|| tp as f64 / p as f64)
        })
        .fold(0.0, f64::max)
}

/// Random scores on a coarse grid (to force ties) with both classes present.
pub fn random_scored<R: Rng>(rng: &mut R, max_len: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let len = rng.gen_range(2..=max_len);
        let levels = rng.gen_range(1..=len + 1);
        let scores: Vec<f64> = (0..len).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.4)).collect();
        if labels.iter().any(|&y| y) && labels.iter().any(|&y| !y) {
            return (scores, labels);
        }
    }
}

/// Kahn's algorithm on the dual graph: true iff every dual node can be
/// removed in topological order.
pub fn is_dag(lg: &AugmentedLineGraph) -> bool {
    let n = lg.node_count();
    let mut indeg = vec![0usize; n];
    for d in lg.edges() {
        indeg[d.to] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = ready.pop() {
        seen += 1;
        for &i in lg.out_edges(v) {
            let w = lg.edges()[i].to;
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push(w);
            }
        }
    }
    seen == n
}

/// Same topology as `g`, with edge `i` at timestamp `times[i]`.
pub fn retimed(g: &DirectedMultigraph, times: &[f64]) -> DirectedMultigraph {
    let triples: Vec<(usize, usize, f64)> = g
        .edges()
        .iter()
        .zip(times)
        .map(|(e, &t)| (e.tail, e.head, t))
        .collect();
    DirectedMultigraph::from_triples(g.node_count(), &triples).unwrap()
}

/// Proptest strategy for loop-free multigraphs with multiplicity at most 3
/// and integer timestamps in `0..10` (so ties occur).
pub fn arb_multigraph(max_nodes: usize, max_edges: usize) -> impl proptest::strategy::Strategy<Value = DirectedMultigraph> {
    use proptest::prelude::*;
    (2..=max_nodes).prop_flat_map(move |n| {
        proptest::collection::vec((0..n, 1..n, 0u8..10), 0..=max_edges).prop_map(move |raw| {
            let mut mult = std::collections::HashMap::new();
            let triples: Vec<(usize, usize, f64)> = raw
                .into_iter()
                // Offsetting by 1..n never lands on u, so there are no loops.
                .map(|(u, d, t)| (u, (u + d) % n, t as f64))
                .filter(|&(u, v, _)| {
                    let c = mult.entry((u, v)).or_insert(0);
                    *c += 1;
                    *c <= 3
                })
                .collect();
            DirectedMultigraph::from_triples(n, &triples).unwrap()
        })
    })
}
