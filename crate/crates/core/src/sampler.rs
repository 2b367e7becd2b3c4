//! Capped K-hop rooted subgraphs around target edges, and batches of them.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{build_dual, AugmentedLineGraph};
use crate::error::{Error, Result};
use crate::graph::{DirectedMultigraph, EdgeId, NodeId};
use crate::model::{GraphInput, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Hop count K; an edge is `k` hops away when one endpoint is `k - 1`
    /// undirected steps from an endpoint of the target.
    pub hops: usize,
    /// Edge cap M_max per subgraph, target included.
    pub max_edges: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Keep only neighbors no later than the target edge.
    pub temporal_filter: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            hops: 2,
            max_edges: 32,
            batch_size: 128,
            seed: 0,
            temporal_filter: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 || self.max_edges == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "hops, max_edges and batch_size must be >= 1 (got {}, {}, {})",
                self.hops, self.max_edges, self.batch_size
            )));
        }
        Ok(())
    }
}

/// A rooted subgraph with local ids, its maps back to global ids, and the
/// dual graph the model configuration asks for.
#[derive(Clone, Debug)]
pub struct SampledSubgraph {
    pub graph: DirectedMultigraph,
    pub node_map: Vec<NodeId>,
    pub edge_map: Vec<EdgeId>,
    pub dual: Option<AugmentedLineGraph>,
    /// Local id of the target edge.
    pub target: EdgeId,
    pub label: Option<bool>,
}

impl SampledSubgraph {
    pub fn to_input(&self) -> Result<GraphInput> {
        GraphInput::new(&self.graph, self.dual.as_ref(), vec![self.target])
    }

    pub fn dual_edge_count(&self) -> usize {
        self.dual.as_ref().map_or(0, |d| d.edge_count())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SubgraphBatch {
    pub items: Vec<SampledSubgraph>,
}

impl SubgraphBatch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Disjoint union of all items, targets in item order.
    pub fn to_input(&self) -> Result<GraphInput> {
        let parts = self.items.iter().map(|s| s.to_input()).collect::<Result<Vec<_>>>()?;
        GraphInput::union(&parts)
    }

    pub fn global_targets(&self) -> Vec<EdgeId> {
        self.items.iter().map(|s| s.edge_map[s.target]).collect()
    }
}

/// Hop distance of every edge reached within `hops` of the target, as
/// `(edge, hop)` pairs in discovery order. The target has hop 1.
fn edge_hops(g: &DirectedMultigraph, target: EdgeId, hops: usize, until: Option<f64>) -> Vec<(EdgeId, usize)> {
    let t = g.edges()[target];
    let mut node_dist = vec![usize::MAX; g.node_count()];
    let mut edge_hop = vec![usize::MAX; g.edge_count()];
    let mut queue = VecDeque::new();
    for v in [t.tail, t.head] {
        if node_dist[v] == usize::MAX {
            node_dist[v] = 0;
            queue.push_back(v);
        }
    }
    let mut found = Vec::new();
    edge_hop[target] = 1;
    found.push((target, 1));
    while let Some(v) = queue.pop_front() {
        let d = node_dist[v];
        if d + 1 > hops {
            continue;
        }
        let incident = g.in_edges(v).unwrap().iter().chain(g.out_edges(v).unwrap());
        for &e in incident {
            if edge_hop[e] != usize::MAX {
                continue;
            }
            let edge = g.edges()[e];
            if until.is_some_and(|limit| edge.timestamp > limit) {
                continue;
            }
            edge_hop[e] = d + 1;
            found.push((e, d + 1));
            let other = if edge.tail == v { edge.head } else { edge.tail };
            if node_dist[other] == usize::MAX {
                node_dist[other] = d + 1;
                queue.push_back(other);
            }
        }
    }
    found
}

fn target_rng(seed: u64, target: EdgeId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(target as u64);
    rng
}

/// Edge ids (global, ascending) of the capped K-hop rooted subgraph.
pub fn rooted_edges(g: &DirectedMultigraph, target: EdgeId, cfg: &SamplerConfig) -> Result<Vec<EdgeId>> {
    cfg.validate()?;
    let t = g.edge(target)?;
    let until = cfg.temporal_filter.then_some(t.timestamp);
    let mut found = edge_hops(g, target, cfg.hops, until);
    if found.len() > cfg.max_edges {
        let mut rng = target_rng(cfg.seed, target);
        let mut ranked: Vec<(usize, f64, u64, EdgeId)> = found[1..]
            .iter()
            .map(|&(e, hop)| (hop, -g.edges()[e].timestamp, rng.gen::<u64>(), e))
            .collect();
        ranked.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        found.truncate(1);
        found.extend(ranked.into_iter().take(cfg.max_edges - 1).map(|r| (r.3, r.0)));
    }
    let mut edges: Vec<EdgeId> = found.into_iter().map(|(e, _)| e).collect();
    edges.sort_unstable();
    Ok(edges)
}

/// The capped rooted subgraph of `target`, with its dual built per `model`.
pub fn rooted_subgraph(
    g: &DirectedMultigraph,
    target: EdgeId,
    cfg: &SamplerConfig,
    model: &ModelConfig,
) -> Result<SampledSubgraph> {
    let edges = rooted_edges(g, target, cfg)?;
    let (graph, node_map, edge_map) = g.edge_subgraph(&edges)?;
    let local = edge_map.binary_search(&target).expect("target kept");
    let dual = if model.use_dual {
        Some(build_dual(&graph, model.dual_mode, model.use_causal_pruning)?)
    } else {
        None
    };
    Ok(SampledSubgraph {
        label: graph.label(local),
        graph,
        node_map,
        edge_map,
        dual,
        target: local,
    })
}

/// Samples every target in parallel; output order follows `targets`.
pub fn sample_all(
    g: &DirectedMultigraph,
    targets: &[EdgeId],
    cfg: &SamplerConfig,
    model: &ModelConfig,
) -> Result<Vec<SampledSubgraph>> {
    targets
        .par_iter()
        .map(|&t| rooted_subgraph(g, t, cfg, model))
        .collect()
}

/// Consecutive batches of `cfg.batch_size` targets (the last may be short).
pub fn make_batches(
    g: &DirectedMultigraph,
    targets: &[EdgeId],
    cfg: &SamplerConfig,
    model: &ModelConfig,
) -> Result<Vec<SubgraphBatch>> {
    cfg.validate()?;
    let all = sample_all(g, targets, cfg, model)?;
    Ok(all
        .chunks(cfg.batch_size)
        .map(|c| SubgraphBatch { items: c.to_vec() })
        .collect())
}
