//! Directed multigraphs built from timestamped event streams.
//!
//! Node and edge ids are dense `usize` values assigned at construction. All
//! incidence lists are kept in ascending edge-id order so that downstream
//! reductions visit neighbors in a canonical order.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

/// One recorded interaction `source -> target` at `timestamp`.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub source: u64,
    pub target: u64,
    pub timestamp: f64,
    pub features: Vec<f64>,
}

impl Event {
    pub fn new(source: u64, target: u64, timestamp: f64) -> Self {
        Self {
            source,
            target,
            timestamp,
            features: Vec::new(),
        }
    }
}

/// Events sorted ascending by timestamp; ties keep their insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
}

impl EventStream {
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Validates and sorts raw records into an [`EventStream`].
pub fn ingest_events(records: Vec<Event>) -> Result<EventStream> {
    if let Some((index, ev)) = records
        .iter()
        .enumerate()
        .find(|(_, ev)| !ev.timestamp.is_finite())
    {
        return Err(Error::NonFiniteTimestamp {
            index,
            value: ev.timestamp,
        });
    }
    let mut events = records;
    // sort_by is stable, which gives the insertion-order tiebreak
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(EventStream { events })
}

/// Closed time window `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeInterval {
    start: f64,
    end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if start.partial_cmp(&end).is_none_or(|o| o.is_gt()) {
            return Err(Error::InvalidArgument(format!(
                "time interval start {start} must not exceed end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn everything() -> Self {
        Self {
            start: f64::NEG_INFINITY,
            end: f64::INFINITY,
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Builds the snapshot graph of all events inside `interval`.
///
/// Nodes are the endpoints of included events, numbered by ascending external
/// id. Edges keep stream order, so edge ids ascend with time.
pub fn snapshot(stream: &EventStream, interval: TimeInterval) -> DirectedMultigraph {
    let included: Vec<&Event> = stream
        .events
        .iter()
        .filter(|ev| interval.contains(ev.timestamp))
        .collect();

    let mut ids: BTreeMap<u64, NodeId> = BTreeMap::new();
    for ev in &included {
        ids.insert(ev.source, 0);
        ids.insert(ev.target, 0);
    }
    for (dense, slot) in ids.values_mut().enumerate() {
        *slot = dense;
    }
    let node_keys: Vec<u64> = ids.keys().copied().collect();

    let edge_dim = included.first().map_or(0, |ev| ev.features.len());
    let mut edges = Vec::with_capacity(included.len());
    let mut edge_features = Vec::with_capacity(included.len() * edge_dim);
    for ev in &included {
        edges.push(Edge {
            tail: ids[&ev.source],
            head: ids[&ev.target],
            timestamp: ev.timestamp,
        });
        let mut f = ev.features.clone();
        f.resize(edge_dim, 0.0);
        edge_features.extend(f);
    }

    let mut g = DirectedMultigraph::from_edges(node_keys.len(), edges)
        .expect("snapshot endpoints are always valid node ids");
    g.node_keys = node_keys;
    g.edge_feature_dim = edge_dim;
    g.edge_features = edge_features;
    g
}

/// A directed edge with its occurrence time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub tail: NodeId,
    pub head: NodeId,
    pub timestamp: f64,
}

/// Directed multigraph with node/edge features and optional edge labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectedMultigraph {
    node_count: usize,
    node_keys: Vec<u64>,
    node_feature_dim: usize,
    node_features: Vec<f64>,
    edges: Vec<Edge>,
    edge_feature_dim: usize,
    edge_features: Vec<f64>,
    labels: Vec<Option<bool>>,
    in_index: Vec<Vec<EdgeId>>,
    out_index: Vec<Vec<EdgeId>>,
}

impl DirectedMultigraph {
    /// Creates a graph with `node_count` nodes and the given edges, in order.
    /// Features are empty and every label is absent.
    pub fn from_edges(node_count: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut in_index = vec![Vec::new(); node_count];
        let mut out_index = vec![Vec::new(); node_count];
        for (id, e) in edges.iter().enumerate() {
            for n in [e.tail, e.head] {
                if n >= node_count {
                    return Err(Error::InvalidNode {
                        id: n,
                        count: node_count,
                    });
                }
            }
            if !e.timestamp.is_finite() {
                return Err(Error::NonFiniteTimestamp {
                    index: id,
                    value: e.timestamp,
                });
            }
            out_index[e.tail].push(id);
            in_index[e.head].push(id);
        }
        let m = edges.len();
        Ok(Self {
            node_count,
            node_keys: (0..node_count as u64).collect(),
            node_feature_dim: 0,
            node_features: Vec::new(),
            edges,
            edge_feature_dim: 0,
            edge_features: Vec::new(),
            labels: vec![None; m],
            in_index,
            out_index,
        })
    }

    /// Convenience constructor from `(tail, head, timestamp)` triples.
    pub fn from_triples(node_count: usize, triples: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let edges = triples
            .iter()
            .map(|&(tail, head, timestamp)| Edge {
                tail,
                head,
                timestamp,
            })
            .collect();
        Self::from_edges(node_count, edges)
    }

    pub fn with_node_features(mut self, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * self.node_count {
            return Err(Error::InvalidArgument(format!(
                "node features: expected {} values ({} nodes x {dim}), got {}",
                dim * self.node_count,
                self.node_count,
                data.len()
            )));
        }
        self.node_feature_dim = dim;
        self.node_features = data;
        Ok(self)
    }

    pub fn with_edge_features(mut self, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * self.edges.len() {
            return Err(Error::InvalidArgument(format!(
                "edge features: expected {} values ({} edges x {dim}), got {}",
                dim * self.edges.len(),
                self.edges.len(),
                data.len()
            )));
        }
        self.edge_feature_dim = dim;
        self.edge_features = data;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<Option<bool>>) -> Result<Self> {
        if labels.len() != self.edges.len() {
            return Err(Error::InvalidArgument(format!(
                "labels: expected {} entries, got {}",
                self.edges.len(),
                labels.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn with_node_keys(mut self, keys: Vec<u64>) -> Result<Self> {
        if keys.len() != self.node_count {
            return Err(Error::InvalidArgument(format!(
                "node keys: expected {} entries, got {}",
                self.node_count,
                keys.len()
            )));
        }
        self.node_keys = keys;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> Result<&Edge> {
        self.edges.get(e).ok_or(Error::InvalidEdge {
            id: e,
            count: self.edges.len(),
        })
    }

    /// External identifier of each dense node id.
    pub fn node_keys(&self) -> &[u64] {
        &self.node_keys
    }

    pub fn node_feature_dim(&self) -> usize {
        self.node_feature_dim
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_feature_dim
    }

    pub fn node_features(&self, v: NodeId) -> &[f64] {
        let d = self.node_feature_dim;
        &self.node_features[v * d..(v + 1) * d]
    }

    pub fn edge_features(&self, e: EdgeId) -> &[f64] {
        let d = self.edge_feature_dim;
        &self.edge_features[e * d..(e + 1) * d]
    }

    pub fn node_feature_data(&self) -> &[f64] {
        &self.node_features
    }

    pub fn edge_feature_data(&self) -> &[f64] {
        &self.edge_features
    }

    pub fn labels(&self) -> &[Option<bool>] {
        &self.labels
    }

    pub fn label(&self, e: EdgeId) -> Option<bool> {
        self.labels.get(e).copied().flatten()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.timestamp).collect()
    }

    fn check_node(&self, v: NodeId) -> Result<()> {
        if v >= self.node_count {
            return Err(Error::InvalidNode {
                id: v,
                count: self.node_count,
            });
        }
        Ok(())
    }

    /// Edges whose head is `v`, ascending by edge id.
    pub fn in_edges(&self, v: NodeId) -> Result<&[EdgeId]> {
        self.check_node(v)?;
        Ok(&self.in_index[v])
    }

    /// Edges whose tail is `v`, ascending by edge id.
    pub fn out_edges(&self, v: NodeId) -> Result<&[EdgeId]> {
        self.check_node(v)?;
        Ok(&self.out_index[v])
    }

    /// All edges touching `v`, ascending by edge id. A self-loop appears once.
    pub fn incident_edges(&self, v: NodeId) -> Result<Vec<EdgeId>> {
        self.check_node(v)?;
        let (a, b) = (&self.in_index[v], &self.out_index[v]);
        let mut merged = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            merged.push(next);
        }
        Ok(merged)
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.in_index.get(v).map_or(0, Vec::len)
    }

    pub fn out_degree(&self, v: NodeId) -> usize {
        self.out_index.get(v).map_or(0, Vec::len)
    }

    /// Number of parallel edges from `u` to `v`. Out-of-range ids count as 0.
    pub fn multiplicity(&self, u: NodeId, v: NodeId) -> usize {
        match self.out_index.get(u) {
            Some(out) => out.iter().filter(|&&e| self.edges[e].head == v).count(),
            None => 0,
        }
    }

    pub fn has_self_loop(&self) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.tail == e.head)
    }

    /// Same graph with every edge direction flipped; ids and features unchanged.
    pub fn reversed(&self) -> Self {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                tail: e.head,
                head: e.tail,
                timestamp: e.timestamp,
            })
            .collect();
        let mut g = Self::from_edges(self.node_count, edges).expect("same node set");
        g.node_keys = self.node_keys.clone();
        g.node_feature_dim = self.node_feature_dim;
        g.node_features = self.node_features.clone();
        g.edge_feature_dim = self.edge_feature_dim;
        g.edge_features = self.edge_features.clone();
        g.labels = self.labels.clone();
        g
    }

    /// Graph induced by a set of edges. Returns the subgraph together with the
    /// global node id of each local node and the global edge id of each local
    /// edge. Local ids follow ascending global ids.
    pub fn edge_subgraph(&self, edge_ids: &[EdgeId]) -> Result<(Self, Vec<NodeId>, Vec<EdgeId>)> {
        let mut edge_map: Vec<EdgeId> = edge_ids.to_vec();
        edge_map.sort_unstable();
        edge_map.dedup();
        for &e in &edge_map {
            self.edge(e)?;
        }
        let mut node_map: Vec<NodeId> = edge_map
            .iter()
            .flat_map(|&e| [self.edges[e].tail, self.edges[e].head])
            .collect();
        node_map.sort_unstable();
        node_map.dedup();
        let local = |global: NodeId| node_map.binary_search(&global).expect("endpoint present");

        let edges: Vec<Edge> = edge_map
            .iter()
            .map(|&e| {
                let ge = self.edges[e];
                Edge {
                    tail: local(ge.tail),
                    head: local(ge.head),
                    timestamp: ge.timestamp,
                }
            })
            .collect();
        let mut sub = Self::from_edges(node_map.len(), edges)?;
        sub.node_keys = node_map.iter().map(|&v| self.node_keys[v]).collect();
        sub.node_feature_dim = self.node_feature_dim;
        sub.node_features = node_map
            .iter()
            .flat_map(|&v| self.node_features(v).iter().copied())
            .collect();
        sub.edge_feature_dim = self.edge_feature_dim;
        sub.edge_features = edge_map
            .iter()
            .flat_map(|&e| self.edge_features(e).iter().copied())
            .collect();
        sub.labels = edge_map.iter().map(|&e| self.labels[e]).collect();
        Ok((sub, node_map, edge_map))
    }

    /// The event stream this graph was (or could have been) built from.
    pub fn to_event_stream(&self) -> EventStream {
        let records = self
            .edges
            .iter()
            .enumerate()
            .map(|(id, e)| Event {
                source: self.node_keys[e.tail],
                target: self.node_keys[e.head],
                timestamp: e.timestamp,
                features: self.edge_features(id).to_vec(),
            })
            .collect();
        ingest_events(records).expect("graph timestamps are finite")
    }
}

/// In-degree and out-degree one-hot node features, each capped at `cap`
/// with one extra overflow bucket: width `2 * (cap + 2)`.
pub fn degree_one_hot_features(g: &DirectedMultigraph, cap: usize) -> (usize, Vec<f64>) {
    let width = cap + 2;
    let dim = 2 * width;
    let mut data = vec![0.0; dim * g.node_count()];
    for v in 0..g.node_count() {
        let row = &mut data[v * dim..(v + 1) * dim];
        row[g.in_degree(v).min(cap + 1)] = 1.0;
        row[width + g.out_degree(v).min(cap + 1)] = 1.0;
    }
    (dim, data)
}
