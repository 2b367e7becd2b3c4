//! Edge-to-node dual graphs: the strict line digraph, the augmented edge
//! adjacency graph with typed adjacencies, and causal pruning.
//!
//! Dual node `i` stands for edge `i` of the source graph. A dual edge
//! `a -> b` records the node `w` shared by edges `a` and `b` and the role
//! `w` plays in each of them. Edges that share both endpoints get one dual
//! edge per shared node.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{DirectedMultigraph, EdgeId, NodeId};

/// Role of a node within one edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Head,
    Tail,
}

/// How two edges meet at their common node. The first half is the common
/// node's role in the source dual node, the second half its role in the
/// destination dual node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdjacencyType {
    HeadToHead,
    HeadToTail,
    TailToHead,
    TailToTail,
}

impl AdjacencyType {
    pub const ALL: [AdjacencyType; 4] = [
        AdjacencyType::HeadToHead,
        AdjacencyType::HeadToTail,
        AdjacencyType::TailToHead,
        AdjacencyType::TailToTail,
    ];

    pub fn from_roles(from: Role, to: Role) -> Self {
        match (from, to) {
            (Role::Head, Role::Head) => AdjacencyType::HeadToHead,
            (Role::Head, Role::Tail) => AdjacencyType::HeadToTail,
            (Role::Tail, Role::Head) => AdjacencyType::TailToHead,
            (Role::Tail, Role::Tail) => AdjacencyType::TailToTail,
        }
    }

    pub fn roles(self) -> (Role, Role) {
        match self {
            AdjacencyType::HeadToHead => (Role::Head, Role::Head),
            AdjacencyType::HeadToTail => (Role::Head, Role::Tail),
            AdjacencyType::TailToHead => (Role::Tail, Role::Head),
            AdjacencyType::TailToTail => (Role::Tail, Role::Tail),
        }
    }

    /// Type of the same adjacency seen from the other edge.
    pub fn reverse(self) -> Self {
        let (a, b) = self.roles();
        Self::from_roles(b, a)
    }

    /// Row of this type in the type-embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdjacencyType::HeadToHead => "HeadToHead",
            AdjacencyType::HeadToTail => "HeadToTail",
            AdjacencyType::TailToHead => "TailToHead",
            AdjacencyType::TailToTail => "TailToTail",
        }
    }
}

impl fmt::Display for AdjacencyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdjacencyType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown adjacency type {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualEdge {
    pub from: EdgeId,
    pub to: EdgeId,
    pub kind: AdjacencyType,
    pub common_node: NodeId,
}

/// Dual graph over the edges of a directed multigraph.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedLineGraph {
    node_count: usize,
    edges: Vec<DualEdge>,
    in_index: Vec<Vec<usize>>,
    out_index: Vec<Vec<usize>>,
}

impl AugmentedLineGraph {
    /// Assembles a dual graph from explicit dual edges, kept in the given order.
    pub fn from_dual_edges(node_count: usize, edges: Vec<DualEdge>) -> Result<Self> {
        let mut in_index = vec![Vec::new(); node_count];
        let mut out_index = vec![Vec::new(); node_count];
        for (i, d) in edges.iter().enumerate() {
            for e in [d.from, d.to] {
                if e >= node_count {
                    return Err(Error::InvalidEdge {
                        id: e,
                        count: node_count,
                    });
                }
            }
            if d.from == d.to {
                return Err(Error::InvalidArgument(format!(
                    "dual edge {i} connects edge {} to itself",
                    d.from
                )));
            }
            out_index[d.from].push(i);
            in_index[d.to].push(i);
        }
        Ok(Self {
            node_count,
            edges,
            in_index,
            out_index,
        })
    }

    /// Number of dual nodes, equal to the edge count of the source graph.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[DualEdge] {
        &self.edges
    }

    /// Indices (into [`Self::edges`]) of dual edges pointing into dual node `e`.
    pub fn in_edges(&self, e: EdgeId) -> &[usize] {
        &self.in_index[e]
    }

    /// Indices of dual edges leaving dual node `e`.
    pub fn out_edges(&self, e: EdgeId) -> &[usize] {
        &self.out_index[e]
    }

    /// Dual-edge counts per adjacency type, indexed by [`AdjacencyType::index`].
    pub fn type_histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for d in &self.edges {
            h[d.kind.index()] += 1;
        }
        h
    }

    /// Debug export: `from_edge,to_edge,type,common_node` per line.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.edges {
            writeln!(w, "{},{},{},{}", d.from, d.to, d.kind, d.common_node)?;
        }
        Ok(())
    }
}

fn reject_self_loops(g: &DirectedMultigraph) -> Result<()> {
    match g.has_self_loop() {
        Some(edge) => Err(Error::SelfLoop {
            edge,
            node: g.edges()[edge].tail,
        }),
        None => Ok(()),
    }
}

fn role_of(g: &DirectedMultigraph, e: EdgeId, w: NodeId) -> Role {
    if g.edges()[e].head == w {
        Role::Head
    } else {
        Role::Tail
    }
}

/// Strict line digraph: `a -> b` iff the head of `a` is the tail of `b`.
pub fn line_digraph(g: &DirectedMultigraph) -> Result<AugmentedLineGraph> {
    reject_self_loops(g)?;
    let mut duals = Vec::new();
    for (a, edge) in g.edges().iter().enumerate() {
        let w = edge.head;
        for &b in g.out_edges(w)? {
            duals.push(DualEdge {
                from: a,
                to: b,
                kind: AdjacencyType::HeadToTail,
                common_node: w,
            });
        }
    }
    duals.sort_unstable();
    AugmentedLineGraph::from_dual_edges(g.edge_count(), duals)
}

/// Augmented edge adjacency graph: one typed dual edge `a -> b` for every
/// ordered pair of distinct edges and every node they share.
pub fn augmented_edge_graph(g: &DirectedMultigraph) -> Result<AugmentedLineGraph> {
    reject_self_loops(g)?;
    let mut duals = Vec::new();
    for (a, edge) in g.edges().iter().enumerate() {
        for (w, role_a) in [(edge.tail, Role::Tail), (edge.head, Role::Head)] {
            for list in [g.in_edges(w)?, g.out_edges(w)?] {
                for &b in list {
                    if b == a {
                        continue;
                    }
                    duals.push(DualEdge {
                        from: a,
                        to: b,
                        kind: AdjacencyType::from_roles(role_a, role_of(g, b, w)),
                        common_node: w,
                    });
                }
            }
        }
    }
    duals.sort_unstable();
    AugmentedLineGraph::from_dual_edges(g.edge_count(), duals)
}

/// Drops dual edges `a -> b` whose destination edge is strictly older than
/// the source edge (`time[b] < time[a]`). Equal times keep both directions.
pub fn causal_prune(lg: &AugmentedLineGraph, times: &[f64]) -> Result<AugmentedLineGraph> {
    if times.len() != lg.node_count() {
        return Err(Error::MissingTimestamps {
            given: times.len(),
            expected: lg.node_count(),
        });
    }
    let kept = lg
        .edges()
        .iter()
        .filter(|d| times[d.to] >= times[d.from])
        .copied()
        .collect();
    AugmentedLineGraph::from_dual_edges(lg.node_count(), kept)
}

/// Which dual graph feeds the edge branches of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    #[default]
    Augmented,
    PlainLine,
}

impl FromStr for DualMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "augmented" => Ok(DualMode::Augmented),
            "plain_line" => Ok(DualMode::PlainLine),
            other => Err(Error::Config(format!(
                "dual_mode must be augmented or plain_line, got {other:?}"
            ))),
        }
    }
}

/// Builds the dual of `g` in the requested mode, optionally causally pruned.
pub fn build_dual(g: &DirectedMultigraph, mode: DualMode, prune: bool) -> Result<AugmentedLineGraph> {
    let lg = match mode {
        DualMode::Augmented => augmented_edge_graph(g)?,
        DualMode::PlainLine => line_digraph(g)?,
    };
    if prune {
        causal_prune(&lg, &g.timestamps())
    } else {
        Ok(lg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> DirectedMultigraph {
        // a=0 -> b=1 -> c=2
        DirectedMultigraph::from_triples(3, &[(0, 1, 0.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn reverse_swaps_roles() {
        assert_eq!(AdjacencyType::HeadToTail.reverse(), AdjacencyType::TailToHead);
        assert_eq!(AdjacencyType::HeadToHead.reverse(), AdjacencyType::HeadToHead);
        for t in AdjacencyType::ALL {
            assert_eq!(t.reverse().reverse(), t);
            assert_eq!(t.as_str().parse::<AdjacencyType>().unwrap(), t);
        }
    }

    #[test]
    fn path_line_digraph() {
        let lg = line_digraph(&path()).unwrap();
        assert_eq!(lg.node_count(), 2);
        assert_eq!(
            lg.edges(),
            &[DualEdge {
                from: 0,
                to: 1,
                kind: AdjacencyType::HeadToTail,
                common_node: 1
            }]
        );
    }

    #[test]
    fn path_augmented() {
        let lg = augmented_edge_graph(&path()).unwrap();
        assert_eq!(
            lg.edges(),
            &[
                DualEdge {
                    from: 0,
                    to: 1,
                    kind: AdjacencyType::HeadToTail,
                    common_node: 1
                },
                DualEdge {
                    from: 1,
                    to: 0,
                    kind: AdjacencyType::TailToHead,
                    common_node: 1
                },
            ]
        );
    }

    #[test]
    fn single_edge_has_no_dual_edges() {
        let g = DirectedMultigraph::from_triples(2, &[(0, 1, 0.0)]).unwrap();
        assert_eq!(line_digraph(&g).unwrap().edge_count(), 0);
        assert_eq!(augmented_edge_graph(&g).unwrap().edge_count(), 0);
        assert_eq!(augmented_edge_graph(&g).unwrap().node_count(), 1);
    }

    #[test]
    fn parallel_edges_emit_per_shared_node() {
        let g = DirectedMultigraph::from_triples(2, &[(0, 1, 0.0), (0, 1, 1.0)]).unwrap();
        let lg = augmented_edge_graph(&g).unwrap();
        let mut got: Vec<_> = lg.edges().iter().map(|d| (d.from, d.to, d.kind, d.common_node)).collect();
        got.sort();
        assert_eq!(
            got,
            vec![
                (0, 1, AdjacencyType::HeadToHead, 1),
                (0, 1, AdjacencyType::TailToTail, 0),
                (1, 0, AdjacencyType::HeadToHead, 1),
                (1, 0, AdjacencyType::TailToTail, 0),
            ]
        );
    }

    #[test]
    fn anti_parallel_edges() {
        let g = DirectedMultigraph::from_triples(2, &[(0, 1, 0.0), (1, 0, 1.0)]).unwrap();
        let lg = augmented_edge_graph(&g).unwrap();
        let got: Vec<_> = lg.edges().iter().map(|d| (d.from, d.to, d.kind, d.common_node)).collect();
        assert_eq!(
            got,
            vec![
                (0, 1, AdjacencyType::HeadToTail, 1),
                (0, 1, AdjacencyType::TailToHead, 0),
                (1, 0, AdjacencyType::HeadToTail, 0),
                (1, 0, AdjacencyType::TailToHead, 1),
            ]
        );
    }

    #[test]
    fn self_loops_rejected() {
        let g = DirectedMultigraph::from_triples(2, &[(0, 1, 0.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(augmented_edge_graph(&g), Err(Error::SelfLoop { edge: 1, node: 1 })));
        assert!(matches!(line_digraph(&g), Err(Error::SelfLoop { .. })));
    }

    #[test]
    fn prune_requires_all_timestamps() {
        let lg = augmented_edge_graph(&path()).unwrap();
        assert!(matches!(
            causal_prune(&lg, &[0.0]),
            Err(Error::MissingTimestamps { given: 1, expected: 2 })
        ));
    }

    #[test]
    fn prune_keeps_forward_and_ties() {
        let lg = augmented_edge_graph(&path()).unwrap();
        let pruned = causal_prune(&lg, &[0.0, 1.0]).unwrap();
        assert_eq!(pruned.edge_count(), 1);
        assert_eq!(pruned.edges()[0].from, 0);
        let tied = causal_prune(&lg, &[3.0, 3.0]).unwrap();
        assert_eq!(tied.edge_count(), 2);
    }

    #[test]
    fn export_format() {
        let lg = augmented_edge_graph(&path()).unwrap();
        let mut buf = Vec::new();
        lg.write_edge_list(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,1,HeadToTail,1\n1,0,TailToHead,1\n");
    }
}
