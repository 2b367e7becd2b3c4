use super::config::ModelConfig;
use crate::dual::{build_dual, AugmentedLineGraph, DualEdge};
use crate::error::{Error, Result};
use crate::graph::{DirectedMultigraph, EdgeId};
use crate::numerics::Tensor;

/// Everything the forward pass needs about one graph (or a disjoint union
/// of subgraphs): features, edge endpoints and times, the dual edges to use,
/// and which edges are classification targets.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub node_count: usize,
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub tails: Vec<usize>,
    pub heads: Vec<usize>,
    pub times: Vec<f64>,
    /// Dual edges in the local edge numbering; empty when the dual is unused.
    pub duals: Vec<DualEdge>,
    pub targets: Vec<EdgeId>,
    pub labels: Vec<Option<bool>>,
}

impl GraphInput {
    /// Packs `g` with an explicit dual graph (or none).
    pub fn new(g: &DirectedMultigraph, dual: Option<&AugmentedLineGraph>, targets: Vec<EdgeId>) -> Result<Self> {
        let m = g.edge_count();
        for &t in &targets {
            if t >= m {
                return Err(Error::InvalidEdge { id: t, count: m });
            }
        }
        if let Some(d) = dual {
            if d.node_count() != m {
                return Err(Error::InvalidArgument(format!(
                    "dual graph has {} nodes but the graph has {m} edges",
                    d.node_count()
                )));
            }
        }
        let n = g.node_count();
        let node_features = Tensor::new(n, g.node_feature_dim(), g.node_feature_data().to_vec())?;
        let edge_features = Tensor::new(m, g.edge_feature_dim(), g.edge_feature_data().to_vec())?;
        Ok(Self {
            node_count: n,
            node_features,
            edge_features,
            tails: g.edges().iter().map(|e| e.tail).collect(),
            heads: g.edges().iter().map(|e| e.head).collect(),
            times: g.timestamps(),
            duals: dual.map(|d| d.edges().to_vec()).unwrap_or_default(),
            labels: targets.iter().map(|&t| g.label(t)).collect(),
            targets,
        })
    }

    /// Packs `g`, building the dual graph the configuration asks for.
    pub fn for_config(g: &DirectedMultigraph, cfg: &ModelConfig, targets: Vec<EdgeId>) -> Result<Self> {
        if g.node_feature_dim() != cfg.node_features || g.edge_feature_dim() != cfg.edge_features {
            return Err(Error::Config(format!(
                "graph has feature widths (node {}, edge {}), model expects ({}, {})",
                g.node_feature_dim(),
                g.edge_feature_dim(),
                cfg.node_features,
                cfg.edge_features
            )));
        }
        let dual = if cfg.use_dual {
            Some(build_dual(g, cfg.dual_mode, cfg.use_causal_pruning)?)
        } else {
            None
        };
        Self::new(g, dual.as_ref(), targets)
    }

    pub fn edge_count(&self) -> usize {
        self.tails.len()
    }

    /// Disjoint union; node, edge and target ids of later parts are shifted
    /// past those of earlier parts.
    pub fn union(parts: &[GraphInput]) -> Result<Self> {
        let (fn_, fe) = match parts.first() {
            Some(p) => (p.node_features.cols(), p.edge_features.cols()),
            None => (0, 0),
        };
        let mut out = GraphInput {
            node_count: 0,
            node_features: Tensor::zeros(0, fn_),
            edge_features: Tensor::zeros(0, fe),
            tails: Vec::new(),
            heads: Vec::new(),
            times: Vec::new(),
            duals: Vec::new(),
            targets: Vec::new(),
            labels: Vec::new(),
        };
        let mut node_data = Vec::new();
        let mut edge_data = Vec::new();
        for p in parts {
            if p.node_features.cols() != fn_ || p.edge_features.cols() != fe {
                return Err(Error::Shape {
                    op: "GraphInput::union",
                    lhs: [fn_, fe],
                    rhs: [p.node_features.cols(), p.edge_features.cols()],
                });
            }
            let (no, eo) = (out.node_count, out.tails.len());
            node_data.extend_from_slice(p.node_features.data());
            edge_data.extend_from_slice(p.edge_features.data());
            out.tails.extend(p.tails.iter().map(|t| t + no));
            out.heads.extend(p.heads.iter().map(|h| h + no));
            out.times.extend_from_slice(&p.times);
            out.duals.extend(p.duals.iter().map(|d| DualEdge {
                from: d.from + eo,
                to: d.to + eo,
                kind: d.kind,
                common_node: d.common_node + no,
            }));
            out.targets.extend(p.targets.iter().map(|t| t + eo));
            out.labels.extend_from_slice(&p.labels);
            out.node_count += p.node_count;
        }
        let m = out.tails.len();
        out.node_features = Tensor::new(out.node_count, fn_, node_data)?;
        out.edge_features = Tensor::new(m, fe, edge_data)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::AdjacencyType;

    fn path() -> DirectedMultigraph {
        DirectedMultigraph::from_triples(3, &[(0, 1, 1.0), (1, 2, 2.0)])
            .unwrap()
            .with_node_features(1, vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_edge_features(1, vec![1.0, 1.0])
            .unwrap()
            .with_labels(vec![Some(true), None])
            .unwrap()
    }

    #[test]
    fn for_config_builds_pruned_dual() {
        let cfg = ModelConfig::default();
        let inp = GraphInput::for_config(&path(), &cfg, vec![0, 1]).unwrap();
        assert_eq!(inp.duals.len(), 1);
        assert_eq!(inp.duals[0].kind, AdjacencyType::HeadToTail);
        assert_eq!(inp.labels, vec![Some(true), None]);
        let reduced = GraphInput::for_config(&path(), &cfg.reduced(), vec![0]).unwrap();
        assert!(reduced.duals.is_empty());
    }

    #[test]
    fn feature_width_mismatch_is_reported() {
        let cfg = ModelConfig {
            node_features: 4,
            ..Default::default()
        };
        assert!(matches!(
            GraphInput::for_config(&path(), &cfg, vec![0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn union_offsets_ids() {
        let cfg = ModelConfig::default();
        let a = GraphInput::for_config(&path(), &cfg, vec![1]).unwrap();
        let u = GraphInput::union(&[a.clone(), a]).unwrap();
        assert_eq!(u.node_count, 6);
        assert_eq!(u.tails, vec![0, 1, 3, 4]);
        assert_eq!(u.targets, vec![1, 3]);
        assert_eq!(u.duals[1].from, 2);
        assert_eq!(u.duals[1].common_node, 4);
        assert_eq!(u.node_features.shape(), [6, 1]);
    }
}
