//! Datasets: the Bitcoin trust networks, a synthetic sink-hub benchmark,
//! chronological splitting, and dual-graph size statistics.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{AdjacencyType, DualMode};
use crate::error::{Error, Result};
use crate::graph::{degree_one_hot_features, DirectedMultigraph, Edge, EdgeId};

/// Degree one-hot cap used for every dataset.
pub const DEGREE_CAP: usize = 99;

/// A featurized, labeled graph with disjoint target splits.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub graph: DirectedMultigraph,
    pub train: Vec<EdgeId>,
    pub val: Vec<EdgeId>,
    pub test: Vec<EdgeId>,
}

impl DatasetBundle {
    /// Splits the labeled edges of `graph` chronologically 70/10/20.
    pub fn chronological(graph: DirectedMultigraph) -> Self {
        let (train, val, test) = chronological_split(&graph, 0.7, 0.1);
        Self { graph, train, val, test }
    }

    pub fn positives(&self) -> usize {
        self.graph.labels().iter().filter(|l| **l == Some(true)).count()
    }
}

/// Orders labeled edges by (timestamp, id) and cuts after the first
/// `floor(train * m)` and `floor((train + val) * m)` of them.
pub fn chronological_split(g: &DirectedMultigraph, train: f64, val: f64) -> (Vec<EdgeId>, Vec<EdgeId>, Vec<EdgeId>) {
    let mut labeled: Vec<EdgeId> = (0..g.edge_count()).filter(|&e| g.label(e).is_some()).collect();
    labeled.sort_by(|&a, &b| g.edges()[a].timestamp.total_cmp(&g.edges()[b].timestamp).then(a.cmp(&b)));
    let m = labeled.len();
    // Integer percentages avoid 0.7 * 10 = 6.999... style truncation.
    let a = (m * (train * 1000.0).round() as usize) / 1000;
    let b = (m * ((train + val) * 1000.0).round() as usize) / 1000;
    let test = labeled.split_off(b);
    let val = labeled.split_off(a);
    (labeled, val, test)
}

/// Adds the standard node features (in/out degree one-hots) and a constant
/// scalar edge feature.
pub fn standard_features(g: DirectedMultigraph) -> Result<DirectedMultigraph> {
    let (dim, x) = degree_one_hot_features(&g, DEGREE_CAP);
    let m = g.edge_count();
    g.with_node_features(dim, x)?.with_edge_features(1, vec![1.0; m])
}

struct RatingRecord {
    source: u64,
    target: u64,
    rating: i64,
    time: f64,
}

fn parse_bitcoin_line(line: &str, source: &str, number: usize) -> Result<RatingRecord> {
    let err = |message: String| Error::Parse {
        path: source.to_string(),
        line: number,
        message,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 fields source,target,rating,time; found {}", fields.len())));
    }
    let source_id = fields[0].parse().map_err(|e| err(format!("source id {:?}: {e}", fields[0])))?;
    let target_id = fields[1].parse().map_err(|e| err(format!("target id {:?}: {e}", fields[1])))?;
    let rating: i64 = fields[2].parse().map_err(|e| err(format!("rating {:?}: {e}", fields[2])))?;
    if !(-10..=10).contains(&rating) {
        return Err(err(format!("rating {rating} outside [-10, 10]")));
    }
    let time: f64 = fields[3].parse().map_err(|e| err(format!("time {:?}: {e}", fields[3])))?;
    if !time.is_finite() {
        return Err(err(format!("time {time} is not finite")));
    }
    Ok(RatingRecord {
        source: source_id,
        target: target_id,
        rating,
        time,
    })
}

/// Parses a `source,target,rating,time` file into a chronologically ordered
/// graph labeled `rating < 0`. Nodes are numbered by ascending external id.
/// The rating itself is discarded after labeling.
pub fn read_bitcoin<R: BufRead>(reader: R, source: &str) -> Result<DirectedMultigraph> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        records.push(parse_bitcoin_line(trimmed, source, i + 1)?);
    }
    records.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut keys: Vec<u64> = records.iter().flat_map(|r| [r.source, r.target]).collect();
    keys.sort_unstable();
    keys.dedup();
    let local = |k: u64| keys.binary_search(&k).expect("key collected");
    let edges = records
        .iter()
        .map(|r| Edge {
            tail: local(r.source),
            head: local(r.target),
            timestamp: r.time,
        })
        .collect();
    let labels = records.iter().map(|r| Some(r.rating < 0)).collect();
    DirectedMultigraph::from_edges(keys.len(), edges)?
        .with_node_keys(keys.clone())?
        .with_labels(labels)
}

fn open_maybe_gzip(path: &Path) -> Result<Box<dyn BufRead>> {
    let f = File::open(path)?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(flate2::read::GzDecoder::new(f))
    } else {
        Box::new(f)
    };
    Ok(Box::new(BufReader::new(reader)))
}

/// Loads a Bitcoin trust network (plain or gzip CSV), featurizes it and
/// splits it chronologically.
pub fn load_bitcoin(path: &Path) -> Result<DatasetBundle> {
    let g = read_bitcoin(open_maybe_gzip(path)?, &path.display().to_string())?;
    Ok(DatasetBundle::chronological(standard_features(g)?))
}

/// Parameters of the sink-hub benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub edges: usize,
    /// Fraction of nodes that only ever receive.
    pub sink_fraction: f64,
    /// Probability that an edge points into a sink.
    pub sink_probability: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            nodes: 400,
            edges: 2000,
            sink_fraction: 0.1,
            sink_probability: 0.3,
        }
    }
}

/// Labels each edge 1 iff its head has out-degree 0 and in-degree >= 3.
pub fn sink_hub_labels(g: &DirectedMultigraph) -> Vec<Option<bool>> {
    g.edges()
        .iter()
        .map(|e| Some(g.out_degree(e.head) == 0 && g.in_degree(e.head) >= 3))
        .collect()
}

/// Random multigraph whose edge labels follow [`sink_hub_labels`]. Edge `i`
/// has timestamp `i`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<DatasetBundle> {
    let infeasible = |why: &str| Err(Error::InvalidArgument(format!("infeasible synthetic spec: {why}")));
    if !(0.0..=1.0).contains(&spec.sink_fraction) || !(0.0..=1.0).contains(&spec.sink_probability) {
        return infeasible("fractions must lie in [0, 1]");
    }
    let sinks = (spec.nodes as f64 * spec.sink_fraction).round() as usize;
    let sources = spec.nodes.saturating_sub(sinks);
    if spec.edges > 0 && sources < 2 && (sinks == 0 || sources == 0) {
        return infeasible("need at least two non-sink nodes, or one non-sink and one sink");
    }
    if spec.edges > 0 && sources == 0 {
        return infeasible("every node is a sink");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = (0..spec.nodes).collect();
    ids.shuffle(&mut rng);
    let (sink_ids, source_ids) = ids.split_at(sinks);
    let mut edges = Vec::with_capacity(spec.edges);
    for i in 0..spec.edges {
        let tail = source_ids[rng.gen_range(0..sources)];
        let to_sink = !sink_ids.is_empty() && (sources < 2 || rng.gen_bool(spec.sink_probability));
        let head = if to_sink {
            sink_ids[rng.gen_range(0..sinks)]
        } else {
            loop {
                let h = source_ids[rng.gen_range(0..sources)];
                if h != tail {
                    break h;
                }
            }
        };
        edges.push(Edge {
            tail,
            head,
            timestamp: i as f64,
        });
    }
    let g = DirectedMultigraph::from_edges(spec.nodes, edges)?;
    let labels = sink_hub_labels(&g);
    let g = standard_features(g.with_labels(labels)?)?;
    Ok(DatasetBundle::chronological(g))
}

/// Size statistics of the dual graph of a whole dataset, obtained by
/// counting incidences rather than materializing dual edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualStats {
    pub mode: DualMode,
    pub dual_nodes: usize,
    pub dual_edges: u64,
    /// Counts per adjacency type, in [`AdjacencyType::ALL`] order.
    pub type_histogram: [u64; 4],
    pub pruned_dual_edges: u64,
    /// Fraction of dual edges removed by causal pruning (0 when there are
    /// none).
    pub pruning_ratio: f64,
    pub max_dual_out_degree: u64,
    pub max_pruned_dual_out_degree: u64,
}

/// Number of elements of the sorted slice `sorted` that are `>= t`.
fn count_at_least(sorted: &[f64], t: f64) -> u64 {
    (sorted.len() - sorted.partition_point(|&x| x < t)) as u64
}

fn equal_time_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let k = (j - i) as u64;
        total += k * (k - 1);
        i = j;
    }
    total
}

pub fn inspect_dual(g: &DirectedMultigraph, mode: DualMode) -> Result<DualStats> {
    if let Some(e) = g.has_self_loop() {
        return Err(Error::SelfLoop {
            edge: e,
            node: g.edges()[e].tail,
        });
    }
    let t: Vec<f64> = g.edges().iter().map(|e| e.timestamp).collect();
    let sorted_times = |list: &[EdgeId]| -> Vec<f64> {
        let mut v: Vec<f64> = list.iter().map(|&e| t[e]).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let mut hist = [0u64; 4];
    let mut kept = 0u64;
    let mut out_deg = vec![0u64; g.edge_count()];
    let mut pruned_out_deg = vec![0u64; g.edge_count()];
    for w in 0..g.node_count() {
        let ins = g.in_edges(w)?;
        let outs = g.out_edges(w)?;
        let (a, b) = (ins.len() as u64, outs.len() as u64);
        match mode {
            DualMode::Augmented => {
                hist[AdjacencyType::HeadToHead.index()] += a * a.saturating_sub(1);
                hist[AdjacencyType::TailToTail.index()] += b * b.saturating_sub(1);
                hist[AdjacencyType::HeadToTail.index()] += a * b;
                hist[AdjacencyType::TailToHead.index()] += a * b;
                let all: Vec<EdgeId> = ins.iter().chain(outs).copied().collect();
                let times = sorted_times(&all);
                let k = all.len() as u64;
                let equal = equal_time_pairs(&times);
                kept += equal + (k * k.saturating_sub(1) - equal) / 2;
                for &e in &all {
                    out_deg[e] += k - 1;
                    pruned_out_deg[e] += count_at_least(&times, t[e]) - 1;
                }
            }
            DualMode::PlainLine => {
                hist[AdjacencyType::HeadToTail.index()] += a * b;
                let out_times = sorted_times(outs);
                for &e in ins {
                    let later = count_at_least(&out_times, t[e]);
                    kept += later;
                    out_deg[e] += b;
                    pruned_out_deg[e] += later;
                }
            }
        }
    }
    let total: u64 = hist.iter().sum();
    Ok(DualStats {
        mode,
        dual_nodes: g.edge_count(),
        dual_edges: total,
        type_histogram: hist,
        pruned_dual_edges: kept,
        pruning_ratio: if total == 0 {
            0.0
        } else {
            (total - kept) as f64 / total as f64
        },
        max_dual_out_degree: out_deg.iter().copied().max().unwrap_or(0),
        max_pruned_dual_out_degree: pruned_out_deg.iter().copied().max().unwrap_or(0),
    })
}
