use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use grande::data::{generate_synthetic, load_bitcoin, DatasetBundle, DEGREE_CAP};
use grande::graph::degree_one_hot_features;
use grande::io::{read_edge_list, read_feature_table};
use serde::Serialize;

use crate::config::{DatasetFormat, ExperimentConfig};

fn reader(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_edge_list(cfg: &ExperimentConfig, path: &Path) -> Result<DatasetBundle> {
    let g = read_edge_list(reader(path)?, &path.display().to_string())?;
    let (n, m) = (g.node_count(), g.edge_count());
    let (node_dim, x) = match &cfg.node_features_file {
        Some(p) => read_feature_table(reader(p)?, n, &p.display().to_string())?,
        None => degree_one_hot_features(&g, DEGREE_CAP),
    };
    let (edge_dim, z) = match &cfg.edge_features_file {
        Some(p) => read_feature_table(reader(p)?, m, &p.display().to_string())?,
        None => (1, vec![1.0; m]),
    };
    if node_dim == 0 || edge_dim == 0 {
        bail!("feature tables must have at least one column");
    }
    let g = g.with_node_features(node_dim, x)?.with_edge_features(edge_dim, z)?;
    Ok(DatasetBundle::chronological(g))
}

/// Loads the configured dataset and records its feature widths in `cfg`.
pub fn load(cfg: &mut ExperimentConfig) -> Result<DatasetBundle> {
    let bundle = match (cfg.format, cfg.dataset.clone()) {
        (DatasetFormat::Synthetic, _) => generate_synthetic(&cfg.synthetic(), cfg.seed)?,
        (DatasetFormat::Bitcoin, Some(path)) => load_bitcoin(&path)?,
        (DatasetFormat::EdgeList, Some(path)) => load_edge_list(cfg, &path)?,
        (format, None) => bail!("format {} needs a dataset path", format.name()),
    };
    cfg.node_features = bundle.graph.node_feature_dim();
    cfg.edge_features = bundle.graph.edge_feature_dim();
    Ok(bundle)
}

#[derive(Debug, Serialize)]
pub struct DatasetStats {
    pub nodes: usize,
    pub edges: usize,
    pub labeled: usize,
    pub positives: usize,
    pub negatives: usize,
    pub node_feature_dim: usize,
    pub edge_feature_dim: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub time_min: Option<f64>,
    pub time_max: Option<f64>,
    pub max_in_degree: usize,
    pub max_out_degree: usize,
    pub self_loops: usize,
}

pub fn stats(b: &DatasetBundle) -> DatasetStats {
    let g = &b.graph;
    let labeled = g.labels().iter().filter(|l| l.is_some()).count();
    let positives = b.positives();
    let times = g.timestamps();
    DatasetStats {
        nodes: g.node_count(),
        edges: g.edge_count(),
        labeled,
        positives,
        negatives: labeled - positives,
        node_feature_dim: g.node_feature_dim(),
        edge_feature_dim: g.edge_feature_dim(),
        train: b.train.len(),
        val: b.val.len(),
        test: b.test.len(),
        time_min: times.iter().copied().reduce(f64::min),
        time_max: times.iter().copied().reduce(f64::max),
        max_in_degree: (0..g.node_count()).map(|v| g.in_degree(v)).max().unwrap_or(0),
        max_out_degree: (0..g.node_count()).map(|v| g.out_degree(v)).max().unwrap_or(0),
        self_loops: g.edges().iter().filter(|e| e.tail == e.head).count(),
    }
}
