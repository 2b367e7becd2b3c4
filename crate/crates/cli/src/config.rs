//! The flat experiment configuration: a TOML file, then command-line flags
//! on top. Every key of the file has a flag of the same name.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use grande::data::SyntheticSpec;
use grande::dual::DualMode;
use grande::model::ModelConfig;
use grande::sampler::SamplerConfig;
use grande::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// `source,target,rating,time` lines (SNAP signed trust networks).
    Bitcoin,
    /// `tail,head,timestamp[,label]` lines with optional feature tables.
    EdgeList,
    /// The sink-hub benchmark, generated in memory.
    #[default]
    Synthetic,
}

impl DatasetFormat {
    pub fn name(self) -> &'static str {
        match self {
            DatasetFormat::Bitcoin => "bitcoin",
            DatasetFormat::EdgeList => "edge_list",
            DatasetFormat::Synthetic => "synthetic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format: DatasetFormat,
    pub dataset: Option<PathBuf>,
    pub node_features_file: Option<PathBuf>,
    pub edge_features_file: Option<PathBuf>,
    pub synthetic_nodes: usize,
    pub synthetic_edges: usize,
    pub sink_fraction: f64,
    pub sink_probability: f64,
    pub output_dir: PathBuf,

    pub hidden: usize,
    pub layers: usize,
    pub ff_hidden: usize,
    pub time_dim: usize,
    pub classifier_hidden: usize,
    pub node_features: usize,
    pub edge_features: usize,
    pub use_dual: bool,
    pub use_time_encoding: bool,
    pub use_cross_query: bool,
    pub use_causal_pruning: bool,
    pub dual_mode: DualMode,
    pub use_out_branch: bool,

    pub hops: usize,
    pub max_edges: usize,
    pub temporal_filter: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub eval_period: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let s = SamplerConfig::default();
        let t = TrainConfig::default();
        let syn = SyntheticSpec::default();
        Self {
            format: DatasetFormat::default(),
            dataset: None,
            node_features_file: None,
            edge_features_file: None,
            synthetic_nodes: syn.nodes,
            synthetic_edges: syn.edges,
            sink_fraction: syn.sink_fraction,
            sink_probability: syn.sink_probability,
            output_dir: PathBuf::from("runs/latest"),
            hidden: m.hidden,
            layers: m.layers,
            ff_hidden: m.ff_hidden,
            time_dim: m.time_dim,
            classifier_hidden: m.classifier_hidden,
            node_features: m.node_features,
            edge_features: m.edge_features,
            use_dual: m.use_dual,
            use_time_encoding: m.use_time_encoding,
            use_cross_query: m.use_cross_query,
            use_causal_pruning: m.use_causal_pruning,
            dual_mode: m.dual_mode,
            use_out_branch: m.use_out_branch,
            hops: s.hops,
            max_edges: s.max_edges,
            temporal_filter: s.temporal_filter,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            l2: t.l2,
            eval_period: t.eval_period,
            seed: t.seed,
        }
    }
}

/// One optional flag per configuration key.
#[derive(Args, Clone, Debug, Default, Serialize)]
pub struct ConfigArgs {
    /// Flat TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<DatasetFormat>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_features_file: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_features_file: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_nodes: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_edges: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sink_fraction: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sink_probability: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ff_hidden: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_dim: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classifier_hidden: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_dual: Option<bool>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_time_encoding: Option<bool>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_cross_query: Option<bool>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_causal_pruning: Option<bool>,
    #[arg(long, global = true, value_parser = parse_dual_mode)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual_mode: Option<DualMode>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub use_out_branch: Option<bool>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hops: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_edges: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temporal_filter: Option<bool>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_period: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn parse_dual_mode(s: &str) -> std::result::Result<DualMode, String> {
    s.parse().map_err(|e: grande::Error| e.to_string())
}

impl ConfigArgs {
    /// File values first, then flags; unset keys keep their defaults.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut table = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                text.parse::<toml::Table>()
                    .map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.message()))?
            }
            None => toml::Table::new(),
        };
        let flags = toml::Table::try_from(self).context("encoding command-line flags")?;
        table.extend(flags);
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow::anyhow!("invalid configuration: {}", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            layers: self.layers,
            ff_hidden: self.ff_hidden,
            time_dim: self.time_dim,
            classifier_hidden: self.classifier_hidden,
            node_features: self.node_features,
            edge_features: self.edge_features,
            use_dual: self.use_dual,
            use_time_encoding: self.use_time_encoding,
            use_cross_query: self.use_cross_query,
            use_causal_pruning: self.use_causal_pruning,
            dual_mode: self.dual_mode,
            use_out_branch: self.use_out_branch,
            seed: self.seed,
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            hops: self.hops,
            max_edges: self.max_edges,
            batch_size: self.batch_size,
            seed: self.seed,
            temporal_filter: self.temporal_filter,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            l2: self.l2,
            eval_period: self.eval_period,
            seed: self.seed,
        }
    }

    pub fn synthetic(&self) -> SyntheticSpec {
        SyntheticSpec {
            nodes: self.synthetic_nodes,
            edges: self.synthetic_edges,
            sink_fraction: self.sink_fraction,
            sink_probability: self.sink_probability,
        }
    }

    /// Copies the model switches of `m` into this configuration.
    pub fn with_model(&self, m: &ModelConfig) -> Self {
        Self {
            hidden: m.hidden,
            layers: m.layers,
            ff_hidden: m.ff_hidden,
            time_dim: m.time_dim,
            classifier_hidden: m.classifier_hidden,
            node_features: m.node_features,
            edge_features: m.edge_features,
            use_dual: m.use_dual,
            use_time_encoding: m.use_time_encoding,
            use_cross_query: m.use_cross_query,
            use_causal_pruning: m.use_causal_pruning,
            dual_mode: m.dual_mode,
            use_out_branch: m.use_out_branch,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != DatasetFormat::Synthetic && self.dataset.is_none() {
            bail!("format {} needs a dataset path", self.format.name());
        }
        for path in [&self.dataset, &self.node_features_file, &self.edge_features_file]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                bail!("{} does not exist", path.display());
            }
        }
        self.sampler().validate()?;
        self.train().validate()?;
        let mut m = self.model();
        // Feature widths come from the dataset and are checked once it is loaded.
        m.node_features = m.node_features.max(1);
        m.edge_features = m.edge_features.max(1);
        m.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the resolved configuration, excluding the output directory.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("configuration serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))
    }
}
