//! Learnable parameters: a flat named store plus a typed layout that maps
//! every architectural role to a slot in the store.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{checkpoint, xavier_uniform, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Matrices; the only kind under L2 regularization.
    Weight,
    Bias,
    NormScale,
    NormShift,
    Frequency,
}

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub value: Arc<Tensor>,
}

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    fn push(&mut self, name: String, kind: ParamKind, value: Tensor) -> usize {
        self.entries.push(ParamEntry {
            name,
            kind,
            value: Arc::new(value),
        });
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|e| e.name == name).map(|e| &*e.value)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn shapes(&self) -> Vec<[usize; 2]> {
        self.entries.iter().map(|e| e.value.shape()).collect()
    }

    /// Mutable access for optimizers; clones a tensor only if a tape still
    /// holds it.
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|e| Arc::make_mut(&mut e.value))
    }

    pub fn set(&mut self, index: usize, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[index];
        if entry.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "ParamStore::set",
                lhs: entry.value.shape(),
                rhs: value.shape(),
            });
        }
        entry.value = Arc::new(value);
        Ok(())
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.entries
            .iter()
            .map(|e| tape.leaf_shared(Arc::clone(&e.value)))
            .collect()
    }

    pub fn write_checkpoint<W: std::io::Write>(&self, w: W) -> Result<()> {
        let entries: Vec<(String, &Tensor)> = self
            .entries
            .iter()
            .map(|e| (e.name.clone(), &*e.value))
            .collect();
        checkpoint::write_checkpoint(w, &entries)
    }

    /// Replaces all values from a checkpoint whose names and shapes must
    /// match this store exactly.
    pub fn load_checkpoint<R: std::io::Read>(&mut self, r: R) -> Result<()> {
        let loaded = checkpoint::read_checkpoint(r)?;
        if loaded.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                loaded.len(),
                self.entries.len()
            )));
        }
        for ((name, t), e) in loaded.iter().zip(&self.entries) {
            if *name != e.name {
                return Err(Error::Checkpoint(format!("expected tensor {:?}, found {name:?}", e.name)));
            }
            if t.shape() != e.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {:?} does not match model shape {:?}",
                    t.shape(),
                    e.value.shape()
                )));
            }
        }
        for ((_, t), e) in loaded.into_iter().zip(&mut self.entries) {
            e.value = Arc::new(t);
        }
        Ok(())
    }
}

/// Weights of one edge-aware attention.
#[derive(Clone, Copy, Debug)]
pub struct AttnWeights<T> {
    pub query: T,
    pub key: T,
    pub value_node: T,
    pub value_edge: T,
}

/// Attention plus the two layer-norms and feed-forward of a transformer block.
#[derive(Clone, Copy, Debug)]
pub struct BlockWeights<T> {
    pub attn: AttnWeights<T>,
    pub norm1_scale: T,
    pub norm1_shift: T,
    pub ff_w1: T,
    pub ff_b1: T,
    pub ff_w2: T,
    pub ff_b2: T,
    pub norm2_scale: T,
    pub norm2_shift: T,
}

/// One directional branch: its two input projections and transformer block.
#[derive(Clone, Copy, Debug)]
pub struct BranchWeights<T> {
    /// Projection of the entity being updated and of its neighbors.
    pub proj_node: T,
    /// Projection of the connecting (edge or dual-edge) representations.
    pub proj_edge: T,
    pub block: BlockWeights<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct LayerWeights<T> {
    pub node_in: BranchWeights<T>,
    pub node_out: BranchWeights<T>,
    pub edge_in: Option<BranchWeights<T>>,
    pub edge_out: Option<BranchWeights<T>>,
}

#[derive(Clone, Copy, Debug)]
pub struct CrossWeights<T> {
    pub left_in: AttnWeights<T>,
    pub left_out: AttnWeights<T>,
    pub right_in: AttnWeights<T>,
    pub right_out: AttnWeights<T>,
}

#[derive(Clone, Debug)]
pub struct Layout<T> {
    pub embed_node_w: T,
    pub embed_node_b: T,
    pub embed_edge_w: T,
    pub embed_edge_b: T,
    pub frequencies: Option<T>,
    pub type_table: Option<T>,
    pub layers: Vec<LayerWeights<T>>,
    pub cross: Option<CrossWeights<T>>,
    pub cls_w1: T,
    pub cls_b1: T,
    pub cls_w2: T,
    pub cls_b2: T,
}

impl<T: Copy> AttnWeights<T> {
    pub fn map<U>(&self, f: &impl Fn(T) -> U) -> AttnWeights<U> {
        AttnWeights {
            query: f(self.query),
            key: f(self.key),
            value_node: f(self.value_node),
            value_edge: f(self.value_edge),
        }
    }
}

impl<T: Copy> BlockWeights<T> {
    pub fn map<U>(&self, f: &impl Fn(T) -> U) -> BlockWeights<U> {
        BlockWeights {
            attn: self.attn.map(f),
            norm1_scale: f(self.norm1_scale),
            norm1_shift: f(self.norm1_shift),
            ff_w1: f(self.ff_w1),
            ff_b1: f(self.ff_b1),
            ff_w2: f(self.ff_w2),
            ff_b2: f(self.ff_b2),
            norm2_scale: f(self.norm2_scale),
            norm2_shift: f(self.norm2_shift),
        }
    }
}

impl<T: Copy> BranchWeights<T> {
    pub fn map<U>(&self, f: &impl Fn(T) -> U) -> BranchWeights<U> {
        BranchWeights {
            proj_node: f(self.proj_node),
            proj_edge: f(self.proj_edge),
            block: self.block.map(f),
        }
    }
}

impl<T: Copy> Layout<T> {
    pub fn map<U>(&self, f: impl Fn(T) -> U) -> Layout<U> {
        Layout {
            embed_node_w: f(self.embed_node_w),
            embed_node_b: f(self.embed_node_b),
            embed_edge_w: f(self.embed_edge_w),
            embed_edge_b: f(self.embed_edge_b),
            frequencies: self.frequencies.map(&f),
            type_table: self.type_table.map(&f),
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    node_in: l.node_in.map(&f),
                    node_out: l.node_out.map(&f),
                    edge_in: l.edge_in.map(|b| b.map(&f)),
                    edge_out: l.edge_out.map(|b| b.map(&f)),
                })
                .collect(),
            cross: self.cross.map(|c| CrossWeights {
                left_in: c.left_in.map(&f),
                left_out: c.left_out.map(&f),
                right_in: c.right_in.map(&f),
                right_out: c.right_out.map(&f),
            }),
            cls_w1: f(self.cls_w1),
            cls_b1: f(self.cls_b1),
            cls_w2: f(self.cls_w2),
            cls_b2: f(self.cls_b2),
        }
    }
}

struct Builder {
    store: ParamStore,
    rng: ChaCha8Rng,
}

impl Builder {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let t = xavier_uniform(&mut self.rng, rows, cols);
        self.store.push(name, ParamKind::Weight, t)
    }

    fn bias(&mut self, name: String, cols: usize) -> usize {
        self.store.push(name, ParamKind::Bias, Tensor::zeros(1, cols))
    }

    fn attn(&mut self, prefix: &str, query_in: usize, key_in: usize, out: usize) -> AttnWeights<usize> {
        AttnWeights {
            query: self.weight(format!("{prefix}.query"), query_in, out),
            key: self.weight(format!("{prefix}.key"), key_in, out),
            value_node: self.weight(format!("{prefix}.value_node"), key_in, out),
            value_edge: self.weight(format!("{prefix}.value_edge"), key_in, out),
        }
    }

    fn block(&mut self, prefix: &str, width: usize, time: usize, ff: usize) -> BlockWeights<usize> {
        let attn = self.attn(&format!("{prefix}.attn"), width, width + time, width);
        BlockWeights {
            attn,
            norm1_scale: self
                .store
                .push(format!("{prefix}.norm1.scale"), ParamKind::NormScale, Tensor::full(1, width, 1.0)),
            norm1_shift: self
                .store
                .push(format!("{prefix}.norm1.shift"), ParamKind::NormShift, Tensor::zeros(1, width)),
            ff_w1: self.weight(format!("{prefix}.ff.w1"), width, ff),
            ff_b1: self.bias(format!("{prefix}.ff.b1"), ff),
            ff_w2: self.weight(format!("{prefix}.ff.w2"), ff, width),
            ff_b2: self.bias(format!("{prefix}.ff.b2"), width),
            norm2_scale: self
                .store
                .push(format!("{prefix}.norm2.scale"), ParamKind::NormScale, Tensor::full(1, width, 1.0)),
            norm2_shift: self
                .store
                .push(format!("{prefix}.norm2.shift"), ParamKind::NormShift, Tensor::zeros(1, width)),
        }
    }

    fn branch(&mut self, prefix: &str, cfg: &ModelConfig) -> BranchWeights<usize> {
        let (h, a) = (cfg.hidden, cfg.branch_width());
        BranchWeights {
            proj_node: self.weight(format!("{prefix}.proj_node"), h, a),
            proj_edge: self.weight(format!("{prefix}.proj_edge"), h, a),
            block: self.block(prefix, a, cfg.time_width(), cfg.ff_hidden),
        }
    }
}

/// Initial time-encoding frequencies `10^(-9 i / (k - 1))`, spanning
/// periods from seconds to decades.
fn initial_frequencies(k: usize) -> Tensor {
    let freq = (0..k)
        .map(|i| {
            let e = if k > 1 { 9.0 * i as f64 / (k - 1) as f64 } else { 0.0 };
            10f64.powf(-e)
        })
        .collect();
    Tensor::row(freq)
}

/// Allocates and initializes every parameter for `cfg` deterministically
/// from `cfg.seed`.
pub fn init_params(cfg: &ModelConfig) -> Result<(ParamStore, Layout<usize>)> {
    cfg.validate()?;
    let mut b = Builder {
        store: ParamStore::default(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let h = cfg.hidden;
    let embed_node_w = b.weight("embed.node.weight".into(), cfg.node_features, h);
    let embed_node_b = b.bias("embed.node.bias".into(), h);
    let embed_edge_w = b.weight("embed.edge.weight".into(), cfg.edge_features, h);
    let embed_edge_b = b.bias("embed.edge.bias".into(), h);
    let frequencies = cfg.use_time_encoding.then(|| {
        b.store.push(
            "time.frequencies".into(),
            ParamKind::Frequency,
            initial_frequencies(cfg.time_width() / 2),
        )
    });
    let type_table = cfg.use_dual.then(|| b.weight("type_embedding".into(), 4, h));

    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let node_in = b.branch(&format!("layer{l}.node_in"), cfg);
        let node_out = b.branch(&format!("layer{l}.node_out"), cfg);
        let (edge_in, edge_out) = if cfg.use_dual {
            (
                Some(b.branch(&format!("layer{l}.edge_in"), cfg)),
                Some(b.branch(&format!("layer{l}.edge_out"), cfg)),
            )
        } else {
            (None, None)
        };
        layers.push(LayerWeights {
            node_in,
            node_out,
            edge_in,
            edge_out,
        });
    }

    let cross = cfg.use_cross_query.then(|| {
        let a = cfg.branch_width();
        CrossWeights {
            left_in: b.attn("cross.left_in", h, h, a),
            left_out: b.attn("cross.left_out", h, h, a),
            right_in: b.attn("cross.right_in", h, h, a),
            right_out: b.attn("cross.right_out", h, h, a),
        }
    });

    let c = cfg.classifier_hidden;
    let cls_w1 = b.weight("classifier.w1".into(), cfg.classifier_input(), c);
    let cls_b1 = b.bias("classifier.b1".into(), c);
    let cls_w2 = b.weight("classifier.w2".into(), c, 1);
    let cls_b2 = b.bias("classifier.b2".into(), 1);

    let layout = Layout {
        embed_node_w,
        embed_node_b,
        embed_edge_w,
        embed_edge_b,
        frequencies,
        type_table,
        layers,
        cross,
        cls_w1,
        cls_b1,
        cls_w2,
        cls_b2,
    };
    Ok((b.store, layout))
}
