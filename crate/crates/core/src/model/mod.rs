//! The GRANDE model: directional transformer message passing on a
//! multigraph and its dual, time encoding, cross-query attention and the
//! edge classifier.

pub mod attention;
mod config;
pub mod forward;
mod input;
mod params;

use std::path::Path;

pub use attention::{attention, offsets_from_minimum, time_encode, transformer_block, AttentionOutput, Connection};
pub use config::ModelConfig;
pub use forward::{forward, forward_with_features, AttentionTrace, ForwardOutput};
pub use input::GraphInput;
pub use params::{
    init_params, AttnWeights, BlockWeights, BranchWeights, CrossWeights, LayerWeights, Layout, ParamEntry, ParamKind,
    ParamStore,
};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-12;

/// A configured model together with its parameters.
#[derive(Clone, Debug)]
pub struct GrandeModel {
    config: ModelConfig,
    store: ParamStore,
    layout: Layout<usize>,
}

impl GrandeModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let (store, layout) = init_params(&config)?;
        Ok(Self { config, store, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn layout(&self) -> &Layout<usize> {
        &self.layout
    }

    /// Records all parameters on `tape`; returns the flat list (store order)
    /// and the same variables arranged by role.
    pub fn bind<'t>(&self, tape: &'t Tape) -> (Vec<Var<'t>>, Layout<Var<'t>>) {
        let vars = self.store.bind(tape);
        let layout = self.layout.map(|i| vars[i]);
        (vars, layout)
    }

    /// Forward pass on a fresh tape, returning one probability per target.
    pub fn predict(&self, input: &GraphInput) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let (_, w) = self.bind(&tape);
        let out = forward(&tape, &self.config, &w, input)?;
        Ok(out.probabilities.value().data().to_vec())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.store.write_checkpoint(std::io::BufWriter::new(f))
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let f = std::fs::File::open(path)?;
        self.store.load_checkpoint(std::io::BufReader::new(f))
    }
}

/// Mean binary cross-entropy over the targets that carry a label.
pub fn bce_loss<'t>(probabilities: Var<'t>, labels: &[Option<bool>]) -> Result<Var<'t>> {
    let tape = probabilities.tape();
    if probabilities.shape() != [labels.len(), 1] {
        return Err(Error::Shape {
            op: "bce_loss",
            lhs: probabilities.shape(),
            rhs: [labels.len(), 1],
        });
    }
    let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    if rows.is_empty() {
        return Err(Error::NoLabels);
    }
    let y: Vec<f64> = rows.iter().map(|&i| f64::from(u8::from(labels[i] == Some(true)))).collect();
    let n = rows.len();
    let p = probabilities.gather_rows(&rows)?.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    let y_pos = tape.constant(Tensor::column(y.clone()));
    let y_neg = tape.constant(Tensor::column(y.iter().map(|v| 1.0 - v).collect()));
    let one = tape.constant(Tensor::full(n, 1, 1.0));
    let pos = y_pos.mul(p.log())?;
    let neg = y_neg.mul(one.sub(p)?.log())?;
    Ok(pos.add(neg)?.sum().scale(-1.0 / n as f64))
}

/// `lambda * sum ||W||^2` over the weight matrices of the store.
pub fn l2_penalty<'t>(store: &ParamStore, vars: &[Var<'t>], lambda: f64) -> Result<Option<Var<'t>>> {
    if lambda == 0.0 {
        return Ok(None);
    }
    let mut total: Option<Var<'t>> = None;
    for (entry, &v) in store.entries().iter().zip(vars) {
        if entry.kind != ParamKind::Weight {
            continue;
        }
        let sq = v.mul(v)?.sum();
        total = Some(match total {
            Some(t) => t.add(sq)?,
            None => sq,
        });
    }
    Ok(total.map(|t| t.scale(lambda)))
}

/// BCE over labeled targets plus the L2 penalty.
pub fn objective<'t>(
    store: &ParamStore,
    vars: &[Var<'t>],
    probabilities: Var<'t>,
    labels: &[Option<bool>],
    lambda: f64,
) -> Result<Var<'t>> {
    let bce = bce_loss(probabilities, labels)?;
    match l2_penalty(store, vars, lambda)? {
        Some(reg) => bce.add(reg),
        None => Ok(bce),
    }
}
