//! Mini-batch training with periodic validation-based model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedMultigraph, EdgeId};
use crate::metrics::{auc, evaluate, MetricsReport};
use crate::model::{bce_loss, forward, GrandeModel, GraphInput, ParamKind};
use crate::numerics::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::sampler::{sample_all, SamplerConfig};

/// Subgraphs per tape. Gradients of chunks are summed in chunk order, so
/// results do not depend on the number of worker threads.
pub const CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Validate every this many optimizer steps.
    pub eval_period: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            learning_rate: 1e-4,
            l2: 1e-4,
            eval_period: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_period == 0 {
            return Err(Error::Config("batch_size and eval_period must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive and l2 non-negative (got {}, {})",
                self.learning_rate, self.l2
            )));
        }
        Ok(())
    }
}

/// One periodic validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub epoch: usize,
    pub val_auc: f64,
    /// Mean training objective over the steps since the previous point
    /// (`None` before the first step).
    pub train_loss: Option<f64>,
    pub improved: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub steps: usize,
    pub history: Vec<EvalPoint>,
    pub best_step: usize,
    pub best_val_auc: f64,
    pub last_batch_bce: Option<f64>,
    pub test: MetricsReport,
}

/// Precomputed model inputs for a list of targets, one per target.
pub struct PreparedSplit {
    pub targets: Vec<EdgeId>,
    pub inputs: Vec<GraphInput>,
}

impl PreparedSplit {
    pub fn new(g: &DirectedMultigraph, targets: &[EdgeId], sampler: &SamplerConfig, model: &GrandeModel) -> Result<Self> {
        let subgraphs = sample_all(g, targets, sampler, model.config())?;
        let inputs = subgraphs.par_iter().map(|s| s.to_input()).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            targets: targets.to_vec(),
            inputs,
        })
    }

    pub fn labels(&self) -> Vec<Option<bool>> {
        self.inputs.iter().map(|i| i.labels[0]).collect()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Scores every target of `split`, batching `batch_size` subgraphs per
/// forward pass.
pub fn predict_split(model: &GrandeModel, split: &PreparedSplit, batch_size: usize) -> Result<Vec<f64>> {
    let chunks: Vec<Vec<f64>> = split
        .inputs
        .par_chunks(batch_size.max(1))
        .map(|c| model.predict(&GraphInput::union(c)?))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Scores and labels of the labeled targets of `split`.
pub fn scored_labels(model: &GrandeModel, split: &PreparedSplit, batch_size: usize) -> Result<(Vec<f64>, Vec<bool>)> {
    let scores = predict_split(model, split, batch_size)?;
    let labels = split.labels();
    Ok(scores
        .into_iter()
        .zip(labels)
        .filter_map(|(s, l)| l.map(|y| (s, y)))
        .unzip())
}

pub fn evaluate_split(model: &GrandeModel, split: &PreparedSplit, batch_size: usize) -> Result<MetricsReport> {
    let (s, y) = scored_labels(model, split, batch_size)?;
    evaluate(&s, &y)
}

/// Objective value and parameter gradients for one batch of inputs.
/// Returns `(bce, objective, gradients)`.
pub fn batch_gradients(model: &GrandeModel, batch: &[&GraphInput], l2: f64) -> Result<(f64, f64, Vec<Tensor>)> {
    let labeled: usize = batch.iter().map(|i| i.labels.iter().filter(|l| l.is_some()).count()).sum();
    if labeled == 0 {
        return Err(Error::NoLabels);
    }
    let parts: Vec<(f64, Vec<Tensor>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<(f64, Vec<Tensor>)> {
            let owned: Vec<GraphInput> = chunk.iter().map(|i| (*i).clone()).collect();
            let input = GraphInput::union(&owned)?;
            let n = input.labels.iter().filter(|l| l.is_some()).count();
            let tape = Tape::new();
            let (vars, w) = model.bind(&tape);
            if n == 0 {
                let zeros = vars.iter().map(|v| Tensor::zeros(v.shape()[0], v.shape()[1])).collect();
                return Ok((0.0, zeros));
            }
            let out = forward(&tape, model.config(), &w, &input)?;
            let loss = bce_loss(out.probabilities, &input.labels)?.scale(n as f64 / labeled as f64);
            let grads = tape.backward(loss)?;
            Ok((loss.value().item(), vars.iter().map(|&v| grads.get_or_zeros(v)).collect()))
        })
        .collect::<Result<_>>()?;

    let mut iter = parts.into_iter();
    let (mut bce, mut total) = iter.next().expect("batch is non-empty");
    for (l, g) in iter {
        bce += l;
        for (t, gi) in total.iter_mut().zip(g) {
            t.data_mut().iter_mut().zip(gi.data()).for_each(|(a, b)| *a += b);
        }
    }
    let mut objective = bce;
    if l2 > 0.0 {
        for (entry, grad) in model.params().entries().iter().zip(total.iter_mut()) {
            if entry.kind != ParamKind::Weight {
                continue;
            }
            let w = entry.value.data();
            objective += l2 * w.iter().map(|v| v * v).sum::<f64>();
            grad.data_mut().iter_mut().zip(w).for_each(|(g, v)| *g += 2.0 * l2 * v);
        }
    }
    Ok((bce, objective, total))
}

/// Trains `model` in place and leaves it holding the best validated
/// parameters. Validation happens before the first step, every
/// `eval_period` steps, and after the last step.
pub fn train(
    model: &mut GrandeModel,
    train_split: &PreparedSplit,
    val_split: &PreparedSplit,
    test_split: &PreparedSplit,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EvalPoint),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_split.is_empty() && cfg.epochs > 0 {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(cfg.learning_rate), model.params().shapes());
    let mut history = Vec::new();
    let mut best_store = model.params().clone();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_step = 0;
    let mut step = 0;
    let mut loss_acc = (0.0, 0usize);
    let mut last_bce = None;

    let mut validate = |model: &GrandeModel, step: usize, epoch: usize, loss_acc: &mut (f64, usize)| -> Result<()> {
        let (s, y) = scored_labels(model, val_split, cfg.batch_size)?;
        let val_auc = auc(&s, &y)?;
        let improved = val_auc > best_auc;
        if improved {
            best_auc = val_auc;
            best_store = model.params().clone();
            best_step = step;
        }
        let point = EvalPoint {
            step,
            epoch,
            val_auc,
            train_loss: (loss_acc.1 > 0).then(|| loss_acc.0 / loss_acc.1 as f64),
            improved,
        };
        *loss_acc = (0.0, 0);
        observer(&point);
        history.push(point);
        Ok(())
    };

    validate(model, 0, 0, &mut loss_acc)?;
    let mut order: Vec<usize> = (0..train_split.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<&GraphInput> = batch.iter().map(|&i| &train_split.inputs[i]).collect();
            let (bce, objective, grads) = batch_gradients(model, &inputs, cfg.l2)?;
            if !objective.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training objective {objective} at step {step} (epoch {epoch})"
                )));
            }
            adam_step(model.params_mut().tensors_mut(), &grads, &mut adam)?;
            step += 1;
            loss_acc.0 += objective;
            loss_acc.1 += 1;
            last_bce = Some(bce);
            if step % cfg.eval_period == 0 {
                validate(model, step, epoch + 1, &mut loss_acc)?;
            }
        }
    }
    if step % cfg.eval_period != 0 {
        validate(model, step, cfg.epochs, &mut loss_acc)?;
    }

    *model.params_mut() = best_store;
    let test = evaluate_split(model, test_split, cfg.batch_size)?;
    Ok(TrainOutcome {
        steps: step,
        history,
        best_step,
        best_val_auc: best_auc,
        last_batch_bce: last_bce,
        test,
    })
}
