//! Mini-batch training with a shared, annealed temperature.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{backward_with, Batch, BatchStats, Mode, Model, Targets};
use super::optim::{Optimizer, OptimizerKind};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::transform::{harden, soften, temperature_at, EdgeLogits, HardTransforms, Schedule, SoftTransforms};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of transformation slices.
    pub k: usize,
    /// Output channels of each GSL.
    pub widths: Vec<usize>,
    pub t_init: f64,
    pub t_final: f64,
    /// Total optimizer steps; ignored when `epochs` is set.
    pub steps: usize,
    /// When set, the step budget is `epochs * ceil(train_items / batch_size)`.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate for the `S` logits; defaults to `lr`.
    pub logit_lr: Option<f64>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Logits start i.i.d. uniform in `[-logit_init_scale, logit_init_scale]`.
    pub logit_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 5,
            widths: vec![32, 64],
            t_init: 10.0,
            t_final: 0.01,
            steps: 1000,
            epochs: None,
            batch_size: 32,
            lr: 1e-3,
            logit_lr: None,
            optimizer: OptimizerKind::default(),
            seed: 0,
            logit_init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("K must be positive"));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(invalid("layer widths must be non-empty and positive"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(invalid(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if let Some(l) = self.logit_lr {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(invalid(format!("logit learning rate must be finite and non-negative, got {l}")));
            }
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.epochs == Some(0) || (self.epochs.is_none() && self.steps == 0) {
            return Err(invalid("training needs at least one step"));
        }
        if !(self.logit_init_scale >= 0.0) {
            return Err(invalid("logit init scale must be non-negative"));
        }
        Schedule::new(self.t_init, self.t_final, 1)?;
        Ok(())
    }

    pub fn total_steps(&self, train_items: usize) -> usize {
        match self.epochs {
            Some(e) => e * train_items.div_ceil(self.batch_size),
            None => self.steps,
        }
    }
}

/// One history row: written at step 0 and at the end of every epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub epoch: usize,
    pub temperature: f64,
    /// Mean mini-batch loss over the epoch (full train set at step 0).
    pub train_loss: f64,
    pub train_acc: f64,
    /// Validation accuracy at `temperature`; `None` without a validation split.
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub logits: EdgeLogits,
    pub hard: HardTransforms,
    pub history: Vec<TrainRecord>,
    pub optimizer: Optimizer,
    pub schedule: Schedule,
    pub steps_done: usize,
}

/// Loss and accuracy over `items` at the given soft transforms, processed in
/// chunks of `chunk` signals.
pub fn evaluate_items(
    model: &Model,
    s: &SoftTransforms,
    dataset: &Dataset,
    items: &[usize],
    chunk: usize,
) -> Result<BatchStats> {
    if items.is_empty() {
        return Err(invalid("cannot evaluate an empty item set"));
    }
    match dataset.mode {
        Mode::Vertex => {
            let batch = vertex_batch(dataset, items)?;
            model.evaluate_batch(&batch, s)
        }
        Mode::Signal => {
            let mut loss = 0.0;
            let mut correct = 0;
            for part in items.chunks(chunk.max(1)) {
                let x = dataset.stack(part);
                let batch = Batch {
                    x: x.view(),
                    samples: part.len(),
                    targets: signal_targets(dataset, part)?,
                };
                let st = model.evaluate_batch(&batch, s)?;
                loss += st.loss * st.count as f64;
                correct += st.correct;
            }
            Ok(BatchStats {
                loss: loss / items.len() as f64,
                correct,
                count: items.len(),
            })
        }
    }
}

fn signal_targets(dataset: &Dataset, items: &[usize]) -> Result<Targets> {
    items
        .iter()
        .map(|&i| dataset.label(i).ok_or_else(|| invalid(format!("item {i} is unlabeled"))))
        .collect::<Result<Vec<_>>>()
        .map(Targets::Signal)
}

fn vertex_batch<'a>(dataset: &'a Dataset, items: &[usize]) -> Result<Batch<'a>> {
    let labels = items
        .iter()
        .map(|&v| dataset.label(v).ok_or_else(|| invalid(format!("vertex {v} is unlabeled"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        x: dataset.signals[0].view(),
        samples: 1,
        targets: Targets::Vertex {
            vertices: items.to_vec(),
            labels,
        },
    })
}

/// Trains model and `S` jointly. At optimizer step `s` the shared temperature
/// is `temperature_at(s)`; the returned transforms are the hardened logits.
pub fn train(dataset: &Dataset, graph: Arc<Graph>, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    dataset.validate()?;
    if dataset.num_vertices() != graph.n() {
        return Err(invalid(format!(
            "dataset signals have {} vertices, graph has {}",
            dataset.num_vertices(),
            graph.n()
        )));
    }
    let train_items = dataset.splits.train.clone();
    if train_items.is_empty() {
        return Err(invalid("training split is empty"));
    }
    let s_total = config.total_steps(train_items.len());
    let schedule = Schedule::new(config.t_init, config.t_final, s_total)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::new(
        dataset.mode,
        config.k,
        dataset.channels(),
        &config.widths,
        dataset.num_classes,
        &mut rng,
    )?;
    let mut logits = EdgeLogits::random_uniform(Arc::clone(&graph), config.k, config.logit_init_scale, &mut rng);
    let mut optimizer = Optimizer::new(config.optimizer);
    let n_groups = model.param_slices().len();
    let mut lrs = vec![config.lr; n_groups];
    lrs.push(config.logit_lr.unwrap_or(config.lr));

    let val_items = dataset.splits.validation.clone();
    let eval_chunk = 256;
    let mut history = Vec::new();
    {
        let s = soften(&logits, schedule.t_init)?;
        let st = evaluate_items(&model, &s, dataset, &train_items, eval_chunk)?;
        let val_acc = accuracy_or_none(&model, &s, dataset, &val_items, eval_chunk)?;
        history.push(TrainRecord {
            step: 0,
            epoch: 0,
            temperature: schedule.t_init,
            train_loss: st.loss,
            train_acc: st.correct as f64 / st.count as f64,
            val_acc,
        });
    }

    let mut order = train_items.clone();
    let mut cursor = order.len();
    let mut epoch = 0;
    let (mut epoch_loss, mut epoch_correct, mut epoch_count, mut epoch_batches) = (0.0, 0usize, 0usize, 0usize);
    for step in 0..s_total {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let items = &order[cursor..end];
        cursor = end;

        let t = temperature_at(step, &schedule)?;
        let s = soften(&logits, t)?;
        let stacked;
        let batch = match dataset.mode {
            Mode::Signal => {
                stacked = dataset.stack(items);
                Batch {
                    x: stacked.view(),
                    samples: items.len(),
                    targets: signal_targets(dataset, items)?,
                }
            }
            Mode::Vertex => vertex_batch(dataset, items)?,
        };
        let (stats, grads) = match backward_with(&batch, &model, &logits, &s) {
            Ok(r) => r,
            Err(Error::Numeric(_)) => return Err(Error::TrainingDiverged { step, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if !stats.loss.is_finite() {
            return Err(Error::TrainingDiverged { step, loss: stats.loss });
        }
        {
            let mut params = model.param_slices_mut();
            params.push(logits.values_mut());
            optimizer.step(&mut params, &grads.slices(), &lrs)?;
        }
        epoch_loss += stats.loss;
        epoch_correct += stats.correct;
        epoch_count += stats.count;
        epoch_batches += 1;

        let done = step + 1;
        if cursor >= order.len() || done == s_total {
            epoch += 1;
            let t_now = temperature_at(done, &schedule)?;
            let s_now = soften(&logits, t_now)?;
            let val_acc = match accuracy_or_none(&model, &s_now, dataset, &val_items, eval_chunk) {
                Err(Error::Numeric(_)) => return Err(Error::TrainingDiverged { step: done, loss: f64::NAN }),
                other => other?,
            };
            history.push(TrainRecord {
                step: done,
                epoch,
                temperature: t_now,
                train_loss: epoch_loss / epoch_batches as f64,
                train_acc: epoch_correct as f64 / epoch_count as f64,
                val_acc,
            });
            epoch_loss = 0.0;
            epoch_correct = 0;
            epoch_count = 0;
            epoch_batches = 0;
        }
    }

    let hard = harden(&logits);
    Ok(TrainOutput {
        model,
        logits,
        hard,
        history,
        optimizer,
        schedule,
        steps_done: s_total,
    })
}

fn accuracy_or_none(
    model: &Model,
    s: &SoftTransforms,
    dataset: &Dataset,
    items: &[usize],
    chunk: usize,
) -> Result<Option<f64>> {
    if items.is_empty() {
        return Ok(None);
    }
    let st = evaluate_items(model, s, dataset, items, chunk)?;
    Ok(Some(st.correct as f64 / st.count as f64))
}
