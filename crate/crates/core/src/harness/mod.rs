//! Training loop, evaluation and the experiment protocols built on them.

mod metrics;
mod protocol;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::model::{forward, predict, ModelConfig, ModelInputs, ModelParams};
use crate::ops::Mode;
use crate::optim::{Adam, OptimState};
use crate::params::ParamStore;

pub use metrics::{ClassMetrics, Confusion, MeanStd, MetricsReport};
pub use protocol::{
    default_grid, repeat_runs, repeat_runs_with_seeds, run_ablation, run_once, run_trained,
    sweep_pthd, RepeatReport, RunResult, SweepRow, Variant,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 200,
            batch_size: 64,
            lr: 0.001,
            seed: 0,
            repeats: 20,
        }
    }
}

impl TrainConfig {
    /// A learning rate of exactly 0 is accepted and freezes the weights.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "train.lr must be non-negative, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// One line of the run log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub ce: f64,
    pub cl: f64,
    pub val_acc: f64,
    pub val_f1: f64,
}

/// Relearned incidence of one hypergraph layer after an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSnapshot {
    pub epoch: usize,
    pub layer: usize,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Capture every layer's relearned structure after each epoch.
    pub record_structures: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Weights of the best validation epoch.
    pub store: ParamStore,
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub structures: Vec<StructureSnapshot>,
}

pub fn train(cfg: &TrainConfig, dataset: &Dataset, split: &DatasetSplit) -> Result<TrainedModel> {
    train_with(cfg, dataset, split, TrainOptions::default())
}

/// Mini-batch Adam on the training indices, validating after every epoch
/// and keeping the weights of the best validation accuracy (later epochs
/// win ties). A single seeded generator drives initialisation, shuffling
/// and dropout, in that order.
pub fn train_with(
    cfg: &TrainConfig,
    dataset: &Dataset,
    split: &DatasetSplit,
    options: TrainOptions,
) -> Result<TrainedModel> {
    cfg.validate()?;
    check_dims(&cfg.model, dataset)?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(crate::error::DataError::EmptyIndexSet.into());
    }
    let inputs = ModelInputs::new(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut store, params) = ModelParams::init(&cfg.model, &mut rng);
    let adam = Adam::with_lr(cfg.lr);
    let mut state = OptimState::new(&store);

    let mut order = split.train.clone();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut structures = Vec::new();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_total, mut sum_ce, mut sum_cl) = (0.0, 0.0, 0.0);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut fp = forward(
                &store,
                &params,
                &cfg.model,
                &inputs,
                batch,
                Mode::Train,
                &mut rng,
            )?;
            let parts = fp.loss(&inputs.labels, &cfg.model);
            let total = fp.tape.value(parts.total).item();
            if !total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                });
            }
            let w = batch.len() as f64;
            sum_total += w * total;
            sum_ce += w * fp.tape.value(parts.ce).item();
            sum_cl += w * parts.cl.map_or(0.0, |v| fp.tape.value(v).item());
            let grads = fp.tape.grad(parts.total, &store)?;
            adam.step(&mut store, &grads, &mut state)?;
        }
        let n = order.len() as f64;
        let val = evaluate_on(&store, &params, &cfg.model, &inputs, &split.val)?;
        log.push(EpochLog {
            epoch,
            train_loss: sum_total / n,
            ce: sum_ce / n,
            cl: sum_cl / n,
            val_acc: val.accuracy,
            val_f1: val.f1,
        });
        log::debug!(
            "epoch {epoch}: loss {:.6} val_acc {:.4}",
            sum_total / n,
            val.accuracy
        );
        if best.as_ref().is_none_or(|(acc, _, _)| val.accuracy >= *acc) {
            best = Some((val.accuracy, epoch, store.clone()));
        }
        if options.record_structures {
            structures.extend(snapshot_structures(
                &store, &params, &cfg.model, &inputs, epoch,
            )?);
        }
    }

    let (_, best_epoch, store) = best.expect("at least one epoch");
    Ok(TrainedModel {
        store,
        params,
        log,
        best_epoch,
        structures,
    })
}

fn check_dims(cfg: &ModelConfig, dataset: &Dataset) -> Result<()> {
    if cfg.d_in != dataset.d_in() {
        return Err(crate::error::DataError::DimensionMismatch {
            what: "model.d_in vs dataset".into(),
            expected: cfg.d_in,
            found: dataset.d_in(),
        }
        .into());
    }
    Ok(())
}

fn snapshot_structures(
    store: &ParamStore,
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &ModelInputs<'_>,
    epoch: usize,
) -> Result<Vec<StructureSnapshot>> {
    if !cfg.views.hg {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fp = forward(store, params, cfg, inputs, &[0], Mode::Eval, &mut rng)?;
    Ok(fp
        .structures
        .iter()
        .enumerate()
        .map(|(layer, &h)| {
            let t = fp.tape.value(h);
            StructureSnapshot {
                epoch,
                layer,
                shape: [t.rows(), t.cols()],
                data: t.data().to_vec(),
            }
        })
        .collect())
}

/// Eval-mode predictions (argmax, ties to "true") scored against labels.
pub fn evaluate(
    store: &ParamStore,
    params: &ModelParams,
    cfg: &ModelConfig,
    dataset: &Dataset,
    indices: &[usize],
) -> Result<MetricsReport> {
    evaluate_on(store, params, cfg, &ModelInputs::new(dataset), indices)
}

fn evaluate_on(
    store: &ParamStore,
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &ModelInputs<'_>,
    indices: &[usize],
) -> Result<MetricsReport> {
    if indices.is_empty() {
        return Err(crate::error::DataError::EmptyIndexSet.into());
    }
    let probs = predict(store, params, cfg, inputs, indices)?;
    let predicted: Vec<usize> = (0..probs.rows())
        .map(|r| usize::from(probs.get(r, 1) > probs.get(r, 0)))
        .collect();
    let labels: Vec<usize> = indices.iter().map(|&i| inputs.labels[i]).collect();
    MetricsReport::from_predictions(&predicted, &labels)
}
