//! Single runs, ablation variants, the `p_thd` sweep and repeated runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate, train_with, EpochLog, MeanStd, MetricsReport, TrainConfig, TrainOptions, TrainedModel,
};
use crate::dataset::{split_dataset, Dataset, SplitRatios};
use crate::error::{Error, Result};

/// Outcome of one split + train + test evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub test: MetricsReport,
    #[serde(skip)]
    pub log: Vec<EpochLog>,
}

/// Splits with the config seed, trains and scores the test set with the
/// best-validation weights.
pub fn run_once(cfg: &TrainConfig, dataset: &Dataset) -> Result<RunResult> {
    run_trained(cfg, dataset, TrainOptions::default()).map(|(run, _)| run)
}

/// [`run_once`] that also hands back the checkpointed model.
pub fn run_trained(
    cfg: &TrainConfig,
    dataset: &Dataset,
    options: TrainOptions,
) -> Result<(RunResult, TrainedModel)> {
    let split = split_dataset(&dataset.labels(), SplitRatios::default(), cfg.seed)?;
    let trained = train_with(cfg, dataset, &split, options)?;
    let test = evaluate(
        &trained.store,
        &trained.params,
        &cfg.model,
        dataset,
        &split.test,
    )?;
    let run = RunResult {
        seed: cfg.seed,
        best_epoch: trained.best_epoch,
        test,
        log: trained.log.clone(),
    };
    Ok((run, trained))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Full,
    WithoutText,
    WithoutPro,
    WithoutHg,
    WithoutCl,
    WithoutDhsl,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::WithoutText,
        Variant::WithoutPro,
        Variant::WithoutHg,
        Variant::WithoutCl,
        Variant::WithoutDhsl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutText => "w/o Text",
            Variant::WithoutPro => "w/o Pro",
            Variant::WithoutHg => "w/o HG",
            Variant::WithoutCl => "w/o CL",
            Variant::WithoutDhsl => "w/o DHSL",
        }
    }

    /// The config with this variant's component switched off. Text vectors
    /// remain the input features of the other views under `w/o Text`.
    pub fn apply(self, cfg: &TrainConfig) -> TrainConfig {
        let mut out = cfg.clone();
        let m = &mut out.model;
        match self {
            Variant::Full => {}
            Variant::WithoutText => m.views.text = false,
            Variant::WithoutPro => m.views.pro = false,
            Variant::WithoutHg => m.views.hg = false,
            Variant::WithoutCl => m.contrastive = false,
            Variant::WithoutDhsl => m.dhsl = false,
        }
        out
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Case-insensitive; `w/o`, `wo` and `without` prefixes with any of
    /// space, `-` or `_` as separator.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, ' ' | '-' | '_' | '/'))
            .collect();
        let key = key
            .strip_prefix("without")
            .or_else(|| key.strip_prefix("wo"))
            .unwrap_or(&key);
        match key {
            "full" => Ok(Variant::Full),
            "text" => Ok(Variant::WithoutText),
            "pro" | "prop" | "propagation" => Ok(Variant::WithoutPro),
            "hg" | "hypergraph" => Ok(Variant::WithoutHg),
            "cl" | "contrastive" => Ok(Variant::WithoutCl),
            "dhsl" => Ok(Variant::WithoutDhsl),
            _ => {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Err(Error::Config(format!(
                    "unknown variant {s:?}; expected one of: {}",
                    names.join(", ")
                )))
            }
        }
    }
}

pub fn run_ablation(cfg: &TrainConfig, dataset: &Dataset, variant: Variant) -> Result<RunResult> {
    run_once(&variant.apply(cfg), dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_thd: f64,
    pub result: RunResult,
}

/// `0.0, 0.1, ..., 1.0`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// One run per grid value with the config seed; rows come back in grid
/// order whatever the scheduling.
pub fn sweep_pthd(cfg: &TrainConfig, dataset: &Dataset, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(bad) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("grid value {bad} outside [0, 1]")));
    }
    grid.par_iter()
        .map(|&p_thd| {
            let mut c = cfg.clone();
            c.model.p_thd = p_thd;
            run_once(&c, dataset).map(|result| SweepRow { p_thd, result })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub runs: Vec<RunResult>,
    pub accuracy: MeanStd,
    pub f1: MeanStd,
}

/// `n` runs with seeds `seed, seed + 1, ...`, each on a fresh split.
pub fn repeat_runs(cfg: &TrainConfig, dataset: &Dataset, n: usize) -> Result<RepeatReport> {
    let seeds: Vec<u64> = (0..n as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    repeat_runs_with_seeds(cfg, dataset, &seeds)
}

pub fn repeat_runs_with_seeds(
    cfg: &TrainConfig,
    dataset: &Dataset,
    seeds: &[u64],
) -> Result<RepeatReport> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!(
            "repeats must be at least 2, got {}",
            seeds.len()
        )));
    }
    let runs: Vec<RunResult> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            run_once(&c, dataset)
        })
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = runs.iter().map(|r| r.test.accuracy).collect();
    let f1: Vec<f64> = runs.iter().map(|r| r.test.f1).collect();
    Ok(RepeatReport {
        accuracy: MeanStd::of(&acc)?,
        f1: MeanStd::of(&f1)?,
        runs,
    })
}
