//! Multi-view fake-news classification.
//!
//! Each news item is seen through three views: its precomputed text vector,
//! the propagation tree of users who shared it, and a hypergraph linking
//! news that share users, publication time or entities. The hypergraph's
//! incidence structure is relearned during training from node/hyperedge
//! similarity. The crate carries its own small reverse-mode autodiff so the
//! whole pipeline can be gradient-checked.

pub mod autodiff;
pub mod dataset;
pub mod dhsl;
pub mod error;
pub mod harness;
pub mod hyper_encoder;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod prop_encoder;
pub mod tensor;

pub use autodiff::{Gradients, Tape, Var};
pub use dataset::{Dataset, DatasetSplit, SynthConfig};
pub use error::{DataError, Error, Result};
pub use harness::{EpochLog, MeanStd, MetricsReport, RunResult, TrainConfig, Variant};
pub use model::{ModelConfig, ModelParams, ViewToggles};
pub use ops::Mode;
pub use optim::{Adam, OptimState};
pub use params::{ParamId, ParamStore};
pub use tensor::{Csr, Tensor};
