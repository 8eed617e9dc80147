//! Knowledge graph embedding training with pluggable subsampling of the
//! negative-sampling loss.
//!
//! Three families of example weights are supported:
//!
//! - **CBS** (count-based): frequencies come from counting queries in the
//!   training split, with the triple frequency backed off to the mean of its
//!   two query counts.
//! - **MBS** (model-based): frequencies come from a frozen, pre-trained
//!   sub-model whose scores are softmax-normalised over the training set and
//!   sharpened or flattened with a temperature `alpha`.
//! - **MIX**: an elementwise convex combination `lambda * MBS + (1 - lambda) * CBS`.
//!
//! Each family can be applied with the `Base`, `Freq` or `Uniq` weighting
//! scheme. The crate also ships the five score functions (TransE, RotatE,
//! ComplEx, DistMult, HAKE) with analytic gradients, a sparse SGD/Adam
//! training loop, a filtered link-prediction evaluator and the sub-model
//! selection harness.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability, and the `kgesub` binary for the command-line pipeline.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod submodel;
pub mod subsampling;
pub mod synth;
pub mod training;

pub use data::{Dataset, Direction, FrequencyTable, QueryKey, Triple, Vocab};
pub use error::{Error, Result};
pub use evaluation::{AggregateReport, EvalReport, Split};
pub use models::{ModelKind, ModelParams};
pub use subsampling::{SubModelScores, SubsamplingMethod, SubsamplingSource, WeightTable};
pub use training::{TrainConfig, TrainExample};
