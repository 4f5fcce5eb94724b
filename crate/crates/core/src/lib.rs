//! Linear-chain CRF sequence labelling with transfer across mismatched label sets.
//!
//! A source-domain CRF is trained first. A two-layer linear network then
//! learns how source label scores predict target labels, and the two layers
//! are collapsed into the emission weights of a target-domain CRF that is
//! fine-tuned with early stopping.

pub mod adagrad;
pub mod baselines;
pub mod cli;
pub mod chain;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod eval;
pub mod features;
pub mod matrix;
pub mod model;
pub mod synth;
pub mod transfer;

pub use corpus::{Corpus, LabelSet, Sentence, SplitPlan, Token};
pub use crf::{CrfModel, TrainConfig, TrainLog};
pub use error::{Error, Result};
pub use eval::{CurveTable, EvalReport};
pub use features::{FeatureIndexer, SparseVector};
pub use matrix::Matrix;
