//! Synthetic corpora, configuration, training, ablations and diagnostics.

mod ablate;
mod config;
mod corpus;
mod diag;
pub mod kv;
mod train;

use std::path::PathBuf;

pub use ablate::{ablate, median, probe_inputs, AblationReport, AblationRow, Arm, Grid, DISTANCE_PAIRS};
pub use config::{RunConfig, SEED_ENV};
pub use diag::{diag, run_label, DiagOutput};
pub use corpus::{gen_corpus, write_corpus, Corpus, CorpusSpec};
pub use train::{
    encode_batch, epoch_ckpt, load_checkpoint, predict_corpus, read_train_log, train, EvalRow, LogRow, TrainOutcome,
    BEST_CKPT, CONFIG_FILE, EVAL_LOG, TRAIN_LOG, VOCAB_FILE,
};

use crate::datapipe::DataError;
use crate::evaluation::EvalError;
use crate::inference::InferenceError;
use crate::model::ModelError;
use crate::numerics::NumericsError;
use crate::objective::ObjectiveError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{origin}:{line}: {msg}")]
    Config { origin: String, line: usize, msg: String },
    #[error("non-finite loss at step {step}: {detail} (details in {})", dump.display())]
    NonFinite { step: usize, dump: PathBuf, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
