//! Joint present-keyphrase extraction and absent-keyphrase generation.
//!
//! A shared transformer encoder reads `[CLS] document [SEP] masked-target [SEP]`
//! under a sequence-to-sequence attention mask. Stacked relation layers split
//! its output into an extraction stream and a generation stream that attend
//! to each other, feeding a BIXO tagging head and a masked-token head. A
//! bag-of-words constraint ties the two tasks together during training.
//!
//! Everything runs on the small autodiff engine in [`numerics`].

pub mod datapipe;
pub mod evaluation;
pub mod harness;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod objective;

pub use datapipe::{EncodedInput, Label, RawSample, Sample, TokenId, Vocabulary};
pub use evaluation::{evaluate, EvalReport};
pub use harness::{CorpusSpec, RunConfig};
pub use inference::{predict, BeamConfig, PredictionRecord, PredictionSet, ScoredPhrase};
pub use model::{ModelConfig, UniKeyphrase};
pub use numerics::{Graph, ParameterStore, Real, Tensor};
pub use objective::{LossConfig, Schedule};
