//! Shared encoder with sequence-to-sequence masking, the stacked relation
//! layers, and the two task heads.

mod config;
mod encoder;
mod layers;
mod srl;

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::ModelConfig;
pub use encoder::{Encoder, EncoderLayer};
pub use layers::{attend, dropout, Linear, Norm};
pub use srl::{srl_coattend, srl_specialize, srl_stack, SrlLayer, TaskRepresentations};

use crate::datapipe::{EncodedInput, Label};
use crate::numerics::{checkpoint, softmax_in_place, Graph, NumericsError, ParameterStore, Real, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input length {len} exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Parameter handles for the whole network. The ids are valid for any store
/// derived from the one they were created in (including precision casts).
#[derive(Clone, Debug)]
pub struct Layout {
    pub encoder: Encoder,
    pub srl: Vec<SrlLayer>,
    pub pke: Linear,
    pub akg: Linear,
}

impl Layout {
    pub fn init<T: Real>(cfg: &ModelConfig, store: &mut ParameterStore<T>, rng: &mut ChaCha8Rng) -> Result<Self, ModelError> {
        cfg.validate()?;
        let encoder = Encoder::init(cfg, store, rng)?;
        let srl = (0..cfg.srl_layers)
            .map(|l| SrlLayer::init(store, &format!("srl.{l}"), cfg.d_model, rng))
            .collect::<Result<_, _>>()?;
        let pke = Linear::init(store, "head.pke", cfg.d_model, Label::ALL.len(), rng)?;
        let akg = Linear::init(store, "head.akg", cfg.d_model, cfg.vocab_size, rng)?;
        Ok(Self { encoder, srl, pke, akg })
    }
}

/// Vars produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub hidden: Var,
    pub reps: TaskRepresentations,
    /// `m × 4` tag logits over the document positions.
    pub pke_logits: Var,
    /// `n_mask × V` token logits over the masked positions, if any.
    pub akg_logits: Option<Var>,
}

/// Full forward pass. Dropout is active iff `train_rng` is given.
pub fn forward<T: Real>(
    cfg: &ModelConfig,
    layout: &Layout,
    store: &ParameterStore<T>,
    g: &mut Graph<T>,
    input: &EncodedInput,
    train_rng: Option<&mut dyn RngCore>,
) -> Result<Forward, ModelError> {
    let len = input.len();
    if len > cfg.max_len {
        return Err(ModelError::TooLong {
            len,
            max_len: cfg.max_len,
        });
    }
    let mask = g.constant(input.attention.additive())?;
    let ids: Vec<usize> = input.ids.iter().map(|&i| i as usize).collect();
    if let Some(&bad) = ids.iter().find(|&&i| i >= cfg.vocab_size) {
        return Err(NumericsError::OutOfBounds {
            op: "embedding",
            index: bad,
            bound: cfg.vocab_size,
        }
        .into());
    }
    let hidden = layout.encoder.forward(cfg, g, store, &ids, &input.segments, mask)?;
    let reps = srl_stack(g, store, &layout.srl, hidden, Some(mask), cfg.dropout, train_rng)?;

    let doc_rows = g.gather_rows(reps.p, &input.document_positions())?;
    let pke_logits = layout.pke.apply(g, store, doc_rows)?;
    let akg_logits = if input.mask_positions.is_empty() {
        None
    } else {
        let rows = g.gather_rows(reps.a, &input.mask_positions)?;
        Some(layout.akg.apply(g, store, rows)?)
    };
    Ok(Forward {
        hidden,
        reps,
        pke_logits,
        akg_logits,
    })
}

/// Read-only outputs of an evaluation pass.
#[derive(Clone, Debug)]
pub struct Inference {
    /// `m × 4` label distributions.
    pub pke_probs: Tensor<f32>,
    /// `n_mask × V` token distributions, if any position was masked.
    pub akg_probs: Option<Tensor<f32>>,
    pub p: Tensor<f32>,
    pub a: Tensor<f32>,
}

fn softmax_rows(t: &Tensor<f32>) -> Tensor<f32> {
    let mut out = t.clone();
    let n = out.last_dim();
    for row in out.data_mut().chunks_exact_mut(n) {
        softmax_in_place(row);
    }
    out
}

/// A configured network together with its 32-bit parameters.
#[derive(Clone, Debug)]
pub struct UniKeyphrase {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: ParameterStore<f32>,
}

impl UniKeyphrase {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        let layout = Layout::init(&config, &mut params, &mut rng)?;
        Ok(Self { config, layout, params })
    }

    pub fn forward(
        &self,
        g: &mut Graph<f32>,
        input: &EncodedInput,
        train_rng: Option<&mut dyn RngCore>,
    ) -> Result<Forward, ModelError> {
        forward(&self.config, &self.layout, &self.params, g, input, train_rng)
    }

    /// Evaluation-mode pass returning probabilities and final streams.
    pub fn infer(&self, input: &EncodedInput) -> Result<Inference, ModelError> {
        let mut g = Graph::new();
        let f = self.forward(&mut g, input, None)?;
        Ok(Inference {
            pke_probs: softmax_rows(g.value(f.pke_logits)),
            akg_probs: f.akg_logits.map(|v| softmax_rows(g.value(v))),
            p: g.value(f.reps.p).clone(),
            a: g.value(f.reps.a).clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        Ok(checkpoint::save(&self.params, path)?)
    }

    /// Loads weights saved from a model with the same configuration.
    pub fn load(config: ModelConfig, path: &Path) -> Result<Self, ModelError> {
        let mut model = Self::init(config, 0)?;
        checkpoint::load_into(&mut model.params, path)?;
        Ok(model)
    }
}
