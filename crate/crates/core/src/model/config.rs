use super::ModelError;

/// Shape and regularization settings for [`super::UniKeyphrase`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_width: usize,
    /// Dropout on relation-layer outputs, training only.
    pub dropout: f64,
    pub max_len: usize,
    pub srl_layers: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            ff_width: 128,
            dropout: 0.5,
            max_len: 96,
            srl_layers: 2,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.vocab_size < 7 {
            return bad("vocab_size must leave room beyond the special tokens");
        }
        if self.d_model < 2 || self.n_heads == 0 || self.ff_width == 0 || self.max_len < 4 {
            return bad("d_model, n_heads, ff_width and max_len must be positive (d_model >= 2, max_len >= 4)");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}
