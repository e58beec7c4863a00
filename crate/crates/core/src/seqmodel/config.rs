use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EMBEDDING_DIM: usize = 300;
pub const DEFAULT_HIDDEN_DIM: usize = 500;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const DEFAULT_L2: f64 = 1e-8;
/// Width of fc7 image features.
pub const DEFAULT_IMAGE_DIM: usize = 4096;

/// Shape of a multi-encoder model. The encoder count is the number of
/// source vocabularies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub source_vocab_sizes: Vec<usize>,
    pub target_vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub l2: f64,
    /// Present when image features feed the decoder initial state.
    pub image_dim: Option<usize>,
    /// All encoders use one embedding table, one pair of GRUs and one
    /// attention key projection.
    pub share_encoder_weights: bool,
    /// Parameters are drawn from `uniform(-init_range, init_range)`.
    pub init_range: f64,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn new(source_vocab_sizes: Vec<usize>, target_vocab_size: usize) -> Self {
        ModelConfig {
            source_vocab_sizes,
            target_vocab_size,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            dropout: DEFAULT_DROPOUT,
            l2: DEFAULT_L2,
            image_dim: None,
            share_encoder_weights: false,
            init_range: 0.1,
            init_seed: 0,
        }
    }

    pub fn encoder_count(&self) -> usize {
        self.source_vocab_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if self.source_vocab_sizes.is_empty() {
            return bad("at least one encoder is required".into());
        }
        if self.source_vocab_sizes.contains(&0) || self.target_vocab_size == 0 {
            return bad("vocabulary sizes must be positive".into());
        }
        if self.embedding_dim == 0 || self.hidden_dim == 0 || self.image_dim == Some(0) {
            return bad("dimensions must be positive".into());
        }
        if self.share_encoder_weights
            && self
                .source_vocab_sizes
                .iter()
                .any(|&v| v != self.source_vocab_sizes[0])
        {
            return bad("shared encoders need one source vocabulary".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.l2 >= 0.0) {
            return bad(format!("l2 coefficient {} is negative", self.l2));
        }
        if !(self.init_range > 0.0) {
            return bad(format!("init range {} must be positive", self.init_range));
        }
        Ok(())
    }
}
