//! Multi-encoder attentional encoder-decoder with GRU cells.
//!
//! Each input stream is read by a bidirectional GRU encoder. The decoder
//! initial state is a learned combination of every encoder's final state and,
//! optionally, an image feature vector. At each step the decoder attends over
//! every encoder separately and the next-word logits mix its own state with
//! all attention contexts.

pub mod checkpoint;
mod config;
mod model;
mod params;

pub use config::{
    ModelConfig, DEFAULT_DROPOUT, DEFAULT_EMBEDDING_DIM, DEFAULT_HIDDEN_DIM, DEFAULT_IMAGE_DIM,
    DEFAULT_L2,
};
pub use model::{Batch, EncodedSequence, Example, ExampleView, Graph, LossTerms, Mode, Model, StepStats};
pub use params::{EncoderParams, GruParams, ModelParams, ParamId};
