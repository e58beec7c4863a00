//! Multi-source attentional sequence-to-sequence toolkit.
//!
//! The crate covers the whole translation and post-editing workflow:
//!
//! * [`numerics`]: tensors, reverse-mode differentiation, Adam.
//! * [`seqmodel`]: bidirectional GRU encoders, per-encoder attention and a
//!   GRU decoder whose initial state mixes all encoders and optional image
//!   features.
//! * [`decoding`]: greedy and beam search.
//! * [`editops`]: keep/delete/insert edit scripts for automatic post-editing.
//! * [`textproc`]: German contraction and case-ending splitting, punctuation
//!   fixes, vocabularies.
//! * [`metrics`]: BLEU, TER and HTER.
//! * [`bitoken`]: bitoken extraction, exchange clustering, class n-gram LMs.
//! * [`pipeline`]: datasets, training, translation, scoring and checkpoints.

pub mod bitoken;
pub mod decoding;
pub mod editops;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod seqmodel;
pub mod textproc;

pub use error::{Error, Result};
