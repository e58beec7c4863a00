//! Bitoken language models: alignment-based token pairing, exchange
//! clustering and class n-gram models with ARPA export.

mod brown;
mod extract;
mod lm;

pub use brown::{brown_cluster, class_bigram_mi, classify_corpus, Clustering, UNK_CLASS};
pub use extract::{extract_bitokens, extract_corpus, Alignment, NULL_SOURCE};
pub use lm::{train_class_lm, NgramLm, SENTENCE_END, SENTENCE_START, UNK_WORD};
