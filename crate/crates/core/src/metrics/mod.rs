//! Corpus BLEU and TER/HTER.

mod bleu;
mod ter;

pub use bleu::{bleu, sentence_bleu, BLEU_ORDER};
pub use ter::{hter_corpus, hter_corpus_with, levenshtein, ter, ter_corpus, ter_edits, Average, TerEdits};

/// Counts a corpus score was computed from.
#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    /// Clipped n-gram matches and hypothesis n-gram totals for n = 1..4,
    /// plus hypothesis and effective reference lengths.
    Ngrams {
        matches: [usize; BLEU_ORDER],
        totals: [usize; BLEU_ORDER],
        hyp_len: usize,
        ref_len: usize,
    },
    /// Total edits (shifts included) and total reference length.
    Edits { edits: usize, ref_len: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusScore {
    pub metric: &'static str,
    pub value: f64,
    /// One value per sentence. For BLEU these are add-one smoothed.
    pub sentences: Vec<f64>,
    pub support: Support,
}
