//! German pre/post-processing, punctuation repair and vocabularies.

mod punct;
mod rules;
mod vocab;

pub use punct::fix_punctuation;
pub use rules::{merge_german, split_contractions, split_pronoun_endings, SplitRuleTable};
pub use vocab::{
    build_vocab, Vocabulary, BOS, BOS_ID, DELETE, DELETE_ID, EOS, EOS_ID, KEEP, KEEP_ID, PAD,
    PAD_ID, UNK, UNK_ID,
};
