//! Datasets, configuration, training, decoding and scoring for the
//! post-editing, multimodal translation and captioning workflows.

mod data;
mod evaluate;
mod settings;
mod setup;
mod train;
mod translate;

pub use data::{
    german_split, load_raw, make_batches, read_corpus, write_corpus, DatasetSpec, ImageFeatureStore, ImageSource,
    RawExample, TaskKind, Vocabularies, CAPTIONS_PER_IMAGE,
};
pub use evaluate::{comparison_table, format_score, score, sentence_tsv, transpose_references, Metric};
pub use settings::Settings;
pub use setup::{train_setup, translate_setup, TrainSetup, TranslateSetup, TRAIN_KEYS, TRANSLATE_KEYS};
pub use train::{load_checkpoint, train, CheckpointMeta, ModelShape, TrainConfig, TrainOutcome};
pub use translate::{ape_apply, ape_derive, decode_examples, finish_output, ids_to_output, translate};
