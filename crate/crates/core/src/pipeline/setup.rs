use std::path::PathBuf;

use crate::{Error, Result};

use super::data::{DatasetSpec, ImageSource, TaskKind};
use super::settings::Settings;
use super::train::{ModelShape, TrainConfig};

/// Keys read by [`train_setup`].
pub const TRAIN_KEYS: &[&str] = &[
    "task",
    "sources",
    "target",
    "image-features",
    "image-index",
    "image-ids",
    "split-german",
    "valid-sources",
    "valid-target",
    "valid-image-ids",
    "embedding-dim",
    "hidden-dim",
    "dropout",
    "l2",
    "init-range",
    "batch-size",
    "max-epochs",
    "max-steps",
    "valid-interval",
    "patience",
    "seed",
    "learning-rate",
    "beam",
    "max-len",
    "source-vocab-size",
    "target-vocab-size",
    "out-dir",
];

/// Keys read by [`translate_setup`].
pub const TRANSLATE_KEYS: &[&str] = &[
    "checkpoint",
    "task",
    "sources",
    "image-features",
    "image-index",
    "image-ids",
    "beam",
    "max-len",
    "output",
];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSetup {
    pub train: DatasetSpec,
    pub valid: Option<DatasetSpec>,
    pub shape: ModelShape,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranslateSetup {
    pub checkpoint: PathBuf,
    pub inputs: DatasetSpec,
    pub beam: usize,
    pub max_len: usize,
    pub output: Option<PathBuf>,
}

fn required<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Configuration(format!("missing setting {key}")))
}

fn images(s: &Settings, ids_key: &str) -> Result<Option<ImageSource>> {
    match (s.path("image-features"), s.path("image-index")) {
        (None, None) => Ok(None),
        (Some(features), Some(index)) => Ok(Some(ImageSource { features, index, ids: s.path(ids_key) })),
        _ => Err(Error::Configuration("image-features and image-index go together".into())),
    }
}

fn task(s: &Settings) -> Result<TaskKind> {
    required(s.get("task"), "task")?.parse()
}

pub fn train_setup(s: &Settings) -> Result<TrainSetup> {
    s.require_known(TRAIN_KEYS)?;
    let task = task(s)?;
    let split_german = s.flag("split-german")?.unwrap_or(false);
    let train = DatasetSpec {
        task,
        sources: required(s.paths("sources"), "sources")?,
        target: Some(required(s.path("target"), "target")?),
        images: images(s, "image-ids")?,
        split_german,
    };
    train.validate()?;
    let valid = match (s.paths("valid-sources"), s.path("valid-target")) {
        (None, None) => None,
        (Some(sources), Some(target)) => {
            let mut images = images(s, "valid-image-ids")?;
            if let Some(im) = &mut images {
                // Validation lines map to rows only through their own ids.
                if im.ids.is_none() && train.images.as_ref().is_some_and(|t| t.ids.is_some()) {
                    return Err(Error::Configuration("valid-image-ids is required with image-ids".into()));
                }
            }
            let spec = DatasetSpec { task, sources, target: Some(target), images, split_german };
            spec.validate()?;
            Some(spec)
        }
        _ => return Err(Error::Configuration("valid-sources and valid-target go together".into())),
    };
    let d = ModelShape::default();
    let shape = ModelShape {
        embedding_dim: s.value("embedding-dim")?.unwrap_or(d.embedding_dim),
        hidden_dim: s.value("hidden-dim")?.unwrap_or(d.hidden_dim),
        dropout: s.value("dropout")?.unwrap_or(d.dropout),
        l2: s.value("l2")?.unwrap_or(d.l2),
        init_range: s.value("init-range")?.unwrap_or(d.init_range),
    };
    let d = TrainConfig::default();
    let config = TrainConfig {
        batch_size: s.value("batch-size")?.unwrap_or(d.batch_size),
        max_epochs: s.value("max-epochs")?.unwrap_or(d.max_epochs),
        max_steps: s.value("max-steps")?.or(d.max_steps),
        valid_interval: s.value("valid-interval")?.unwrap_or(d.valid_interval),
        patience: s.value("patience")?.unwrap_or(d.patience),
        seed: s.value("seed")?.unwrap_or(d.seed),
        learning_rate: s.value("learning-rate")?.unwrap_or(d.learning_rate),
        beam: s.value("beam")?.unwrap_or(d.beam),
        max_len: s.value("max-len")?.unwrap_or(d.max_len),
        source_vocab_size: s.value("source-vocab-size")?.unwrap_or(d.source_vocab_size),
        target_vocab_size: s.value("target-vocab-size")?.unwrap_or(d.target_vocab_size),
        out_dir: s.path("out-dir").unwrap_or(d.out_dir),
    };
    config.validate()?;
    Ok(TrainSetup { train, valid, shape, config })
}

pub fn translate_setup(s: &Settings) -> Result<TranslateSetup> {
    s.require_known(TRANSLATE_KEYS)?;
    let d = TrainConfig::default();
    let inputs = DatasetSpec {
        task: task(s)?,
        sources: required(s.paths("sources"), "sources")?,
        target: None,
        images: images(s, "image-ids")?,
        split_german: false,
    };
    inputs.validate()?;
    let beam = s.value("beam")?.unwrap_or(d.beam);
    let max_len = s.value("max-len")?.unwrap_or(d.max_len);
    if beam == 0 || max_len == 0 {
        return Err(Error::Configuration("beam and max-len must be positive".into()));
    }
    Ok(TranslateSetup {
        checkpoint: required(s.path("checkpoint"), "checkpoint")?,
        inputs,
        beam,
        max_len,
        output: s.path("output"),
    })
}
