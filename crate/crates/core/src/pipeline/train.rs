use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoding::greedy_translate;
use crate::metrics::bleu;
use crate::numerics::{AdamConfig, AdamState};
use crate::seqmodel::{checkpoint, Example, Model, ModelConfig};
use crate::textproc::Vocabulary;
use crate::{Error, Result};

use super::data::{load_raw, make_batches, DatasetSpec, ImageFeatureStore, TaskKind, Vocabularies};
use super::translate::{finish_output, ids_to_output};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many updates even if epochs remain.
    pub max_steps: Option<usize>,
    /// Updates between validations (and checkpoint writes).
    pub valid_interval: usize,
    /// Validations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub learning_rate: f64,
    /// Beam width recorded for test-time decoding.
    pub beam: usize,
    pub max_len: usize,
    pub source_vocab_size: usize,
    pub target_vocab_size: usize,
    /// Not stored in checkpoints, so identical runs in different
    /// directories write identical files.
    #[serde(skip, default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("model")
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 20,
            max_steps: None,
            valid_interval: 500,
            patience: 10,
            seed: 1,
            learning_rate: 1e-3,
            beam: 10,
            max_len: 50,
            source_vocab_size: 30_000,
            target_vocab_size: 30_000,
            out_dir: default_out_dir(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch-size", self.batch_size),
            ("max-epochs", self.max_epochs),
            ("valid-interval", self.valid_interval),
            ("patience", self.patience),
            ("beam", self.beam),
            ("max-len", self.max_len),
        ];
        if let Some((k, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Configuration(format!("{k} must be positive")));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Configuration("max-steps must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Configuration(format!("learning rate {} is negative", self.learning_rate)));
        }
        Ok(())
    }
}

/// JSON metadata stored inside every checkpoint; enough to rebuild the
/// input pipeline without the training files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: TaskKind,
    pub split_german: bool,
    pub uses_image: bool,
    pub source_vocabs: Vec<Vec<String>>,
    pub target_vocab: Vec<String>,
    pub train: TrainConfig,
    pub step: usize,
    pub epoch: usize,
    pub valid_bleu: Option<f64>,
}

impl CheckpointMeta {
    pub fn vocabularies(&self) -> Result<Vocabularies> {
        let sources = self.source_vocabs.iter().map(|w| Vocabulary::from_words(w.iter().cloned())).collect::<Result<_>>()?;
        let target = Vocabulary::from_words(self.target_vocab.iter().cloned())?;
        let target = if self.task == TaskKind::Ape { target.with_edit_operations()? } else { target };
        Ok(Vocabularies { sources, target })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metadata serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("bad checkpoint metadata: {e}")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, CheckpointMeta)> {
    let (model, meta) = checkpoint::load::<f32>(path)?;
    Ok((model, CheckpointMeta::from_json(&meta)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub steps: usize,
    pub best_bleu: Option<f64>,
    /// The training log, also written to `log_path`.
    pub log: String,
}

/// Model hyperparameters that come from the run rather than the data.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelShape {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub l2: f64,
    pub init_range: f64,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::new(vec![1], 1);
        ModelShape {
            embedding_dim: d.embedding_dim,
            hidden_dim: d.hidden_dim,
            dropout: d.dropout,
            l2: d.l2,
            init_range: d.init_range,
        }
    }
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (step as u64).wrapping_add(0xD1B5_4A32_D192_ED03)
}

/// Greedy-decoded validation BLEU against the raw (unsplit) references.
fn validation_bleu(
    model: &Model<f32>,
    meta: &CheckpointMeta,
    vocabs: &Vocabularies,
    data: &[(Example, super::data::RawExample, Vec<String>)],
) -> Result<f64> {
    let mut hyps = Vec::with_capacity(data.len());
    let mut refs = Vec::with_capacity(data.len());
    for (ex, raw, reference) in data {
        let srcs: Vec<&[usize]> = ex.sources.iter().map(Vec::as_slice).collect();
        let ids = greedy_translate(model, &srcs, ex.image.as_deref(), meta.train.max_len)?;
        let out = ids_to_output(meta.task, vocabs, raw, &ids)?;
        hyps.push(finish_output(meta, raw, out));
        refs.push(vec![reference.clone()]);
    }
    Ok(bleu(&hyps, &refs)?.value)
}

/// Train on `train_spec`, validating on `valid_spec` when given. Writes
/// `best.ckpt`, `last.ckpt` and `train.log` into the output directory.
/// Without validation data the best checkpoint is the last one.
pub fn train(
    train_spec: &DatasetSpec,
    valid_spec: Option<&DatasetSpec>,
    shape: &ModelShape,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let store = match &train_spec.images {
        Some(src) => Some(ImageFeatureStore::load(&src.features, &src.index)?),
        None => None,
    };
    let raw = load_raw(train_spec, store.as_ref())?;
    let vocabs = Vocabularies::build(train_spec.task, &raw, config.source_vocab_size, config.target_vocab_size)?;
    let examples: Vec<Example> = raw.iter().map(|r| vocabs.encode(train_spec.task, r)).collect::<Result<_>>()?;

    let valid = match valid_spec {
        None => Vec::new(),
        Some(spec) => {
            if spec.task != train_spec.task || spec.sources.len() != train_spec.sources.len() {
                return Err(Error::Configuration("validation data must match the training streams".into()));
            }
            let vstore = match &spec.images {
                Some(src) if train_spec.images.as_ref().is_some_and(|t| t.features == src.features && t.index == src.index) => {
                    store.clone()
                }
                Some(src) => Some(ImageFeatureStore::load(&src.features, &src.index)?),
                None => None,
            };
            let mut unsplit = spec.clone();
            unsplit.split_german = false;
            let refs = load_raw(&unsplit, vstore.as_ref())?;
            let vraw = load_raw(spec, vstore.as_ref())?;
            vraw.into_iter()
                .zip(refs)
                .map(|(r, u)| {
                    let reference = u.target.ok_or_else(|| Error::usage("validation data needs targets"))?;
                    Ok((vocabs.encode(spec.task, &r)?, r, reference))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let mut mc = ModelConfig::new(vocabs.sources.iter().map(Vocabulary::len).collect(), vocabs.target.len());
    mc.embedding_dim = shape.embedding_dim;
    mc.hidden_dim = shape.hidden_dim;
    mc.dropout = shape.dropout;
    mc.l2 = shape.l2;
    mc.init_range = shape.init_range;
    mc.init_seed = config.seed;
    mc.image_dim = store.as_ref().map(ImageFeatureStore::dim);
    mc.share_encoder_weights = train_spec.task == TaskKind::Clc;
    let mut model: Model<f32> = Model::new(mc)?;
    let adam_config = AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() };
    let mut adam = AdamState::new(adam_config, model.params().tensors());

    let mut meta = CheckpointMeta {
        task: train_spec.task,
        split_german: train_spec.split_german,
        uses_image: train_spec.images.is_some(),
        source_vocabs: vocabs.sources.iter().map(|v| v.words().to_vec()).collect(),
        target_vocab: vocabs.target.words().to_vec(),
        train: config.clone(),
        step: 0,
        epoch: 0,
        valid_bleu: None,
    };

    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let best_path = config.out_dir.join("best.ckpt");
    let last_path = config.out_dir.join("last.ckpt");
    let log_path = config.out_dir.join("train.log");
    let mut log = String::new();
    let _ = writeln!(
        log,
        "task={} examples={} valid={} source_vocab={:?} target_vocab={} params={}",
        meta.task,
        examples.len(),
        valid.len(),
        vocabs.sources.iter().map(Vocabulary::len).collect::<Vec<_>>(),
        vocabs.target.len(),
        model.params().scalar_count()
    );
    if let Some(first) = examples.first() {
        let target = vocabs.target.decode(&first.target)?;
        let _ = writeln!(log, "sample target: {}", target.join(" "));
    }

    let mut step = 0;
    let mut best: Option<f64> = None;
    let mut bad_rounds = 0;
    let mut window = (0.0f64, 0usize);
    let mut round = |log: &mut String, model: &Model<f32>, meta: &mut CheckpointMeta, window: &mut (f64, usize)| -> Result<bool> {
        let loss = window.0 / window.1 as f64;
        *window = (0.0, 0);
        let _ = write!(log, "epoch={} step={} loss={loss:.6}", meta.epoch, meta.step);
        let improved = if valid.is_empty() {
            true
        } else {
            let b = validation_bleu(model, meta, &vocabs, &valid)?;
            let _ = write!(log, " valid_bleu={:.4}", b * 100.0);
            meta.valid_bleu = Some(b);
            best.is_none_or(|x| b > x)
        };
        log.push('\n');
        checkpoint::save(&last_path, model, &meta.to_json())?;
        if improved {
            best = meta.valid_bleu;
            std::fs::copy(&last_path, &best_path).map_err(|e| Error::io(&best_path, e))?;
        }
        Ok(improved)
    };
    'epochs: for epoch in 1..=config.max_epochs {
        meta.epoch = epoch;
        let batches = make_batches(&examples, config.batch_size, step_seed(config.seed, epoch))?;
        for batch in &batches {
            let stats = model.train_step(batch, &mut adam, step_seed(config.seed ^ 0xA5A5, step))?;
            step += 1;
            meta.step = step;
            window.0 += stats.loss;
            window.1 += 1;
            let last_step = config.max_steps.is_some_and(|m| step >= m);
            if step % config.valid_interval == 0 || last_step {
                if round(&mut log, &model, &mut meta, &mut window)? {
                    bad_rounds = 0;
                } else {
                    bad_rounds += 1;
                    if bad_rounds >= config.patience {
                        let _ = writeln!(log, "early stop after {bad_rounds} validations without improvement");
                        break 'epochs;
                    }
                }
                if last_step {
                    break 'epochs;
                }
            }
        }
    }
    if window.1 > 0 {
        round(&mut log, &model, &mut meta, &mut window)?;
    }
    let _ = writeln!(log, "done steps={step} best_valid_bleu={}", best.map_or("n/a".into(), |b| format!("{:.4}", b * 100.0)));
    std::fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainOutcome { best_checkpoint: best_path, last_checkpoint: last_path, log_path, steps: step, best_bleu: best, log })
}
