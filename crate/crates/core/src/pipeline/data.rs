use std::collections::HashMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::editops::{derive_edits, script_vocabulary};
use crate::seqmodel::{Batch, Example};
use crate::textproc::{build_vocab, split_contractions, split_pronoun_endings, Vocabulary};
use crate::{Error, Result};

/// The three workflows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Post-editing from (source, MT) to the post-edit, as edit scripts.
    Ape,
    /// Translation from the source, optional SMT output and image.
    Mmt,
    /// Captioning from five source captions with shared encoders.
    Clc,
}

/// Caption streams per image in captioning mode.
pub const CAPTIONS_PER_IMAGE: usize = 5;

impl TaskKind {
    /// Accepted numbers of source streams.
    fn stream_counts(self) -> &'static [usize] {
        match self {
            TaskKind::Ape => &[2],
            TaskKind::Mmt => &[1, 2],
            TaskKind::Clc => &[CAPTIONS_PER_IMAGE],
        }
    }

    /// Whether source stream `i` is in the target language.
    fn target_language_stream(self, i: usize) -> bool {
        matches!((self, i), (TaskKind::Ape, 1) | (TaskKind::Mmt, 1))
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Ape => "ape",
            TaskKind::Mmt => "mmt",
            TaskKind::Clc => "clc",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ape" => Ok(TaskKind::Ape),
            "mmt" => Ok(TaskKind::Mmt),
            "clc" => Ok(TaskKind::Clc),
            _ => Err(Error::Configuration(format!("unknown task {s:?} (expected ape, mmt or clc)"))),
        }
    }
}

/// Image features for a dataset: the feature matrix, its id index and an
/// optional per-line id stream (line `i` uses row `i` without one).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSource {
    pub features: PathBuf,
    pub index: PathBuf,
    pub ids: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    pub task: TaskKind,
    /// ape: source, MT. mmt: source[, SMT output]. clc: five captions.
    pub sources: Vec<PathBuf>,
    pub target: Option<PathBuf>,
    pub images: Option<ImageSource>,
    /// Split German contractions and case endings on target-language streams.
    pub split_german: bool,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = self.task.stream_counts();
        if !counts.contains(&self.sources.len()) {
            return Err(Error::Configuration(format!(
                "task {} takes {counts:?} source streams, got {}",
                self.task,
                self.sources.len()
            )));
        }
        if self.task == TaskKind::Ape && self.images.is_some() {
            return Err(Error::Configuration("task ape takes no image features".into()));
        }
        Ok(())
    }
}

const IMGF_MAGIC: &[u8; 4] = b"IMGF";
const IMGF_VERSION: u32 = 1;

/// Row-major f32 feature matrix with an id-to-row index.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFeatureStore {
    dim: usize,
    data: Vec<f32>,
    index: HashMap<String, usize>,
    ids: Vec<String>,
}

impl ImageFeatureStore {
    /// Rows together with their ids, in row order.
    pub fn new(dim: usize, rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let mut store = ImageFeatureStore { dim, data: Vec::new(), index: HashMap::new(), ids: Vec::new() };
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::Dataset(format!("image {id}: {} features, expected {dim}", row.len())));
            }
            if store.index.insert(id.clone(), store.ids.len()).is_some() {
                return Err(Error::Index(format!("duplicate image id {id}")));
            }
            store.ids.push(id);
            store.data.extend(row);
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, row: usize) -> Option<&[f32]> {
        (row < self.len()).then(|| &self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn get(&self, id: &str) -> Result<&[f32]> {
        let row = self
            .index
            .get(id)
            .ok_or_else(|| Error::Index(format!("image id {id} not in the feature index")))?;
        Ok(self.row(*row).expect("indexed rows exist"))
    }

    /// `IMGF`, u32 version, u32 rows, u32 dim, then little-endian f32 rows;
    /// the index file has one `id<TAB>row` line per row.
    pub fn save(&self, features: &Path, index: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(16 + self.data.len() * 4);
        out.extend_from_slice(IMGF_MAGIC);
        for v in [IMGF_VERSION, self.len() as u32, self.dim as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::write(features, out).map_err(|e| Error::io(features, e))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(index).map_err(|e| Error::io(index, e))?);
        for (row, id) in self.ids.iter().enumerate() {
            writeln!(f, "{id}\t{row}").map_err(|e| Error::io(index, e))?;
        }
        f.flush().map_err(|e| Error::io(index, e))
    }

    /// Index lines are `id<TAB>row`, or a bare `id` meaning its line number.
    pub fn load(features: &Path, index: &Path) -> Result<Self> {
        let bytes = std::fs::read(features).map_err(|e| Error::io(features, e))?;
        let bad = |msg: &str| Error::Dataset(format!("{}: {msg}", features.display()));
        if bytes.len() < 16 || &bytes[..4] != IMGF_MAGIC {
            return Err(bad("not an IMGF feature file"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
        if word(1) != IMGF_VERSION {
            return Err(bad(&format!("unsupported version {}", word(1))));
        }
        let (n, dim) = (word(2) as usize, word(3) as usize);
        if bytes.len() != 16 + n * dim * 4 {
            return Err(bad(&format!("size does not match {n} rows of {dim} features")));
        }
        let data: Vec<f32> = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let text = std::fs::read_to_string(index).map_err(|e| Error::io(index, e))?;
        let mut by_row: Vec<Option<String>> = vec![None; n];
        for (line_no, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let mut parts = line.split_whitespace();
            let id = parts.next().expect("non-empty line").to_string();
            let row = match parts.next() {
                Some(r) => r
                    .parse::<usize>()
                    .map_err(|_| Error::Index(format!("{}: bad row {r:?}", index.display())))?,
                None => line_no,
            };
            match by_row.get_mut(row) {
                Some(slot @ None) => *slot = Some(id),
                Some(Some(_)) => return Err(Error::Index(format!("{}: row {row} indexed twice", index.display()))),
                None => return Err(Error::Index(format!("{}: row {row} outside {n} rows", index.display()))),
            }
        }
        let rows = by_row
            .into_iter()
            .enumerate()
            .map(|(r, id)| {
                let id = id.ok_or_else(|| Error::Index(format!("{}: row {r} has no id", index.display())))?;
                Ok((id, data[r * dim..(r + 1) * dim].to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, rows)
    }
}

pub fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.split_whitespace().map(str::to_string).collect()).collect())
}

pub fn write_corpus<S: AsRef<str>>(path: &Path, lines: &[Vec<S>]) -> Result<()> {
    let mut out = String::new();
    for line in lines {
        for (i, t) in line.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(t.as_ref());
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn german_split(tokens: &[String]) -> Vec<String> {
    split_pronoun_endings(&split_contractions(tokens))
}

/// One example as text, after preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawExample {
    pub sources: Vec<Vec<String>>,
    pub image: Option<Vec<f32>>,
    pub target: Option<Vec<String>>,
    /// The MT line before splitting (ape only), used for punctuation fixes.
    pub mt: Option<Vec<String>>,
}

/// Read, check and preprocess every stream of `spec`.
pub fn load_raw(spec: &DatasetSpec, store: Option<&ImageFeatureStore>) -> Result<Vec<RawExample>> {
    spec.validate()?;
    let mut files: Vec<(&Path, Vec<Vec<String>>)> = Vec::new();
    for p in spec.sources.iter().chain(&spec.target) {
        files.push((p, read_corpus(p)?));
    }
    let n = files[0].1.len();
    if n == 0 {
        return Err(Error::Dataset(format!("{} is empty", files[0].0.display())));
    }
    if let Some((p, c)) = files.iter().find(|(_, c)| c.len() != n) {
        return Err(Error::Dataset(format!(
            "{} has {} lines but {} has {n}",
            p.display(),
            c.len(),
            files[0].0.display()
        )));
    }
    let images: Option<Vec<Vec<f32>>> = match (&spec.images, store) {
        (None, _) => None,
        (Some(_), None) => return Err(Error::usage("image features configured but not loaded")),
        (Some(src), Some(store)) => Some(match &src.ids {
            Some(ids_path) => {
                let text = std::fs::read_to_string(ids_path).map_err(|e| Error::io(ids_path, e))?;
                let ids: Vec<&str> = text.lines().map(str::trim).collect();
                if ids.len() != n {
                    return Err(Error::Dataset(format!(
                        "{} has {} lines but {} has {n}",
                        ids_path.display(),
                        ids.len(),
                        files[0].0.display()
                    )));
                }
                ids.iter().map(|id| store.get(id).map(<[f32]>::to_vec)).collect::<Result<_>>()?
            }
            None => (0..n)
                .map(|i| {
                    store
                        .row(i)
                        .map(<[f32]>::to_vec)
                        .ok_or_else(|| Error::Index(format!("line {} has no image row", i + 1)))
                })
                .collect::<Result<_>>()?,
        }),
    };
    let streams = spec.sources.len();
    let mut target_file = (spec.target.is_some()).then(|| files.pop().expect("target read").1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut sources = Vec::with_capacity(streams);
        let mut mt = None;
        for (s, (_, lines)) in files.iter().enumerate() {
            let line = lines[i].clone();
            if spec.task == TaskKind::Ape && s == 1 {
                mt = Some(line.clone());
            }
            let split = spec.split_german && spec.task.target_language_stream(s);
            sources.push(if split { german_split(&line) } else { line });
        }
        let target = target_file.as_mut().map(|t| {
            let line = std::mem::take(&mut t[i]);
            if spec.split_german {
                german_split(&line)
            } else {
                line
            }
        });
        out.push(RawExample { sources, image: images.as_ref().map(|im| im[i].clone()), target, mt });
    }
    Ok(out)
}

/// Vocabularies of one model: one per source stream plus the target one
/// (extended with edit operations for post-editing).
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabularies {
    pub sources: Vec<Vocabulary>,
    pub target: Vocabulary,
}

impl Vocabularies {
    /// Frequency-ranked vocabularies from training data. Captioning streams
    /// share one vocabulary.
    pub fn build(task: TaskKind, data: &[RawExample], source_max: usize, target_max: usize) -> Result<Self> {
        let streams = data.first().map_or(0, |e| e.sources.len());
        let sources = if task == TaskKind::Clc {
            let shared =
                build_vocab(data.iter().flat_map(|e| e.sources.iter().map(Vec::as_slice)), source_max)?;
            vec![shared; streams]
        } else {
            (0..streams)
                .map(|s| build_vocab(data.iter().map(|e| e.sources[s].as_slice()), source_max))
                .collect::<Result<_>>()?
        };
        let targets: Vec<&[String]> = data
            .iter()
            .map(|e| e.target.as_deref().ok_or_else(|| Error::usage("training data needs targets")))
            .collect::<Result<_>>()?;
        let target = build_vocab(targets.iter().copied(), target_max)?;
        let target = if task == TaskKind::Ape { script_vocabulary(&target)? } else { target };
        Ok(Vocabularies { sources, target })
    }

    /// Model inputs for `raw`; the target is included when present.
    pub fn encode(&self, task: TaskKind, raw: &RawExample) -> Result<Example> {
        if raw.sources.len() != self.sources.len() {
            return Err(Error::usage(format!(
                "{} input streams for a model with {} encoders",
                raw.sources.len(),
                self.sources.len()
            )));
        }
        let sources = raw.sources.iter().zip(&self.sources).map(|(s, v)| v.encode(s, true)).collect();
        let target = match (&raw.target, task) {
            (None, _) => Vec::new(),
            (Some(pe), TaskKind::Ape) => {
                let mut ids = derive_edits(&raw.sources[1], pe).encode(&self.target)?;
                ids.push(crate::textproc::EOS_ID);
                ids
            }
            (Some(t), _) => self.target.encode(t, true),
        };
        Ok(Example { sources, image: raw.image.clone(), target })
    }
}

/// Length-bucketed batches in a seeded order: shuffle, sort windows of 20
/// batches by target length, cut, then shuffle the batches.
pub fn make_batches(examples: &[Example], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::usage("batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for window in order.chunks(batch_size * 20) {
        let mut w = window.to_vec();
        w.sort_by_key(|&i| (examples[i].target.len(), i));
        groups.extend(w.chunks(batch_size).map(<[usize]>::to_vec));
    }
    groups.shuffle(&mut rng);
    groups
        .iter()
        .map(|g| Batch::from_examples(&g.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>()))
        .collect()
}
