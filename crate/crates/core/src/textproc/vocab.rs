use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const KEEP: &str = "<keep>";
pub const DELETE: &str = "<delete>";

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
/// Only valid in vocabularies extended with edit operations.
pub const KEEP_ID: usize = 4;
pub const DELETE_ID: usize = 5;

const BASE_RESERVED: [&str; 4] = [PAD, BOS, EOS, UNK];
const EDIT_RESERVED: [&str; 6] = [PAD, BOS, EOS, UNK, KEEP, DELETE];

/// Token/id bijection. Reserved tokens occupy the lowest ids; corpus tokens
/// follow in frequency order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    reserved: usize,
}

impl Vocabulary {
    /// Base vocabulary over `words` (reserved PAD, BOS, EOS, UNK first).
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_reserved(&BASE_RESERVED, words)
    }

    fn with_reserved<I, S>(reserved: &[&str], words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for w in words {
            let w = w.into();
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(Error::Vocabulary(format!("invalid vocabulary token {w:?}")));
            }
            if index.contains_key(&w) {
                return Err(Error::Configuration(format!(
                    "token {w:?} collides with an existing vocabulary entry"
                )));
            }
            index.insert(w.clone(), tokens.len());
            tokens.push(w);
        }
        Ok(Vocabulary {
            tokens,
            index,
            reserved: reserved.len(),
        })
    }

    /// The same words with KEEP and DELETE added to the reserved block.
    pub fn with_edit_operations(&self) -> Result<Self> {
        if self.has_edit_operations() {
            return Err(Error::Configuration("vocabulary already has edit operations".into()));
        }
        Self::with_reserved(&EDIT_RESERVED, self.words().iter().cloned())
    }

    pub fn has_edit_operations(&self) -> bool {
        self.reserved == EDIT_RESERVED.len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn reserved_count(&self) -> usize {
        self.reserved
    }

    /// Corpus tokens, in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[self.reserved..]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or UNK.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::Vocabulary(format!("id {id} outside vocabulary of {}", self.len())))
    }

    /// Map tokens to ids, optionally appending EOS.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], append_eos: bool) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect();
        if append_eos {
            ids.push(EOS_ID);
        }
        ids
    }

    /// Map ids back to tokens. Decoding stops at the first EOS; PAD and BOS
    /// are skipped.
    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            match id {
                EOS_ID => break,
                PAD_ID | BOS_ID => continue,
                _ => out.push(self.token(id)?.to_string()),
            }
        }
        Ok(out)
    }

    /// Write the corpus tokens one per line; line `n` holds id
    /// `reserved_count() + n`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        for w in self.words() {
            writeln!(file, "{w}").map_err(|e| Error::io(path, e))?;
        }
        file.flush().map_err(|e| Error::io(path, e))
    }

    /// Load a base vocabulary written by [`Vocabulary::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_words(text.lines().filter(|l| !l.is_empty()).map(str::to_string))
    }
}

/// Frequency-ranked vocabulary of at most `max_size` entries including the
/// reserved block. Ties are broken lexicographically.
pub fn build_vocab<'a, I, S>(corpus: I, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    if max_size <= BASE_RESERVED.len() {
        return Err(Error::usage(format!(
            "vocabulary size {max_size} leaves no room after {} reserved tokens",
            BASE_RESERVED.len()
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut total = 0usize;
    for sentence in corpus {
        for t in sentence {
            let t = t.as_ref();
            total += 1;
            if BASE_RESERVED.contains(&t) {
                continue;
            }
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    if total == 0 {
        return Err(Error::usage("cannot build a vocabulary from an empty corpus"));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - BASE_RESERVED.len());
    Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w.to_string()))
}
