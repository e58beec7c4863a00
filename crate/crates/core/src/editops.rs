//! Keep/delete/insert edit scripts relating an MT sentence to its post-edit.
//!
//! The post-edit is represented as the shortest sequence of operations that
//! walks the MT sentence left to right: `Keep` copies the next MT token,
//! `Delete` skips it and `Insert(w)` emits `w`. Substitution is not an
//! operation; it costs a delete plus an insert.

use std::fmt;

use crate::error::{Error, Result};
use crate::textproc::{Vocabulary, BOS_ID, DELETE, DELETE_ID, EOS_ID, KEEP, KEEP_ID, PAD_ID};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EditOp {
    Keep,
    Delete,
    Insert(String),
}

impl EditOp {
    /// `Insert` requires a non-empty word without whitespace that is not one
    /// of the operation tokens.
    pub fn insert(word: impl Into<String>) -> Result<Self> {
        let word = word.into();
        if word.is_empty() || word.contains(char::is_whitespace) || word == KEEP || word == DELETE {
            return Err(Error::usage(format!("invalid insert token {word:?}")));
        }
        Ok(EditOp::Insert(word))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct EditScript(pub Vec<EditOp>);

impl EditScript {
    pub fn ops(&self) -> &[EditOp] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of MT tokens the script consumes (`Keep` + `Delete`).
    pub fn consumed(&self) -> usize {
        self.0
            .iter()
            .filter(|op| matches!(op, EditOp::Keep | EditOp::Delete))
            .count()
    }

    /// Parse the text form: `<keep>`, `<delete>` or a bare inserted word per
    /// whitespace-separated field.
    pub fn parse(line: &str) -> Self {
        EditScript(
            line.split_whitespace()
                .map(|t| match t {
                    KEEP => EditOp::Keep,
                    DELETE => EditOp::Delete,
                    w => EditOp::Insert(w.to_string()),
                })
                .collect(),
        )
    }

    /// Rendered operation tokens.
    pub fn tokens(&self) -> Vec<String> {
        self.0
            .iter()
            .map(|op| match op {
                EditOp::Keep => KEEP.to_string(),
                EditOp::Delete => DELETE.to_string(),
                EditOp::Insert(w) => w.clone(),
            })
            .collect()
    }

    /// Token ids in a vocabulary extended by [`script_vocabulary`]. Inserted
    /// words outside the vocabulary map to UNK.
    pub fn encode(&self, vocab: &Vocabulary) -> Result<Vec<usize>> {
        if !vocab.has_edit_operations() {
            return Err(Error::Configuration(
                "vocabulary has no keep/delete entries".into(),
            ));
        }
        Ok(self
            .0
            .iter()
            .map(|op| match op {
                EditOp::Keep => KEEP_ID,
                EditOp::Delete => DELETE_ID,
                EditOp::Insert(w) => vocab.id_or_unk(w),
            })
            .collect())
    }

    /// Inverse of [`EditScript::encode`]. Stops at EOS and skips PAD/BOS.
    pub fn decode(ids: &[usize], vocab: &Vocabulary) -> Result<Self> {
        if !vocab.has_edit_operations() {
            return Err(Error::Configuration(
                "vocabulary has no keep/delete entries".into(),
            ));
        }
        let mut ops = Vec::with_capacity(ids.len());
        for &id in ids {
            match id {
                EOS_ID => break,
                PAD_ID | BOS_ID => {}
                KEEP_ID => ops.push(EditOp::Keep),
                DELETE_ID => ops.push(EditOp::Delete),
                _ => ops.push(EditOp::Insert(vocab.token(id)?.to_string())),
            }
        }
        Ok(EditScript(ops))
    }
}

impl fmt::Display for EditScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens().join(" "))
    }
}

/// Extend a target vocabulary with the reserved KEEP and DELETE entries.
pub fn script_vocabulary(target: &Vocabulary) -> Result<Vocabulary> {
    target.with_edit_operations()
}

/// Shortest keep/delete/insert script turning `mt` into `pe`.
///
/// The backtrace runs from the end of both sentences and prefers `Keep`,
/// then `Delete`, then `Insert`. Read left to right this places the inserts
/// of a replaced span before the deletion that closes it.
pub fn derive_edits<S: AsRef<str>>(mt: &[S], pe: &[S]) -> EditScript {
    let (n, m) = (mt.len(), pe.len());
    // cost[i][j]: edits to turn mt[..i] into pe[..j].
    let width = m + 1;
    let mut cost = vec![0usize; (n + 1) * width];
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        cost[i * width] = i;
        for j in 1..=m {
            cost[i * width + j] = if mt[i - 1].as_ref() == pe[j - 1].as_ref() {
                cost[(i - 1) * width + j - 1]
            } else {
                1 + cost[(i - 1) * width + j].min(cost[i * width + j - 1])
            };
        }
    }

    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 && mt[i - 1].as_ref() == pe[j - 1].as_ref() && cost[(i - 1) * width + j - 1] == here {
            ops.push(EditOp::Keep);
            i -= 1;
            j -= 1;
        } else if i > 0 && cost[(i - 1) * width + j] + 1 == here {
            ops.push(EditOp::Delete);
            i -= 1;
        } else {
            ops.push(EditOp::Insert(pe[j - 1].as_ref().to_string()));
            j -= 1;
        }
    }
    ops.reverse();
    EditScript(ops)
}

/// Apply a (possibly malformed) script to `mt`. MT tokens left over when the
/// script ends are copied; `Keep`/`Delete` past the end of `mt` are ignored.
pub fn apply_edits<S: AsRef<str>>(mt: &[S], script: &EditScript) -> Vec<String> {
    let mut out = Vec::with_capacity(mt.len() + script.len());
    let mut next = mt.iter();
    for op in script.ops() {
        match op {
            EditOp::Keep => {
                if let Some(t) = next.next() {
                    out.push(t.as_ref().to_string());
                }
            }
            EditOp::Delete => {
                next.next();
            }
            EditOp::Insert(w) => out.push(w.clone()),
        }
    }
    out.extend(next.map(|t| t.as_ref().to_string()));
    out
}
