use std::collections::HashMap;

use super::{CorpusScore, Support};
use crate::error::{Error, Result};

/// Edit counts of one hypothesis against one reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TerEdits {
    /// Insertions, deletions, substitutions and shifts.
    pub edits: usize,
    pub shifts: usize,
    pub ref_len: usize,
}

impl TerEdits {
    pub fn rate(&self) -> f64 {
        self.edits as f64 / self.ref_len as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Average {
    /// Total edits over total reference length.
    #[default]
    Micro,
    /// Mean of the per-sentence rates.
    Macro,
}

/// Word-level edit distance with unit insert, delete and substitute costs.
pub fn levenshtein<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let (a, b) = intern(a, b);
    lev(&a, &b)
}

fn intern<S: AsRef<str>>(a: &[S], b: &[S]) -> (Vec<u32>, Vec<u32>) {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut out = [Vec::with_capacity(a.len()), Vec::with_capacity(b.len())];
    for (side, seq) in out.iter_mut().zip([a, b]) {
        for t in seq {
            let n = ids.len() as u32;
            side.push(*ids.entry(t.as_ref()).or_insert(n));
        }
    }
    let [a, b] = out;
    (a, b)
}

fn lev(a: &[u32], b: &[u32]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn occurs_in(haystack: &[u32], needle: &[u32]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Greedy block-shift search. Each round tries every hypothesis span that
/// also occurs in the reference, longest first, at every destination, and
/// applies the shift leaving the smallest edit distance, provided the
/// distance drops by at least the shift's unit cost. A shift that only
/// breaks even is taken too, since it can enable a profitable one; every
/// accepted shift lowers the distance, so the search terminates. Returns the
/// best `(distance, shifts)` seen.
fn shift_search(hyp: &[u32], reference: &[u32]) -> (usize, usize) {
    let mut cur = hyp.to_vec();
    let mut dist = lev(&cur, reference);
    let mut shifts = 0;
    let mut best_total = (dist, 0);
    let mut candidate = Vec::with_capacity(cur.len());
    while dist > 0 {
        let mut best: Option<(usize, Vec<u32>)> = None;
        for len in (1..=cur.len()).rev() {
            for start in 0..=cur.len() - len {
                let block = &cur[start..start + len];
                if !occurs_in(reference, block) {
                    continue;
                }
                let rest: Vec<u32> = cur[..start].iter().chain(&cur[start + len..]).copied().collect();
                for dest in 0..=rest.len() {
                    if dest == start {
                        continue;
                    }
                    candidate.clear();
                    candidate.extend_from_slice(&rest[..dest]);
                    candidate.extend_from_slice(block);
                    candidate.extend_from_slice(&rest[dest..]);
                    let d = lev(&candidate, reference);
                    if d < dist && best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        best = Some((d, candidate.clone()));
                    }
                }
            }
        }
        match best {
            Some((d, next)) => {
                cur = next;
                dist = d;
                shifts += 1;
                if dist + shifts < best_total.0 + best_total.1 {
                    best_total = (dist, shifts);
                }
            }
            None => break,
        }
    }
    best_total
}

/// Edits of `hyp` against a single reference.
pub fn ter_edits<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Result<TerEdits> {
    if reference.is_empty() {
        return Err(Error::usage("TER needs a non-empty reference"));
    }
    let (h, r) = intern(hyp, reference);
    let (dist, shifts) = shift_search(&h, &r);
    Ok(TerEdits {
        edits: dist + shifts,
        shifts,
        ref_len: r.len(),
    })
}

/// Edits against the reference giving the lowest rate (first on ties).
fn best_edits<S: AsRef<str>>(hyp: &[S], references: &[Vec<S>]) -> Result<TerEdits> {
    if references.is_empty() {
        return Err(Error::usage("TER needs at least one reference"));
    }
    let mut best: Option<TerEdits> = None;
    for r in references {
        let e = ter_edits(hyp, r)?;
        if best.is_none_or(|b| e.rate() < b.rate()) {
            best = Some(e);
        }
    }
    Ok(best.expect("non-empty"))
}

/// Minimum over references of edits / reference length.
pub fn ter<S: AsRef<str>>(hyp: &[S], references: &[Vec<S>]) -> Result<f64> {
    Ok(best_edits(hyp, references)?.rate())
}

fn corpus<S: AsRef<str>>(
    metric: &'static str,
    hypotheses: &[Vec<S>],
    edits: impl Iterator<Item = Result<TerEdits>>,
    average: Average,
) -> Result<CorpusScore> {
    if hypotheses.is_empty() {
        return Err(Error::usage("cannot score an empty corpus"));
    }
    let per: Vec<TerEdits> = edits.collect::<Result<_>>()?;
    let sentences: Vec<f64> = per.iter().map(TerEdits::rate).collect();
    let total_edits = per.iter().map(|e| e.edits).sum();
    let total_len = per.iter().map(|e| e.ref_len).sum();
    let value = match average {
        Average::Micro => total_edits as f64 / total_len as f64,
        Average::Macro => sentences.iter().sum::<f64>() / sentences.len() as f64,
    };
    Ok(CorpusScore {
        metric,
        value,
        sentences,
        support: Support::Edits {
            edits: total_edits,
            ref_len: total_len,
        },
    })
}

/// Micro-averaged corpus TER; each sentence uses its best reference.
pub fn ter_corpus<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<Vec<S>>]) -> Result<CorpusScore> {
    if hypotheses.len() != references.len() {
        return Err(Error::usage(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    let edits = hypotheses.iter().zip(references).map(|(h, r)| best_edits(h, r));
    corpus("TER", hypotheses, edits, Average::Micro)
}

/// TER of each hypothesis against its human post-edit, micro-averaged.
pub fn hter_corpus<S: AsRef<str>>(hypotheses: &[Vec<S>], post_edits: &[Vec<S>]) -> Result<CorpusScore> {
    hter_corpus_with(hypotheses, post_edits, Average::Micro)
}

pub fn hter_corpus_with<S: AsRef<str>>(
    hypotheses: &[Vec<S>],
    post_edits: &[Vec<S>],
    average: Average,
) -> Result<CorpusScore> {
    if hypotheses.len() != post_edits.len() {
        return Err(Error::usage(format!(
            "{} hypotheses but {} post-edits",
            hypotheses.len(),
            post_edits.len()
        )));
    }
    let edits = hypotheses.iter().zip(post_edits).map(|(h, p)| ter_edits(h, p));
    corpus("HTER", hypotheses, edits, average)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_is_zero() {
        assert_eq!(ter(&toks("a b c"), &[toks("a b c")]).unwrap(), 0.0);
    }

    #[test]
    fn substitution() {
        assert_eq!(ter(&toks("a b"), &[toks("a c")]).unwrap(), 0.5);
    }

    #[test]
    fn block_shift() {
        let e = ter_edits(&toks("c a b"), &toks("a b c")).unwrap();
        assert_eq!((e.edits, e.shifts), (1, 1));
        assert!((e.rate() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn best_reference_wins() {
        let refs = vec![toks("x y z"), toks("a b")];
        assert_eq!(ter(&toks("a b"), &refs).unwrap(), 0.0);
    }

    #[test]
    fn empty_hypothesis_costs_reference_length() {
        let none: Vec<String> = Vec::new();
        assert_eq!(ter(&none, &[toks("a b")]).unwrap(), 1.0);
    }

    #[test]
    fn empty_reference_is_rejected() {
        assert!(ter(&toks("a"), &[vec![]]).is_err());
        assert!(ter::<String>(&toks("a"), &[]).is_err());
    }

    #[test]
    fn hter_micro_and_macro() {
        let hyps = vec![toks("a b c x"), toks("a b c d e f")];
        let pes = vec![toks("a b c d"), toks("a b c d e f")];
        let micro = hter_corpus(&hyps, &pes).unwrap();
        assert!((micro.value - 0.1).abs() < 1e-15);
        let mac = hter_corpus_with(&hyps, &pes, Average::Macro).unwrap();
        assert!((mac.value - 0.125).abs() < 1e-15);
        assert!(hter_corpus(&hyps, &pes[..1]).is_err());
    }
}
