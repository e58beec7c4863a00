use std::collections::HashMap;

use super::{CorpusScore, Support};
use crate::error::{Error, Result};

pub const BLEU_ORDER: usize = 4;

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts
                .entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    counts
}

struct SentenceStats {
    matches: [usize; BLEU_ORDER],
    totals: [usize; BLEU_ORDER],
    hyp_len: usize,
    ref_len: usize,
}

/// Reference length closest to `hyp_len`; the shorter one on ties.
fn closest_length<S>(hyp_len: usize, refs: &[Vec<S>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(hyp_len), r))
        .expect("at least one reference")
}

fn sentence_stats<S: AsRef<str>>(hyp: &[S], refs: &[Vec<S>]) -> SentenceStats {
    let mut matches = [0; BLEU_ORDER];
    let mut totals = [0; BLEU_ORDER];
    for n in 1..=BLEU_ORDER {
        let hyp_counts = ngram_counts(hyp, n);
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in refs {
            for (g, c) in ngram_counts(r, n) {
                let slot = max_ref.entry(g).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        totals[n - 1] = hyp.len().saturating_sub(n - 1);
        matches[n - 1] = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    SentenceStats {
        matches,
        totals,
        hyp_len: hyp.len(),
        ref_len: closest_length(hyp.len(), refs),
    }
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        return 0.0;
    }
    (1.0 - ref_len as f64 / hyp_len as f64).min(0.0).exp()
}

fn combine(log_precisions: impl Iterator<Item = f64>, hyp_len: usize, ref_len: usize) -> f64 {
    let mean = log_precisions.sum::<f64>() / BLEU_ORDER as f64;
    brevity_penalty(hyp_len, ref_len) * mean.exp()
}

fn unsmoothed(matches: &[usize; BLEU_ORDER], totals: &[usize; BLEU_ORDER], hyp_len: usize, ref_len: usize) -> f64 {
    if matches.iter().zip(totals).any(|(&m, &t)| m == 0 || t == 0) {
        return 0.0;
    }
    combine(
        matches.iter().zip(totals).map(|(&m, &t)| (m as f64 / t as f64).ln()),
        hyp_len,
        ref_len,
    )
}

fn smoothed(s: &SentenceStats) -> f64 {
    if s.matches[0] == 0 {
        return 0.0;
    }
    let logs = (0..BLEU_ORDER).map(|i| {
        let (m, t) = (s.matches[i] as f64, s.totals[i] as f64);
        if i == 0 {
            (m / t).ln()
        } else {
            ((m + 1.0) / (t + 1.0)).ln()
        }
    });
    combine(logs, s.hyp_len, s.ref_len)
}

fn check_refs<S>(refs: &[Vec<S>], row: usize) -> Result<()> {
    if refs.is_empty() {
        return Err(Error::usage(format!("sentence {row} has no reference")));
    }
    Ok(())
}

/// Sentence BLEU-4 with add-one smoothing of the n >= 2 precisions.
pub fn sentence_bleu<S: AsRef<str>>(hyp: &[S], refs: &[Vec<S>]) -> Result<f64> {
    check_refs(refs, 0)?;
    Ok(smoothed(&sentence_stats(hyp, refs)))
}

/// Unsmoothed corpus BLEU-4. The brevity penalty uses, per sentence, the
/// reference length closest to the hypothesis length.
pub fn bleu<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<Vec<S>>]) -> Result<CorpusScore> {
    if hypotheses.is_empty() {
        return Err(Error::usage("cannot score an empty corpus"));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::usage(format!(
            "{} hypotheses but {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matches = [0; BLEU_ORDER];
    let mut totals = [0; BLEU_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    let mut sentences = Vec::with_capacity(hypotheses.len());
    for (row, (h, refs)) in hypotheses.iter().zip(references).enumerate() {
        check_refs(refs, row)?;
        let s = sentence_stats(h, refs);
        for n in 0..BLEU_ORDER {
            matches[n] += s.matches[n];
            totals[n] += s.totals[n];
        }
        hyp_len += s.hyp_len;
        ref_len += s.ref_len;
        sentences.push(smoothed(&s));
    }
    Ok(CorpusScore {
        metric: "BLEU",
        value: unsmoothed(&matches, &totals, hyp_len, ref_len),
        sentences,
        support: Support::Ngrams {
            matches,
            totals,
            hyp_len,
            ref_len,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn perfect_match_is_one() {
        let h = vec![toks("a b c d e")];
        let r = vec![vec![toks("a b c d e")]];
        assert_eq!(bleu(&h, &r).unwrap().value, 1.0);
    }

    #[test]
    fn missing_higher_orders_give_zero() {
        let s = bleu(&[toks("a b")], &[vec![toks("a b c")]]).unwrap();
        assert_eq!(s.value, 0.0);
        let Support::Ngrams { matches, totals, .. } = s.support else { panic!() };
        assert_eq!(matches, [2, 1, 0, 0]);
        assert_eq!(totals, [2, 1, 0, 0]);
    }

    #[test]
    fn clipping() {
        let s = bleu(&[toks("the the the")], &[vec![toks("the cat")]]).unwrap();
        let Support::Ngrams { matches, totals, .. } = s.support else { panic!() };
        assert_eq!((matches[0], totals[0]), (1, 3));
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn closest_reference_length_prefers_shorter_on_ties() {
        let refs = vec![toks("a b c d e f"), toks("a b")];
        assert_eq!(closest_length(4, &refs), 2);
        assert_eq!(closest_length(5, &refs), 6);
    }

    #[test]
    fn errors() {
        let empty: Vec<Vec<String>> = Vec::new();
        assert!(bleu(&empty, &[]).is_err());
        assert!(bleu(&[toks("a")], &[vec![]]).is_err());
        assert!(bleu(&[toks("a")], &[]).is_err());
    }
}
