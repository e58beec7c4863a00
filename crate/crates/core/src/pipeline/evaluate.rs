use std::fmt::Write as _;
use std::str::FromStr;

use crate::metrics::{bleu, hter_corpus_with, ter_corpus, Average, CorpusScore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Bleu,
    Ter,
    /// TER against the post-edit (first reference only).
    Hter,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bleu" => Ok(Metric::Bleu),
            "ter" => Ok(Metric::Ter),
            "hter" => Ok(Metric::Hter),
            _ => Err(Error::usage(format!("unknown metric {s:?} (expected bleu, ter or hter)"))),
        }
    }
}

/// Regroup line-aligned reference files into per-sentence reference sets.
pub fn transpose_references(hyp_lines: usize, files: &[Vec<Vec<String>>]) -> Result<Vec<Vec<Vec<String>>>> {
    if files.is_empty() {
        return Err(Error::usage("at least one reference file is required"));
    }
    if let Some(f) = files.iter().find(|f| f.len() != hyp_lines) {
        return Err(Error::usage(format!(
            "hypothesis has {hyp_lines} lines but a reference file has {}",
            f.len()
        )));
    }
    Ok((0..hyp_lines).map(|i| files.iter().map(|f| f[i].clone()).collect()).collect())
}

pub fn score(
    hyps: &[Vec<String>],
    refs: &[Vec<Vec<String>>],
    metric: Metric,
    average: Average,
) -> Result<CorpusScore> {
    if hyps.len() != refs.len() {
        return Err(Error::usage(format!("{} hypotheses but {} reference sets", hyps.len(), refs.len())));
    }
    match metric {
        Metric::Bleu => bleu(hyps, refs),
        Metric::Ter => ter_corpus(hyps, refs),
        Metric::Hter => {
            let pe: Vec<Vec<String>> = refs.iter().map(|r| r[0].clone()).collect();
            hter_corpus_with(hyps, &pe, average)
        }
    }
}

/// BLEU on a 0-100 scale with two decimals; error rates with four.
pub fn format_score(score: &CorpusScore) -> String {
    if score.metric == "BLEU" {
        format!("{} = {:.2}", score.metric, score.value * 100.0)
    } else {
        format!("{} = {:.4}", score.metric, score.value)
    }
}

/// `index<TAB>value` per sentence.
pub fn sentence_tsv(score: &CorpusScore) -> String {
    let mut s = String::new();
    for (i, v) in score.sentences.iter().enumerate() {
        let _ = writeln!(s, "{}\t{v:.6}", i + 1);
    }
    s
}

/// Two-metric table of named systems: HTER then BLEU.
pub fn comparison_table(rows: &[(String, f64, f64)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("System".len());
    let mut s = format!("{:<width$}  {:>6}  {:>6}\n", "System", "HTER", "BLEU");
    for (name, hter, bleu) in rows {
        let _ = writeln!(s, "{name:<width$}  {hter:>6.4}  {:>6.2}", bleu * 100.0);
    }
    s
}
