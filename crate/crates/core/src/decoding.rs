//! Greedy and beam-search generation.
//!
//! Search runs against a [`StepScorer`], which maps a decoder state and the
//! previously emitted token to the next state and a log-probability per
//! vocabulary entry. [`ModelScorer`] adapts a trained [`Model`].
//!
//! A hypothesis terminates when it emits EOS or when it reaches `max_len`
//! tokens. The result is the terminated hypothesis with the highest summed
//! log-probability; ties go to the lexicographically smallest token sequence.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Var};
use crate::seqmodel::{EncodedSequence, Graph, Mode, Model};
use crate::textproc::{BOS_ID, EOS_ID};

pub trait StepScorer {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    /// Initial state; the first token is scored with BOS as its predecessor.
    fn start(&mut self) -> Result<Self::State>;

    /// Next state and log-probabilities (length `vocab_size`) after feeding
    /// `prev` in `state`.
    fn advance(&mut self, state: &Self::State, prev: usize) -> Result<(Self::State, Vec<f64>)>;
}

#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    /// Emitted tokens, ending in EOS if `finished`.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: S,
    pub finished: bool,
}

impl<S> Hypothesis<S> {
    /// Tokens without the trailing EOS.
    pub fn output(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS_ID) if self.finished => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    fn last_token(&self) -> usize {
        self.tokens.last().copied().unwrap_or(BOS_ID)
    }
}

/// Score descending, then token sequence ascending.
fn rank<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn check_distribution(logp: &[f64], vocab: usize) -> Result<()> {
    if logp.len() != vocab {
        return Err(Error::Dimension {
            kind: "decode",
            detail: format!("scorer returned {} scores for a vocabulary of {vocab}", logp.len()),
        });
    }
    if logp.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric { kind: "decode" });
    }
    Ok(())
}

/// Emit the most probable token (lowest id on ties) until EOS or `max_len`
/// tokens. EOS is not part of the result.
pub fn greedy_decode<D: StepScorer>(scorer: &mut D, max_len: usize) -> Result<Vec<usize>> {
    if max_len == 0 {
        return Err(Error::usage("max_len must be at least 1"));
    }
    let vocab = scorer.vocab_size();
    let mut state = scorer.start()?;
    let mut prev = BOS_ID;
    let mut out = Vec::new();
    while out.len() < max_len {
        let (next, logp) = scorer.advance(&state, prev)?;
        check_distribution(&logp, vocab)?;
        let mut best = 0;
        for (t, &lp) in logp.iter().enumerate() {
            if lp > logp[best] {
                best = t;
            }
        }
        if best == EOS_ID {
            break;
        }
        out.push(best);
        state = next;
        prev = best;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct BeamResult<S> {
    pub best: Hypothesis<S>,
    /// Every terminated hypothesis, best first.
    pub terminated: Vec<Hypothesis<S>>,
}

/// Beam search of width `width` over summed log-probabilities.
///
/// Each step expands every active hypothesis by every token and keeps the
/// `width` best candidates; those ending in EOS (or reaching `max_len`)
/// leave the beam. Search stops when the beam is empty or when the best
/// terminated hypothesis scores strictly above every active one.
pub fn beam_search<D: StepScorer>(
    scorer: &mut D,
    width: usize,
    max_len: usize,
) -> Result<BeamResult<D::State>> {
    if width == 0 {
        return Err(Error::usage("beam width must be at least 1"));
    }
    if max_len == 0 {
        return Err(Error::usage("max_len must be at least 1"));
    }
    let vocab = scorer.vocab_size();
    let mut active = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: scorer.start()?,
        finished: false,
    }];
    let mut terminated: Vec<Hypothesis<D::State>> = Vec::new();

    while !active.is_empty() {
        let mut candidates = Vec::with_capacity(active.len() * vocab);
        for hyp in &active {
            let (next, logp) = scorer.advance(&hyp.state, hyp.last_token())?;
            check_distribution(&logp, vocab)?;
            for (t, &lp) in logp.iter().enumerate() {
                let mut tokens = Vec::with_capacity(hyp.tokens.len() + 1);
                tokens.extend_from_slice(&hyp.tokens);
                tokens.push(t);
                candidates.push(Hypothesis {
                    tokens,
                    log_prob: hyp.log_prob + lp,
                    state: next.clone(),
                    finished: t == EOS_ID,
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(width);

        active.clear();
        for c in candidates {
            if c.finished || c.tokens.len() >= max_len {
                terminated.push(c);
            } else {
                active.push(c);
            }
        }
        terminated.sort_by(rank);
        if let Some(best) = terminated.first() {
            if active.iter().all(|h| best.log_prob > h.log_prob) {
                break;
            }
        }
    }

    let best = terminated
        .first()
        .cloned()
        .expect("every path terminates by max_len");
    Ok(BeamResult { best, terminated })
}

/// [`StepScorer`] over a model and one input example. The decoder state is a
/// node on an inference-mode tape owned by the scorer.
pub struct ModelScorer<'m, T: Scalar> {
    model: &'m Model<T>,
    graph: Graph<'m, T>,
    encoded: Vec<EncodedSequence>,
    initial: Var,
}

impl<'m, T: Scalar> ModelScorer<'m, T> {
    pub fn new(model: &'m Model<T>, sources: &[&[usize]], image: Option<&[f32]>) -> Result<Self> {
        let mut graph = model.graph(Mode::Inference);
        let (encoded, initial) = model.start(&mut graph, sources, image)?;
        Ok(ModelScorer {
            model,
            graph,
            encoded,
            initial,
        })
    }
}

impl<T: Scalar> StepScorer for ModelScorer<'_, T> {
    type State = Var;

    fn vocab_size(&self) -> usize {
        self.model.config().target_vocab_size
    }

    fn start(&mut self) -> Result<Var> {
        Ok(self.initial)
    }

    fn advance(&mut self, state: &Var, prev: usize) -> Result<(Var, Vec<f64>)> {
        let contexts = self.model.contexts(&mut self.graph, *state, &self.encoded)?;
        let (next, logits) = self.model.decoder_step(&mut self.graph, *state, prev, &contexts)?;
        let logits: Vec<f64> = self.graph.value(logits).data().iter().map(|x| x.as_f64()).collect();
        Ok((next, log_softmax(&logits)))
    }
}

fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - log_z).collect()
}

/// Greedy translation of one example; returns ids without EOS.
pub fn greedy_translate<T: Scalar>(
    model: &Model<T>,
    sources: &[&[usize]],
    image: Option<&[f32]>,
    max_len: usize,
) -> Result<Vec<usize>> {
    let mut scorer = ModelScorer::new(model, sources, image)?;
    greedy_decode(&mut scorer, max_len)
}

/// Beam translation of one example; returns the best ids without EOS.
pub fn beam_translate<T: Scalar>(
    model: &Model<T>,
    sources: &[&[usize]],
    image: Option<&[f32]>,
    width: usize,
    max_len: usize,
) -> Result<Vec<usize>> {
    let mut scorer = ModelScorer::new(model, sources, image)?;
    Ok(beam_search(&mut scorer, width, max_len)?.best.output().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed next-token log-probabilities regardless of history.
    struct Constant(Vec<f64>);

    impl StepScorer for Constant {
        type State = ();
        fn vocab_size(&self) -> usize {
            self.0.len()
        }
        fn start(&mut self) -> Result<()> {
            Ok(())
        }
        fn advance(&mut self, _: &(), _: usize) -> Result<((), Vec<f64>)> {
            Ok(((), self.0.clone()))
        }
    }

    fn probs(p: &[f64]) -> Constant {
        Constant(p.iter().map(|x| x.ln()).collect())
    }

    #[test]
    fn eos_first_gives_empty_output() {
        let mut s = probs(&[0.1, 0.1, 0.7, 0.1]);
        assert!(greedy_decode(&mut s, 5).unwrap().is_empty());
        let r = beam_search(&mut s, 3, 5).unwrap();
        assert!(r.best.output().is_empty());
        assert!(r.best.finished);
    }

    #[test]
    fn max_len_truncates() {
        let mut s = probs(&[0.1, 0.1, 0.1, 0.7]);
        assert_eq!(greedy_decode(&mut s, 1).unwrap(), vec![3]);
        let r = beam_search(&mut s, 2, 1).unwrap();
        assert_eq!(r.best.tokens, vec![3]);
        assert!(!r.best.finished);
    }

    #[test]
    fn ties_prefer_lowest_id() {
        let mut s = probs(&[0.1, 0.3, 0.3, 0.3]);
        assert_eq!(greedy_decode(&mut s, 2).unwrap(), vec![1, 1]);
    }

    #[test]
    fn invalid_arguments() {
        let mut s = probs(&[0.25; 4]);
        assert!(matches!(beam_search(&mut s, 0, 3), Err(Error::Usage(_))));
        assert!(matches!(greedy_decode(&mut s, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn wrong_score_length_is_reported() {
        struct Short;
        impl StepScorer for Short {
            type State = ();
            fn vocab_size(&self) -> usize {
                4
            }
            fn start(&mut self) -> Result<()> {
                Ok(())
            }
            fn advance(&mut self, _: &(), _: usize) -> Result<((), Vec<f64>)> {
                Ok(((), vec![0.0]))
            }
        }
        assert!(matches!(greedy_decode(&mut Short, 2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn log_softmax_normalizes() {
        let l = log_softmax(&[1.0, 2.0, 3.0]);
        let total: f64 = l.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
