use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub const SENTENCE_START: &str = "<s>";
pub const SENTENCE_END: &str = "</s>";
pub const UNK_WORD: &str = "<unk>";

/// Log10 probability written for the context-only start symbol.
const NO_PROB: f64 = -99.0;

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    log_prob: f64,
    log_bow: Option<f64>,
}

/// Backoff n-gram model with log10 probabilities, as stored in ARPA files.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramLm {
    order: usize,
    /// `grams[n - 1]` holds the n-grams.
    grams: Vec<BTreeMap<Vec<String>, Entry>>,
}

/// Interpolated Witten-Bell model of the given order. The predicted
/// vocabulary is every corpus token plus `</s>` and `<unk>`; the unigram
/// level interpolates with the uniform distribution over it.
pub fn train_class_lm<S: AsRef<str>>(corpus: &[Vec<S>], order: usize) -> Result<NgramLm> {
    if order < 1 {
        return Err(Error::usage("language model order must be at least 1"));
    }
    let mut vocab: BTreeSet<String> = [SENTENCE_END, UNK_WORD].iter().map(|s| s.to_string()).collect();
    // counts[n - 1]: n-gram -> count
    let mut counts: Vec<HashMap<Vec<String>, u64>> = vec![HashMap::new(); order];
    for line in corpus {
        let mut padded = vec![SENTENCE_START.to_string()];
        for t in line {
            let t = t.as_ref();
            if t == SENTENCE_START || t == SENTENCE_END {
                return Err(Error::Dataset(format!("reserved symbol {t} inside a sentence")));
            }
            padded.push(t.to_string());
            vocab.insert(t.to_string());
        }
        padded.push(SENTENCE_END.to_string());
        for i in 1..padded.len() {
            for n in 1..=order.min(i + 1) {
                *counts[n - 1].entry(padded[i + 1 - n..=i].to_vec()).or_default() += 1;
            }
        }
    }

    // Context totals and distinct continuations, keyed by history.
    let mut context: Vec<HashMap<Vec<String>, (u64, u64)>> = vec![HashMap::new(); order];
    for (n, level) in counts.iter().enumerate() {
        for (gram, &c) in level {
            let e = context[n].entry(gram[..n].to_vec()).or_default();
            e.0 += c;
            e.1 += 1;
        }
    }

    let uniform = 1.0 / vocab.len() as f64;
    let mut probs: Vec<HashMap<Vec<String>, f64>> = vec![HashMap::new(); order];
    let (total, types) = context[0].get(&Vec::new()).copied().unwrap_or((0, 0));
    let unigram = |c: u64| (c as f64 + types as f64 * uniform) / (total + types) as f64;
    for w in &vocab {
        let c = counts[0].get(std::slice::from_ref(w)).copied().unwrap_or(0);
        probs[0].insert(vec![w.clone()], unigram(c));
    }
    for n in 1..order {
        let mut level = HashMap::new();
        for (gram, &c) in &counts[n] {
            let (ctx_total, ctx_types) = context[n][&gram[..n]];
            let lower = probs[n - 1][&gram[1..]];
            let p = (c as f64 + ctx_types as f64 * lower) / (ctx_total + ctx_types) as f64;
            level.insert(gram.clone(), p);
        }
        probs[n] = level;
    }

    let mut grams: Vec<BTreeMap<Vec<String>, Entry>> = vec![BTreeMap::new(); order];
    for (n, level) in probs.iter().enumerate() {
        for (gram, &p) in level {
            grams[n].insert(gram.clone(), Entry { log_prob: p.log10(), log_bow: None });
        }
    }
    if order > 1 {
        grams[0].insert(vec![SENTENCE_START.to_string()], Entry { log_prob: NO_PROB, log_bow: None });
    }
    for n in 1..order {
        for (ctx, &(c, t)) in &context[n] {
            let bow = (t as f64 / (c + t) as f64).log10();
            if let Some(e) = grams[n - 1].get_mut(ctx) {
                e.log_bow = Some(bow);
            }
        }
    }
    Ok(NgramLm { order, grams })
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Dataset(format!("ARPA line {line}: bad number {s:?}")))
}

impl NgramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Predictable words: every unigram except `<s>`.
    pub fn vocabulary(&self) -> Vec<&str> {
        self.grams[0]
            .keys()
            .map(|g| g[0].as_str())
            .filter(|w| *w != SENTENCE_START)
            .collect()
    }

    fn known(&self, w: &str) -> bool {
        self.grams[0].contains_key(std::slice::from_ref(&w.to_string()))
    }

    /// Log10 P(word | history) by standard backoff; only the last
    /// `order - 1` history words matter and unknown words map to `<unk>`.
    pub fn log10_prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        let map = |w: &str| if self.known(w) { w.to_string() } else { UNK_WORD.to_string() };
        let keep = history.len().min(self.order - 1);
        let mut gram: Vec<String> = history[history.len() - keep..].iter().map(|w| map(w.as_ref())).collect();
        gram.push(map(word));
        self.backoff(&gram)
    }

    fn backoff(&self, gram: &[String]) -> f64 {
        if let Some(e) = self.grams[gram.len() - 1].get(gram) {
            return e.log_prob;
        }
        if gram.len() == 1 {
            return f64::NEG_INFINITY;
        }
        let ctx = &gram[..gram.len() - 1];
        let bow = self.grams[ctx.len() - 1].get(ctx).and_then(|e| e.log_bow).unwrap_or(0.0);
        bow + self.backoff(&gram[1..])
    }

    /// Log10 probability of a sentence including `</s>`.
    pub fn sentence_log10_prob<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let mut history = vec![SENTENCE_START.to_string()];
        let mut total = 0.0;
        for w in sentence.iter().map(|w| w.as_ref()).chain([SENTENCE_END]) {
            total += self.log10_prob(&history, w);
            history.push(w.to_string());
        }
        total
    }

    /// Per-token perplexity, counting `</s>` as a token.
    pub fn perplexity<S: AsRef<str>>(&self, corpus: &[Vec<S>]) -> f64 {
        let tokens: usize = corpus.iter().map(|l| l.len() + 1).sum();
        let logp: f64 = corpus.iter().map(|l| self.sentence_log10_prob(l)).sum();
        10f64.powf(-logp / tokens as f64)
    }

    /// Histories with a stored backoff weight, lowest order first.
    pub fn contexts(&self) -> Vec<Vec<String>> {
        self.grams
            .iter()
            .flat_map(|level| level.iter().filter(|(_, e)| e.log_bow.is_some()).map(|(g, _)| g.clone()))
            .collect()
    }

    pub fn to_arpa(&self) -> String {
        let mut s = String::from("\\data\\\n");
        for (n, level) in self.grams.iter().enumerate() {
            let _ = writeln!(s, "ngram {}={}", n + 1, level.len());
        }
        for (n, level) in self.grams.iter().enumerate() {
            let _ = write!(s, "\n\\{}-grams:\n", n + 1);
            for (gram, e) in level {
                let _ = write!(s, "{}\t{}", e.log_prob, gram.join(" "));
                if let Some(b) = e.log_bow {
                    let _ = write!(s, "\t{b}");
                }
                s.push('\n');
            }
        }
        s.push_str("\n\\end\\\n");
        s
    }

    pub fn from_arpa(text: &str) -> Result<Self> {
        let mut declared: Vec<usize> = Vec::new();
        let mut grams: Vec<BTreeMap<Vec<String>, Entry>> = Vec::new();
        let mut section: Option<usize> = None;
        let mut in_data = false;
        let mut ended = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if line == "\\data\\" {
                in_data = true;
                continue;
            }
            if line == "\\end\\" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
                let n: usize = rest
                    .parse()
                    .map_err(|_| Error::Dataset(format!("ARPA line {lineno}: bad section header")))?;
                if n == 0 || n > declared.len() {
                    return Err(Error::Dataset(format!("ARPA line {lineno}: undeclared order {n}")));
                }
                section = Some(n);
                in_data = false;
                continue;
            }
            if in_data {
                let (n, count) = line
                    .strip_prefix("ngram ")
                    .and_then(|r| r.split_once('='))
                    .ok_or_else(|| Error::Dataset(format!("ARPA line {lineno}: expected ngram N=count")))?;
                let n: usize = n.trim().parse().map_err(|_| Error::Dataset(format!("ARPA line {lineno}: bad order")))?;
                let count = count.trim().parse().map_err(|_| Error::Dataset(format!("ARPA line {lineno}: bad count")))?;
                if n != declared.len() + 1 {
                    return Err(Error::Dataset(format!("ARPA line {lineno}: orders out of sequence")));
                }
                declared.push(count);
                grams.push(BTreeMap::new());
                continue;
            }
            let Some(n) = section else {
                return Err(Error::Dataset(format!("ARPA line {lineno}: text outside a section")));
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != n + 1 && fields.len() != n + 2 {
                return Err(Error::Dataset(format!("ARPA line {lineno}: expected a {n}-gram entry")));
            }
            let log_prob = parse_f64(fields[0], lineno)?;
            let log_bow = fields.get(n + 1).map(|b| parse_f64(b, lineno)).transpose()?;
            let gram = fields[1..=n].iter().map(|w| w.to_string()).collect();
            grams[n - 1].insert(gram, Entry { log_prob, log_bow });
        }
        if !ended {
            return Err(Error::Dataset("ARPA file lacks \\end\\".into()));
        }
        if declared.is_empty() {
            return Err(Error::Dataset("ARPA file declares no n-grams".into()));
        }
        for (n, (&want, level)) in declared.iter().zip(&grams).enumerate() {
            if want != level.len() {
                return Err(Error::Dataset(format!(
                    "ARPA declares {want} {}-grams but lists {}",
                    n + 1,
                    level.len()
                )));
            }
        }
        Ok(NgramLm { order: declared.len(), grams })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_arpa()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_arpa(&text)
    }
}
