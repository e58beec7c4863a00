use std::collections::{BTreeMap, HashMap};
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Label of tokens the clustering has never seen.
pub const UNK_CLASS: &str = "<unk>";

/// Token to class map with the objective trace of the run that built it.
#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    classes: BTreeMap<String, usize>,
    k: usize,
    /// Class-bigram mutual information (nats) at the start and after every
    /// accepted move.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Clustering {
    pub fn from_assignment(classes: BTreeMap<String, usize>, k: usize) -> Result<Self> {
        if let Some((t, &c)) = classes.iter().find(|(_, &c)| c >= k) {
            return Err(Error::Configuration(format!("token {t:?} has class {c} >= {k}")));
        }
        Ok(Clustering { classes, k, history: Vec::new(), iterations: 0, converged: false })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_of(&self, token: &str) -> Option<usize> {
        self.classes.get(token).copied()
    }

    /// Class label used in class corpora; unknown tokens get [`UNK_CLASS`].
    pub fn label(&self, token: &str) -> String {
        match self.class_of(token) {
            Some(c) => c.to_string(),
            None => UNK_CLASS.to_string(),
        }
    }

    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.classes
    }

    /// `token<TAB>class` lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for (t, c) in &self.classes {
            writeln!(f, "{t}\t{c}").map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a class file; K is one more than the largest class id.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut classes = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parsed = line.split_once('\t').and_then(|(t, c)| Some((t, c.trim().parse::<usize>().ok()?)));
            let Some((t, c)) = parsed else {
                return Err(Error::Dataset(format!("{}:{}: expected token<TAB>class", path.display(), n + 1)));
            };
            classes.insert(t.to_string(), c);
        }
        let k = classes.values().max().map_or(0, |&c| c + 1);
        Self::from_assignment(classes, k)
    }
}

/// Replace every token by its class label.
pub fn classify_corpus<S: AsRef<str>>(corpus: &[Vec<S>], clustering: &Clustering) -> Vec<Vec<String>> {
    corpus
        .iter()
        .map(|line| line.iter().map(|t| clustering.label(t.as_ref())).collect())
        .collect()
}

fn g(x: u64) -> f64 {
    if x == 0 {
        0.0
    } else {
        let x = x as f64;
        x * x.ln()
    }
}

/// Bigram statistics of a corpus over interned tokens.
struct Counts {
    tokens: Vec<String>,
    succ: Vec<Vec<(usize, u64)>>,
    pred: Vec<Vec<(usize, u64)>>,
    selfloop: Vec<u64>,
    total: u64,
}

impl Counts {
    /// Tokens are numbered by frequency rank, ties broken by the token.
    fn new<S: AsRef<str>>(corpus: &[Vec<S>]) -> Self {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for line in corpus {
            for t in line {
                *freq.entry(t.as_ref()).or_default() += 1;
            }
        }
        let mut tokens: Vec<(&str, u64)> = freq.into_iter().collect();
        tokens.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let index: HashMap<&str, usize> = tokens.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
        let mut bigrams: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for line in corpus {
            for w in line.windows(2) {
                *bigrams.entry((index[w[0].as_ref()], index[w[1].as_ref()])).or_default() += 1;
            }
        }
        let v = tokens.len();
        let mut c = Counts {
            tokens: tokens.iter().map(|(t, _)| t.to_string()).collect(),
            succ: vec![Vec::new(); v],
            pred: vec![Vec::new(); v],
            selfloop: vec![0; v],
            total: 0,
        };
        for (&(a, b), &n) in &bigrams {
            c.total += n;
            if a == b {
                c.selfloop[a] = n;
            } else {
                c.succ[a].push((b, n));
                c.pred[b].push((a, n));
            }
        }
        c
    }

    fn left(&self, w: usize) -> u64 {
        self.selfloop[w] + self.succ[w].iter().map(|p| p.1).sum::<u64>()
    }

    fn right(&self, w: usize) -> u64 {
        self.selfloop[w] + self.pred[w].iter().map(|p| p.1).sum::<u64>()
    }
}

/// Class bigram matrix plus marginals.
struct State {
    k: usize,
    class: Vec<usize>,
    size: Vec<usize>,
    m: Vec<u64>,
    left: Vec<u64>,
    right: Vec<u64>,
}

/// Per-class link counts of one (removed) token.
struct Neighbours {
    out: Vec<u64>,
    out_nz: Vec<usize>,
    inc: Vec<u64>,
    inc_nz: Vec<usize>,
}

impl Neighbours {
    fn new(k: usize) -> Self {
        Neighbours { out: vec![0; k], out_nz: Vec::new(), inc: vec![0; k], inc_nz: Vec::new() }
    }

    fn fill(&mut self, counts: &Counts, class: &[usize], w: usize) {
        for &c in &self.out_nz {
            self.out[c] = 0;
        }
        for &c in &self.inc_nz {
            self.inc[c] = 0;
        }
        self.out_nz.clear();
        self.inc_nz.clear();
        for &(v, n) in &counts.succ[w] {
            let c = class[v];
            if self.out[c] == 0 {
                self.out_nz.push(c);
            }
            self.out[c] += n;
        }
        for &(u, n) in &counts.pred[w] {
            let c = class[u];
            if self.inc[c] == 0 {
                self.inc_nz.push(c);
            }
            self.inc[c] += n;
        }
    }
}

impl State {
    fn new(counts: &Counts, class: Vec<usize>, k: usize) -> Self {
        let mut s = State { k, size: vec![0; k], m: vec![0; k * k], left: vec![0; k], right: vec![0; k], class };
        for w in 0..counts.tokens.len() {
            let c = s.class[w];
            s.size[c] += 1;
            s.left[c] += counts.left(w);
            s.right[c] += counts.right(w);
            s.m[c * k + c] += counts.selfloop[w];
            for &(v, n) in &counts.succ[w] {
                s.m[c * k + s.class[v]] += n;
            }
        }
        s
    }

    fn objective(&self) -> f64 {
        self.m.iter().map(|&x| g(x)).sum::<f64>()
            - self.left.iter().map(|&x| g(x)).sum::<f64>()
            - self.right.iter().map(|&x| g(x)).sum::<f64>()
    }

    /// Objective change from putting the removed token `w` into class `b`.
    fn gain(&self, nb: &Neighbours, counts: &Counts, w: usize, b: usize) -> f64 {
        let k = self.k;
        let mut d = 0.0;
        for &c in &nb.out_nz {
            if c != b {
                let x = self.m[b * k + c];
                d += g(x + nb.out[c]) - g(x);
            }
        }
        for &c in &nb.inc_nz {
            if c != b {
                let x = self.m[c * k + b];
                d += g(x + nb.inc[c]) - g(x);
            }
        }
        let diag = self.m[b * k + b];
        d += g(diag + nb.out[b] + nb.inc[b] + counts.selfloop[w]) - g(diag);
        let (l, r) = (counts.left(w), counts.right(w));
        d - (g(self.left[b] + l) - g(self.left[b])) - (g(self.right[b] + r) - g(self.right[b]))
    }

    /// Add (`sign` true) or remove the token's counts from class `c`.
    fn apply(&mut self, nb: &Neighbours, counts: &Counts, w: usize, c: usize, add: bool) {
        let k = self.k;
        let op = |x: &mut u64, n: u64| if add { *x += n } else { *x -= n };
        for &d in &nb.out_nz {
            op(&mut self.m[c * k + d], nb.out[d]);
        }
        for &d in &nb.inc_nz {
            op(&mut self.m[d * k + c], nb.inc[d]);
        }
        op(&mut self.m[c * k + c], counts.selfloop[w]);
        op(&mut self.left[c], counts.left(w));
        op(&mut self.right[c], counts.right(w));
        if add {
            self.size[c] += 1;
            self.class[w] = c;
        } else {
            self.size[c] -= 1;
        }
    }
}

fn to_mi(objective: f64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        let n = total as f64;
        objective / n + n.ln()
    }
}

/// Class-bigram mutual information (nats) of `corpus` under `clustering`,
/// computed from scratch. Tokens missing from the clustering share one
/// extra class.
pub fn class_bigram_mi<S: AsRef<str>>(corpus: &[Vec<S>], clustering: &Clustering) -> f64 {
    let counts = Counts::new(corpus);
    let k = clustering.k() + 1;
    let class = counts.tokens.iter().map(|t| clustering.class_of(t).unwrap_or(k - 1)).collect();
    let state = State::new(&counts, class, k);
    to_mi(state.objective(), counts.total)
}

/// Exchange clustering into `k` classes maximizing class-bigram mutual
/// information. Bigrams do not cross line boundaries.
///
/// Classes start as a round-robin over the frequency ranking. Each iteration
/// visits every token in a seeded random order and moves it to the class
/// with the largest strict gain; moves that would empty a class are skipped.
/// Stops after an iteration without moves or after `max_iterations`.
pub fn brown_cluster<S: AsRef<str>>(corpus: &[Vec<S>], k: usize, max_iterations: usize, seed: u64) -> Result<Clustering> {
    if k < 2 {
        return Err(Error::usage(format!("cluster count must be at least 2, got {k}")));
    }
    let counts = Counts::new(corpus);
    let v = counts.tokens.len();
    if v == 0 {
        return Err(Error::usage("cannot cluster an empty corpus"));
    }
    if k > v {
        return Err(Error::usage(format!("{k} classes requested for {v} distinct tokens")));
    }
    let mut state = State::new(&counts, (0..v).map(|w| w % k).collect(), k);
    let mut objective = state.objective();
    let mut history = vec![to_mi(objective, counts.total)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..v).collect();
    let mut nb = Neighbours::new(k);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        order.shuffle(&mut rng);
        let mut moved = false;
        for &w in &order {
            let a = state.class[w];
            if state.size[a] == 1 {
                continue;
            }
            nb.fill(&counts, &state.class, w);
            state.apply(&nb, &counts, w, a, false);
            let stay = state.gain(&nb, &counts, w, a);
            let (mut best, mut best_gain) = (a, f64::NEG_INFINITY);
            for b in (0..k).filter(|&b| b != a) {
                let gain = state.gain(&nb, &counts, w, b);
                if gain > best_gain {
                    best = b;
                    best_gain = gain;
                }
            }
            // Only strict improvements, with slack for rounding.
            if best_gain <= stay + 1e-9 * stay.abs().max(1.0) {
                best = a;
                best_gain = stay;
            }
            state.apply(&nb, &counts, w, best, true);
            if best != a {
                moved = true;
                objective += best_gain - stay;
                history.push(to_mi(objective, counts.total));
            }
        }
        if !moved {
            converged = true;
            break;
        }
    }
    let classes = counts.tokens.iter().cloned().zip(state.class.iter().copied()).collect();
    Ok(Clustering { classes, k, history, iterations, converged })
}
