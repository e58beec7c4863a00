use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Result};

/// Source word used for unaligned target words.
pub const NULL_SOURCE: &str = "NULL";

/// Word alignment of one sentence pair: `(source, target)` links, 0-based.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Alignment {
    links: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn new(mut links: Vec<(usize, usize)>) -> Self {
        links.sort_unstable();
        links.dedup();
        Alignment { links }
    }

    /// Parse space-separated `i-j` links (source `i`, target `j`).
    pub fn parse(line: &str) -> Result<Self> {
        let mut links = Vec::new();
        for item in line.split_whitespace() {
            let parsed = item
                .split_once('-')
                .and_then(|(i, j)| Some((i.parse().ok()?, j.parse().ok()?)));
            match parsed {
                Some(link) => links.push(link),
                None => return Err(Error::Alignment(format!("malformed link {item:?}"))),
            }
        }
        Ok(Self::new(links))
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn validate(&self, source_len: usize, target_len: usize) -> Result<()> {
        match self.links.iter().find(|&&(s, t)| s >= source_len || t >= target_len) {
            Some((s, t)) => Err(Error::Alignment(format!(
                "link {s}-{t} outside a {source_len}x{target_len} sentence pair"
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, (s, t)) in self.links.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}-{t}")?;
        }
        Ok(())
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// One bitoken per connected alignment group, placed at the group's first
/// target position, plus `tgt-NULL` for every unaligned target word.
/// Unaligned source words are dropped.
pub fn extract_bitokens<S: AsRef<str>>(source: &[S], target: &[S], alignment: &Alignment) -> Result<Vec<String>> {
    alignment.validate(source.len(), target.len())?;
    // Nodes: targets first, then sources.
    let offset = target.len();
    let mut parent: Vec<usize> = (0..offset + source.len()).collect();
    for &(s, t) in alignment.links() {
        let (a, b) = (find(&mut parent, t), find(&mut parent, offset + s));
        parent[a.max(b)] = a.min(b);
    }
    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for &(s, t) in alignment.links() {
        let root = find(&mut parent, t);
        groups.entry(root).or_default().push((t, s));
    }
    let mut out = Vec::new();
    for t in 0..target.len() {
        let root = find(&mut parent, t);
        match groups.get_mut(&root) {
            None => out.push(format!("{}-{NULL_SOURCE}", target[t].as_ref())),
            // The root is the smallest target index of its group.
            Some(links) if root == t => {
                links.sort_unstable();
                let pairs: Vec<String> = links
                    .iter()
                    .map(|&(t, s)| format!("{}-{}", target[t].as_ref(), source[s].as_ref()))
                    .collect();
                out.push(pairs.join("+"));
            }
            Some(_) => {}
        }
    }
    Ok(out)
}

/// [`extract_bitokens`] over a parallel corpus.
pub fn extract_corpus<S: AsRef<str>>(
    sources: &[Vec<S>],
    targets: &[Vec<S>],
    alignments: &[Alignment],
) -> Result<Vec<Vec<String>>> {
    if sources.len() != targets.len() || sources.len() != alignments.len() {
        return Err(Error::Alignment(format!(
            "{} source, {} target and {} alignment lines",
            sources.len(),
            targets.len(),
            alignments.len()
        )));
    }
    sources
        .iter()
        .zip(targets)
        .zip(alignments)
        .enumerate()
        .map(|(n, ((s, t), a))| {
            extract_bitokens(s, t, a).map_err(|e| Error::Alignment(format!("line {}: {e}", n + 1)))
        })
        .collect()
}
