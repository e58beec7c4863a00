use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const GERMAN_RULES: &str = include_str!("../../data/german_rules.tsv");

/// Ordered `surface -> replacement` rules with their inverse.
///
/// A rule whose replacement ends in a token starting with `-` is a case-ending
/// rule (`keinem -> kein -em`); every other rule is a contraction rule
/// (`am -> an dem`).
#[derive(Clone, Debug)]
pub struct SplitRuleTable {
    rules: Vec<(String, Vec<String>)>,
    by_surface: HashMap<String, usize>,
    by_replacement: HashMap<Vec<String>, usize>,
    endings: HashSet<String>,
    longest: usize,
}

fn is_ending(token: &str) -> bool {
    token.len() > 1 && token.starts_with('-')
}

impl SplitRuleTable {
    /// Parse `surface<TAB>replacement tokens` lines. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, replacement) = line.split_once('\t').ok_or_else(|| {
                Error::Configuration(format!("rule line {}: expected surface<TAB>replacement", n + 1))
            })?;
            let surface = surface.trim();
            let replacement: Vec<String> =
                replacement.split_whitespace().map(str::to_string).collect();
            if surface.is_empty() || surface.contains(char::is_whitespace) || replacement.is_empty() {
                return Err(Error::Configuration(format!("rule line {}: malformed rule", n + 1)));
            }
            rules.push((surface.to_string(), replacement));
        }
        Self::from_rules(rules)
    }

    pub fn from_rules(rules: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut by_surface = HashMap::new();
        let mut by_replacement = HashMap::new();
        let mut endings = HashSet::new();
        for (i, (surface, replacement)) in rules.iter().enumerate() {
            if by_surface.insert(surface.clone(), i).is_some() {
                return Err(Error::Configuration(format!("duplicate rule for {surface}")));
            }
            if let Some(j) = by_replacement.insert(replacement.clone(), i) {
                return Err(Error::Configuration(format!(
                    "{} and {surface} share the replacement {:?}",
                    rules[j].0, replacement
                )));
            }
            if let Some(last) = replacement.last().filter(|t| is_ending(t)) {
                endings.insert(last.clone());
            }
        }
        for (surface, replacement) in &rules {
            for (other, other_rep) in &rules {
                if other_rep.len() > replacement.len() && other_rep.starts_with(replacement) {
                    return Err(Error::Configuration(format!(
                        "replacement of {surface} is a prefix of the replacement of {other}"
                    )));
                }
            }
        }
        let longest = rules.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
        Ok(SplitRuleTable {
            rules,
            by_surface,
            by_replacement,
            endings,
            longest,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled German table.
    pub fn german() -> &'static SplitRuleTable {
        static TABLE: OnceLock<SplitRuleTable> = OnceLock::new();
        TABLE.get_or_init(|| SplitRuleTable::parse(GERMAN_RULES).expect("bundled rule table is valid"))
    }

    pub fn rules(&self) -> &[(String, Vec<String>)] {
        &self.rules
    }

    pub fn is_ending_rule(&self, surface: &str) -> bool {
        self.by_surface
            .get(surface)
            .is_some_and(|&i| self.rules[i].1.last().is_some_and(|t| is_ending(t)))
    }

    fn split_where(&self, tokens: &[String], endings: bool) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        for t in tokens {
            match self.by_surface.get(t.as_str()) {
                Some(&i) if self.is_ending_rule(t) == endings => {
                    out.extend(self.rules[i].1.iter().cloned())
                }
                _ => out.push(t.clone()),
            }
        }
        out
    }

    pub fn split_contractions(&self, tokens: &[String]) -> Vec<String> {
        self.split_where(tokens, false)
    }

    pub fn split_pronoun_endings(&self, tokens: &[String]) -> Vec<String> {
        self.split_where(tokens, true)
    }

    /// Inverse of both splits. Replacement sequences are merged greedily from
    /// the left, longest first; a case-ending token that does not complete a
    /// rule is dropped.
    pub fn merge(&self, tokens: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        'outer: while i < tokens.len() {
            for len in (1..=self.longest.min(tokens.len() - i)).rev() {
                if let Some(&r) = self.by_replacement.get(&tokens[i..i + len]) {
                    out.push(self.rules[r].0.clone());
                    i += len;
                    continue 'outer;
                }
            }
            if !self.endings.contains(&tokens[i]) {
                out.push(tokens[i].clone());
            }
            i += 1;
        }
        out
    }
}

pub fn split_contractions(tokens: &[String]) -> Vec<String> {
    SplitRuleTable::german().split_contractions(tokens)
}

pub fn split_pronoun_endings(tokens: &[String]) -> Vec<String> {
    SplitRuleTable::german().split_pronoun_endings(tokens)
}

pub fn merge_german(tokens: &[String]) -> Vec<String> {
    SplitRuleTable::german().merge(tokens)
}
