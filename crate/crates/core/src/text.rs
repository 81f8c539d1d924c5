//! Tokenization and token bags.
//!
//! Text is lowercased and split at every character that is neither
//! alphabetic nor numeric, so whitespace and punctuation both act as
//! boundaries and never survive as tokens. No stemming is applied.

use std::collections::btree_map;
use std::collections::BTreeMap;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Canonical key for a surface form: its tokens joined by single spaces.
pub fn normalize_surface(surface: &str) -> String {
    tokenize(surface).join(" ")
}

/// A multiset of lowercase tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenBag {
    counts: BTreeMap<String, u32>,
    total: u64,
}

impl TokenBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_text(text: &str) -> Self {
        tokenize(text).into_iter().collect()
    }

    /// Build a bag from already tokenized input, lowercasing each token.
    pub fn from_tokens<'a, I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        tokens.into_iter().map(str::to_lowercase).collect()
    }

    pub fn insert(&mut self, token: String) {
        *self.counts.entry(token).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, token: &str) -> u32 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.counts.contains_key(token)
    }

    /// Number of distinct tokens.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Number of tokens counting multiplicity.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> btree_map::Iter<'_, String, u32> {
        self.counts.iter()
    }

    pub fn terms(&self) -> btree_map::Keys<'_, String, u32> {
        self.counts.keys()
    }

    /// Space-joined text that tokenizes back to this exact bag.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (tok, &n) in &self.counts {
            for _ in 0..n {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
        out
    }
}

impl FromIterator<String> for TokenBag {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut bag = TokenBag::new();
        for t in iter {
            bag.insert(t);
        }
        bag
    }
}
