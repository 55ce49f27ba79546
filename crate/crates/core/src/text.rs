//! Token sequences and the lexical analyzer shared by retrieval, expansion
//! and the overlap scorer.

use std::collections::BTreeSet;
use std::fmt;
use std::io::BufRead;

use rust_stemmers::{Algorithm, Stemmer};

use crate::corpus::Lines;
use crate::error::Result;

/// Ordered list of non-empty tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty()));
        TokenSequence(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Keeps the leading `n` tokens.
    pub fn truncated(&self, n: usize) -> TokenSequence {
        TokenSequence(self.0.iter().take(n).cloned().collect())
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(v: Vec<String>) -> Self {
        TokenSequence::new(v)
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Lowercased maximal runs of Unicode letters and digits; everything else
/// separates tokens.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut out = Vec::new();
    for run in text.split(|c: char| !c.is_alphanumeric()) {
        if run.is_empty() {
            continue;
        }
        let lower = run.to_lowercase();
        // Lowercasing can introduce combining marks (e.g. U+0130).
        out.extend(
            lower
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_owned),
        );
    }
    TokenSequence(out)
}

/// Splits on whitespace only, keeping tokens verbatim.
pub fn whitespace_tokens(text: &str) -> TokenSequence {
    TokenSequence(text.split_whitespace().map(str::to_owned).collect())
}

/// Reads a stopword list: one word per line, `#` starts a comment line.
pub fn read_stopwords<R: BufRead>(reader: R) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for item in Lines::new(reader) {
        let (_, line) = item?;
        let word = line.trim();
        if word.is_empty() || word.starts_with('#') {
            continue;
        }
        out.extend(tokenize(word).into_inner());
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnalyzerConfig {
    pub stem: bool,
    pub stopwords: BTreeSet<String>,
}

/// [`tokenize`] followed by optional stopword removal and English stemming.
pub struct Analyzer {
    config: AnalyzerConfig,
    stemmer: Option<Stemmer>,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Self {
        let stemmer = config.stem.then(|| Stemmer::create(Algorithm::English));
        Analyzer { config, stemmer }
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    pub fn analyze(&self, text: &str) -> TokenSequence {
        let tokens = tokenize(text).into_inner();
        if self.stemmer.is_none() && self.config.stopwords.is_empty() {
            return TokenSequence(tokens);
        }
        TokenSequence(
            tokens
                .into_iter()
                .filter(|t| !self.config.stopwords.contains(t))
                .map(|t| match &self.stemmer {
                    Some(s) => s.stem(&t).into_owned(),
                    None => t,
                })
                .filter(|t| !t.is_empty())
                .collect(),
        )
    }
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer::new(AnalyzerConfig::default())
    }
}

impl Clone for Analyzer {
    fn clone(&self) -> Self {
        Analyzer::new(self.config.clone())
    }
}

impl fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Analyzer").field("config", &self.config).finish()
    }
}
