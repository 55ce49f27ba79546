use std::collections::HashSet;
use std::io::BufRead;
use std::sync::Arc;

use crate::corpus::Lines;
use crate::error::{Error, Result};
use crate::text::{whitespace_tokens, TokenSequence};

pub const DEFAULT_MAX_QUERY_TOKENS: usize = 64;
pub const DEFAULT_TOTAL_BUDGET: usize = 512;
/// One sequence-start marker and two separators.
pub const DEFAULT_SPECIAL_TOKEN_OVERHEAD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationConfig {
    pub max_query_tokens: usize,
    pub total_budget: usize,
    pub special_token_overhead: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            max_query_tokens: DEFAULT_MAX_QUERY_TOKENS,
            total_budget: DEFAULT_TOTAL_BUDGET,
            special_token_overhead: DEFAULT_SPECIAL_TOKEN_OVERHEAD,
        }
    }
}

impl TruncationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_query_tokens == 0 {
            return Err(Error::Config("max_query_tokens must be positive".into()));
        }
        if self.total_budget <= self.special_token_overhead + 1 {
            return Err(Error::Config(format!(
                "total budget {} leaves no room beside {} special tokens",
                self.total_budget, self.special_token_overhead
            )));
        }
        Ok(())
    }
}

/// Query and passage tokens after truncation to the scorer's budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScorerInput {
    pub query_tokens: TokenSequence,
    pub passage_tokens: TokenSequence,
    pub total_budget: usize,
    pub special_token_overhead: usize,
}

impl ScorerInput {
    /// Length of the packed sequence including special tokens.
    pub fn packed_len(&self) -> usize {
        self.query_tokens.len() + self.passage_tokens.len() + self.special_token_overhead
    }
}

/// Keeps the leading query tokens up to the query limit, then gives the
/// passage whatever remains of the total budget. Padding is left to the scorer.
pub fn prepare_input(
    query_tokens: &TokenSequence,
    passage_tokens: &TokenSequence,
    config: &TruncationConfig,
) -> Result<ScorerInput> {
    config.validate()?;
    let room = config.total_budget - config.special_token_overhead;
    let query = query_tokens.truncated(config.max_query_tokens.min(room));
    let passage = passage_tokens.truncated(room - query.len());
    Ok(ScorerInput {
        query_tokens: query,
        passage_tokens: passage,
        total_budget: config.total_budget,
        special_token_overhead: config.special_token_overhead,
    })
}

/// Greedy longest-match-first subword tokenizer over a fixed vocabulary, with
/// `##` marking word continuations. Text is lowercased and split on
/// whitespace and punctuation first.
#[derive(Debug, Clone)]
pub struct WordPiece {
    vocab: HashSet<String>,
    unk: String,
    max_word_chars: usize,
}

impl WordPiece {
    pub fn new(vocab: HashSet<String>) -> Self {
        WordPiece {
            vocab,
            unk: "[UNK]".into(),
            max_word_chars: 100,
        }
    }

    /// One token per line, as in BERT `vocab.txt` files.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut vocab = HashSet::new();
        for item in Lines::new(reader) {
            let (_, line) = item?;
            vocab.insert(line.trim_end().to_owned());
        }
        if vocab.is_empty() {
            return Err(Error::Config("empty vocabulary".into()));
        }
        Ok(Self::new(vocab))
    }

    fn words(text: &str) -> Vec<String> {
        let mut words = Vec::new();
        for chunk in text.split_whitespace() {
            let mut cur = String::new();
            for c in chunk.chars() {
                if c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace()) {
                    if !cur.is_empty() {
                        words.push(std::mem::take(&mut cur));
                    }
                    words.push(c.to_string());
                } else {
                    cur.extend(c.to_lowercase());
                }
            }
            if !cur.is_empty() {
                words.push(cur);
            }
        }
        words
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let mut out = Vec::new();
        for word in Self::words(text) {
            let chars: Vec<char> = word.chars().collect();
            if chars.len() > self.max_word_chars {
                out.push(self.unk.clone());
                continue;
            }
            let mut pieces = Vec::new();
            let mut start = 0;
            while start < chars.len() {
                let mut end = chars.len();
                let mut found = None;
                while end > start {
                    let mut piece: String = chars[start..end].iter().collect();
                    if start > 0 {
                        piece.insert_str(0, "##");
                    }
                    if self.vocab.contains(&piece) {
                        found = Some(piece);
                        break;
                    }
                    end -= 1;
                }
                match found {
                    Some(p) => {
                        pieces.push(p);
                        start = end;
                    }
                    None => {
                        pieces = vec![self.unk.clone()];
                        break;
                    }
                }
            }
            out.extend(pieces);
        }
        TokenSequence::new(out)
    }

    /// Joins pieces back into text, gluing `##` continuations to their word.
    pub fn detokenize(tokens: &TokenSequence) -> String {
        let mut out = String::new();
        for t in tokens {
            match t.strip_prefix("##") {
                Some(rest) => out.push_str(rest),
                None => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(t);
                }
            }
        }
        out
    }
}

/// How token budgets are counted.
#[derive(Debug, Clone, Default)]
pub enum Tokenization {
    #[default]
    Whitespace,
    WordPiece(Arc<WordPiece>),
}

impl Tokenization {
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        match self {
            Tokenization::Whitespace => whitespace_tokens(text),
            Tokenization::WordPiece(wp) => wp.tokenize(text),
        }
    }

    pub fn detokenize(&self, tokens: &TokenSequence) -> String {
        match self {
            Tokenization::Whitespace => tokens.join(),
            Tokenization::WordPiece(_) => WordPiece::detokenize(tokens),
        }
    }
}
