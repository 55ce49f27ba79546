//! Second-stage ranking of a fixed candidate set.
//!
//! Each (expanded query, passage) pair is cut to the scorer's token budget,
//! scored by a pluggable [`RelevanceScorer`], and the candidates are sorted by
//! descending probability with ties broken by ascending passage id. A query is
//! ranked completely or not at all.

mod sampling;
mod scorer;
mod truncation;

pub use sampling::{
    sample_training_pairs, write_training_pairs, LabeledPair, NegativePool, SampledPairs,
    SamplingConfig, Shortfall,
};
pub use scorer::{
    lexical_overlap_scorer, load_precomputed_scores, score_remote, write_scores, ConstantScorer,
    LexicalOverlapScorer, OracleScorer, RelevanceScorer, RemoteScorer, ScoreTable, ScoringPair,
};
pub use truncation::{
    prepare_input, ScorerInput, Tokenization, TruncationConfig, WordPiece,
    DEFAULT_MAX_QUERY_TOKENS, DEFAULT_SPECIAL_TOKEN_OVERHEAD, DEFAULT_TOTAL_BUDGET,
};

pub use crate::corpus::{Ranking, ScoredPassage};

use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::{CandidateSet, PassageStore};
use crate::error::{Error, Result};
use crate::expansion::ExpandedQuery;

#[derive(Debug, Clone, Default)]
pub struct Reranker {
    pub truncation: TruncationConfig,
    pub tokenization: Tokenization,
}

impl Reranker {
    pub fn new(truncation: TruncationConfig, tokenization: Tokenization) -> Result<Self> {
        truncation.validate()?;
        Ok(Reranker {
            truncation,
            tokenization,
        })
    }

    /// Scores every candidate once and sorts. Passage text comes from the
    /// candidate itself or, failing that, from `passages`.
    pub fn rerank(
        &self,
        candidates: &CandidateSet,
        expanded: &ExpandedQuery,
        scorer: &dyn RelevanceScorer,
        passages: Option<&PassageStore>,
    ) -> Result<Ranking> {
        let query_tokens = self.tokenization.tokenize(&expanded.assembled_text);
        let mut prepared: Vec<(&str, String, String)> = Vec::with_capacity(candidates.len());
        for c in &candidates.candidates {
            let text = c
                .text
                .as_deref()
                .or_else(|| passages.and_then(|s| s.text(&c.passage_id)))
                .ok_or_else(|| Error::MissingReference(format!("passage text for {}", c.passage_id)))?;
            let input = prepare_input(
                &query_tokens,
                &self.tokenization.tokenize(text),
                &self.truncation,
            )?;
            prepared.push((
                c.passage_id.as_str(),
                self.tokenization.detokenize(&input.query_tokens),
                self.tokenization.detokenize(&input.passage_tokens),
            ));
        }
        let pairs: Vec<ScoringPair<'_>> = prepared
            .iter()
            .map(|(pid, q, p)| ScoringPair {
                query_id: &expanded.query_id,
                passage_id: pid,
                query: q,
                passage: p,
            })
            .collect();
        if pairs.is_empty() {
            return Ok(Ranking {
                query_id: candidates.query_id.clone(),
                entries: Vec::new(),
            });
        }
        let scores = scorer.score_batch(&pairs).map_err(|e| match e {
            e @ Error::Scoring { .. } => e,
            other => Error::Scoring {
                query_id: expanded.query_id.clone(),
                passage_id: pairs[0].passage_id.to_owned(),
                message: other.to_string(),
            },
        })?;
        if scores.len() != pairs.len() {
            return Err(Error::Scoring {
                query_id: expanded.query_id.clone(),
                passage_id: pairs[scores.len().min(pairs.len() - 1)].passage_id.to_owned(),
                message: format!("{} scores for {} pairs", scores.len(), pairs.len()),
            });
        }
        let mut entries = Vec::with_capacity(scores.len());
        for (pair, score) in pairs.iter().zip(scores) {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::Scoring {
                    query_id: expanded.query_id.clone(),
                    passage_id: pair.passage_id.to_owned(),
                    message: format!("score {score} outside [0, 1]"),
                });
            }
            entries.push(ScoredPassage {
                passage_id: pair.passage_id.to_owned(),
                score,
            });
        }
        Ok(Ranking::from_scores(candidates.query_id.clone(), entries))
    }

    /// Reranks every candidate set in parallel; results are sorted by query
    /// id. Any failing query fails the whole call.
    pub fn rerank_all(
        &self,
        candidate_sets: &[CandidateSet],
        expanded: &[ExpandedQuery],
        scorer: &dyn RelevanceScorer,
        passages: Option<&PassageStore>,
    ) -> Result<Vec<Ranking>> {
        let by_id: HashMap<&str, &ExpandedQuery> =
            expanded.iter().map(|e| (e.query_id.as_str(), e)).collect();
        let mut sets: Vec<&CandidateSet> = candidate_sets.iter().collect();
        sets.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        let results: Vec<Result<Ranking>> = sets
            .par_iter()
            .map(|set| {
                let q = by_id.get(set.query_id.as_str()).ok_or_else(|| {
                    Error::MissingReference(format!("query {}", set.query_id))
                })?;
                self.rerank(set, q, scorer, passages)
            })
            .collect();
        results.into_iter().collect()
    }
}
