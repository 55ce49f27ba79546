//! First-stage lexical retrieval with Okapi BM25.
//!
//! Scores use the non-negative idf `ln(1 + (N - df + 0.5) / (df + 0.5))` and
//! the usual saturation and length normalization. Query terms are
//! deduplicated unless [`QueryWeighting::TermFrequency`] is selected.

mod index;

pub use index::{InvertedIndex, Posting, INDEX_FORMAT_VERSION, INDEX_MAGIC};

use std::collections::BTreeMap;

use crate::corpus::{Candidate, CandidateSet, Ranking, ScoredPassage, MAX_CANDIDATES};
use crate::error::{Error, Result};
use crate::text::TokenSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryWeighting {
    /// Each distinct query term counts once.
    #[default]
    Unique,
    /// Each term's contribution is multiplied by its count in the query.
    TermFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub weighting: QueryWeighting,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 0.9,
            b: 0.4,
            weighting: QueryWeighting::Unique,
        }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let p = Bm25Params {
            k1,
            b,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("k1 must be positive, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

pub fn idf(index: &InvertedIndex, term: &str) -> f64 {
    let n = index.num_docs() as f64;
    let df = index.doc_freq(term) as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_weight(tf: u32, doc_len: u32, avgdl: f64, params: &Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = 1.0 - params.b + params.b * doc_len as f64 / avgdl;
    tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

/// Distinct query terms in lexical order with their query weights.
fn query_terms(query: &TokenSequence, weighting: QueryWeighting) -> BTreeMap<&str, f64> {
    let mut terms = BTreeMap::new();
    for t in query {
        let w = terms.entry(t.as_str()).or_insert(0.0);
        match weighting {
            QueryWeighting::Unique => *w = 1.0,
            QueryWeighting::TermFrequency => *w += 1.0,
        }
    }
    terms
}

pub fn bm25_score(
    index: &InvertedIndex,
    query: &TokenSequence,
    passage_id: &str,
    params: &Bm25Params,
) -> Result<f64> {
    let doc = index
        .doc_number(passage_id)
        .ok_or_else(|| Error::NotFound(format!("passage {passage_id} is not indexed")))?;
    let doc_len = index.doc_length(doc);
    let avgdl = index.avgdl();
    let mut score = 0.0;
    for (term, qw) in query_terms(query, params.weighting) {
        let tf = index.term_frequency(term, doc);
        if tf > 0 {
            score += qw * idf(index, term) * term_weight(tf, doc_len, avgdl, params);
        }
    }
    Ok(score)
}

/// Scores every passage sharing a term with the query and returns the best
/// `k`, by descending score and then ascending passage id. Passages with no
/// query term are not returned.
pub fn search(
    index: &InvertedIndex,
    query: &TokenSequence,
    k: usize,
    params: &Bm25Params,
) -> Result<Ranking> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    params.validate()?;
    let avgdl = index.avgdl();
    let mut acc = vec![0.0f64; index.num_docs()];
    let mut touched: Vec<u32> = Vec::new();
    for (term, qw) in query_terms(query, params.weighting) {
        let postings = index.postings(term);
        if postings.is_empty() {
            continue;
        }
        let term_idf = idf(index, term);
        for p in postings {
            let slot = &mut acc[p.doc as usize];
            if *slot == 0.0 {
                touched.push(p.doc);
            }
            *slot += qw * term_idf * term_weight(p.tf, index.doc_length(p.doc), avgdl, params);
        }
    }
    let by_rank = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    let mut hits: Vec<(u32, f64)> = touched.into_iter().map(|d| (d, acc[d as usize])).collect();
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, by_rank);
        hits.truncate(k);
    }
    hits.sort_by(by_rank);
    Ok(Ranking {
        query_id: String::new(),
        entries: hits
            .into_iter()
            .map(|(d, score)| ScoredPassage {
                passage_id: index.passage_id(d).to_owned(),
                score,
            })
            .collect(),
    })
}

/// Analyzes `query_text` with the index's analyzer and returns the top-`k`
/// passages as a candidate set, best first. `k` is capped at the candidate
/// set capacity.
pub fn retrieve_topk(
    index: &InvertedIndex,
    query_id: &str,
    query_text: &str,
    k: usize,
    params: &Bm25Params,
) -> Result<CandidateSet> {
    let query = index.analyzer().analyze(query_text);
    let ranking = search(index, &query, k.min(MAX_CANDIDATES), params)?;
    Ok(CandidateSet {
        query_id: query_id.to_owned(),
        query_text: Some(query_text.to_owned()),
        candidates: ranking
            .entries
            .into_iter()
            .map(|e| Candidate {
                passage_id: e.passage_id,
                text: None,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PassageRecord, RecordStore};
    use crate::text::{whitespace_tokens, Analyzer};

    fn two_passages() -> InvertedIndex {
        let store = RecordStore::from_records(vec![
            PassageRecord::new("p1", "a b"),
            PassageRecord::new("p2", "b b c"),
        ])
        .unwrap();
        InvertedIndex::build(&store, &Analyzer::default()).unwrap()
    }

    #[test]
    fn idf_values() {
        let idx = two_passages();
        assert!((idf(&idx, "a") - 2f64.ln()).abs() < 1e-12);
        assert!((idf(&idx, "zzz") - 6f64.ln()).abs() < 1e-12);
        assert!(idf(&idx, "b") > 0.0);
    }

    #[test]
    fn worked_score() {
        let idx = two_passages();
        let p = Bm25Params::default();
        // ln 2 * 1.9 / (1 + 0.9 * (0.6 + 0.4 * 2 / 2.5))
        let s = bm25_score(&idx, &whitespace_tokens("a"), "p1", &p).unwrap();
        assert!((s - 0.720_448_382).abs() < 1e-6, "{s}");
        assert_eq!(bm25_score(&idx, &whitespace_tokens("c"), "p1", &p).unwrap(), 0.0);
        let twice = bm25_score(&idx, &whitespace_tokens("a a"), "p1", &p).unwrap();
        assert_eq!(twice, s);
        assert!(matches!(
            bm25_score(&idx, &whitespace_tokens("a"), "p9", &p).unwrap_err(),
            Error::NotFound(_)
        ));
    }

    #[test]
    fn query_tf_weighting() {
        let idx = two_passages();
        let p = Bm25Params {
            weighting: QueryWeighting::TermFrequency,
            ..Default::default()
        };
        let once = bm25_score(&idx, &whitespace_tokens("a"), "p1", &p).unwrap();
        let twice = bm25_score(&idx, &whitespace_tokens("a a"), "p1", &p).unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(Bm25Params::new(0.0, 0.4).is_err());
        assert!(Bm25Params::new(0.9, 1.5).is_err());
        assert!(Bm25Params::new(1.2, 0.75).is_ok());
    }

    #[test]
    fn topk_boundaries() {
        let idx = two_passages();
        let p = Bm25Params::default();
        let all = retrieve_topk(&idx, "q", "b c a", 50, &p).unwrap();
        assert_eq!(all.len(), 2);
        let only = retrieve_topk(&idx, "q", "c", 50, &p).unwrap();
        assert_eq!(only.passage_ids().collect::<Vec<_>>(), vec!["p2"]);
        assert!(retrieve_topk(&idx, "q", "nothing", 5, &p).unwrap().is_empty());
        assert!(search(&idx, &whitespace_tokens("a"), 0, &p).is_err());
    }
}
