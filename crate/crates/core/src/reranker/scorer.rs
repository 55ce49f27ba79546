use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::corpus::{Lines, PassageRecord, Qrels};
use crate::error::{Error, Result};
use crate::expansion::{token_jaccard, ExpandedQuery};
use crate::service::{align_scores, PairItem, ScoreRequest, ScoreService};

/// One (query, passage) pair as the scorer sees it, after truncation.
#[derive(Debug, Clone, Copy)]
pub struct ScoringPair<'a> {
    pub query_id: &'a str,
    pub passage_id: &'a str,
    pub query: &'a str,
    pub passage: &'a str,
}

/// Produces a relevance probability in [0, 1] for each pair, order-aligned.
///
/// Implementations that can attribute a failure to a single pair return
/// [`Error::Scoring`]; any other error is attributed to the whole batch.
pub trait RelevanceScorer: Sync {
    fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>>;
}

/// Token-set Jaccard similarity between the assembled query and the passage.
pub fn lexical_overlap_scorer(expanded: &ExpandedQuery, passage: &PassageRecord) -> f64 {
    token_jaccard(&expanded.assembled_text, &passage.text)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalOverlapScorer;

impl RelevanceScorer for LexicalOverlapScorer {
    fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|p| token_jaccard(p.query, p.passage)).collect())
    }
}

/// Scores 1 for judged-relevant pairs and 0 otherwise.
#[derive(Debug, Clone)]
pub struct OracleScorer<'a> {
    pub qrels: &'a Qrels,
    pub min_grade: u32,
}

impl RelevanceScorer for OracleScorer<'_> {
    fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|p| match self.qrels.grade(p.query_id, p.passage_id) {
                Some(g) if g >= self.min_grade => 1.0,
                _ => 0.0,
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl RelevanceScorer for ConstantScorer {
    fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>> {
        Ok(vec![self.0; pairs.len()])
    }
}

/// Offline scores keyed by (query id, passage id).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: HashMap<(String, String), f64>,
}

impl ScoreTable {
    pub fn get(&self, query_id: &str, passage_id: &str) -> Option<f64> {
        self.scores
            .get(&(query_id.to_owned(), passage_id.to_owned()))
            .copied()
    }

    pub fn insert(&mut self, query_id: &str, passage_id: &str, score: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Contract(format!("score {score} outside [0, 1]")));
        }
        self.scores
            .insert((query_id.to_owned(), passage_id.to_owned()), score);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Entries sorted by (query id, passage id).
    pub fn sorted(&self) -> Vec<(&str, &str, f64)> {
        let mut v: Vec<_> = self
            .scores
            .iter()
            .map(|((q, p), &s)| (q.as_str(), p.as_str(), s))
            .collect();
        v.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        v
    }
}

/// Reads `query_id <TAB> passage_id <TAB> score` lines.
pub fn load_precomputed_scores<R: BufRead>(reader: R) -> Result<ScoreTable> {
    let mut table = ScoreTable::default();
    for item in Lines::new(reader) {
        let (lineno, line) = item?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 || f[0].is_empty() || f[1].is_empty() {
            return Err(Error::parse(lineno, "expected query_id, passage_id, score"));
        }
        let score: f64 = f[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid score {:?}", f[2])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Validation {
                line: lineno,
                message: format!("score {score} outside [0, 1]"),
            });
        }
        if table.get(f[0], f[1]).is_some() {
            return Err(Error::DuplicateKey {
                line: lineno,
                key: format!("{} {}", f[0], f[1]),
            });
        }
        table.insert(f[0], f[1], score)?;
    }
    Ok(table)
}

pub fn write_scores<W: Write>(table: &ScoreTable, mut out: W) -> Result<()> {
    for (q, p, s) in table.sorted() {
        writeln!(out, "{q}\t{p}\t{s:.6}")?;
    }
    Ok(())
}

impl RelevanceScorer for ScoreTable {
    fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|p| {
                self.get(p.query_id, p.passage_id).ok_or_else(|| Error::Scoring {
                    query_id: p.query_id.to_owned(),
                    passage_id: p.passage_id.to_owned(),
                    message: "no precomputed score".into(),
                })
            })
            .collect()
    }
}

/// Scores (query text, passage text) pairs through a model service in
/// batches of `batch_size`, with at most `max_in_flight` outstanding
/// requests. The result is aligned with the input order.
pub fn score_remote(
    pairs: &[(&str, &str)],
    service: &dyn ScoreService,
    batch_size: usize,
    max_in_flight: usize,
) -> Result<Vec<f64>> {
    let batch_size = batch_size.max(1);
    let requests: Vec<ScoreRequest> = pairs
        .chunks(batch_size)
        .map(|chunk| ScoreRequest {
            pairs: chunk
                .iter()
                .enumerate()
                .map(|(i, (q, p))| PairItem {
                    id: i.to_string(),
                    query: (*q).to_owned(),
                    passage: (*p).to_owned(),
                })
                .collect(),
        })
        .collect();
    let mut out = Vec::with_capacity(pairs.len());
    for wave in requests.chunks(max_in_flight.max(1)) {
        let results: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|req| s.spawn(move || align_scores(req, &service.score(req)?)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scoring worker panicked"))
                .collect()
        });
        for r in results {
            out.extend(r?);
        }
    }
    Ok(out)
}

pub struct RemoteScorer<S> {
    pub service: S,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl<S: ScoreService> RemoteScorer<S> {
    pub fn new(service: S) -> Self {
        RemoteScorer {
            service,
            batch_size: 64,
            max_in_flight: 4,
        }
    }
}

impl<S: ScoreService> RelevanceScorer for RemoteScorer<S> {
    fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>> {
        let texts: Vec<(&str, &str)> = pairs.iter().map(|p| (p.query, p.passage)).collect();
        score_remote(&texts, &self.service, self.batch_size, self.max_in_flight)
    }
}
