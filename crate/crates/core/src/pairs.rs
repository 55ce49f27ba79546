//! Mining of equivalent-query pairs from relevance judgments.
//!
//! Queries judged relevant to the same passage are treated as paraphrases of
//! one another. The pairs become source/target sentences for a seq2seq
//! paraphrasing model. Only qrels are mined; co-occurrence in candidate lists
//! produces pairs that are too noisy to train on.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use crate::corpus::{Qrels, QueryStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassageQueryGroup {
    pub passage_id: String,
    pub query_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EquivalentQueryPair {
    pub via_passage_id: String,
    pub source_query_id: String,
    pub target_query_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairOrdering {
    /// One pair per unordered query pair, lower id as source.
    Unordered,
    /// Both directions of every unordered pair.
    #[default]
    BothDirections,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMiningReport {
    /// Query count k → number of passages with exactly k relevant queries.
    pub histogram: BTreeMap<usize, usize>,
    pub passages: usize,
    pub total_judgments: usize,
    /// Σ C(k,2) over groups: one per (passage, unordered query pair).
    pub pair_occurrences: usize,
    /// Distinct unordered query pairs sharing at least one passage.
    pub unique_unordered_pairs: usize,
    /// Fraction of passages matched with more than one query.
    pub multi_query_fraction: f64,
}

/// Groups judgments with grade ≥ `min_grade` by passage, sorted by passage id.
pub fn group_by_passage(qrels: &Qrels, min_grade: u32) -> Result<Vec<PassageQueryGroup>> {
    if min_grade < 1 {
        return Err(Error::Config("min_grade must be at least 1".into()));
    }
    let mut groups: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for (q, p, g) in qrels.iter() {
        if g >= min_grade {
            groups.entry(p).or_default().insert(q.to_owned());
        }
    }
    Ok(groups
        .into_iter()
        .map(|(p, query_ids)| PassageQueryGroup {
            passage_id: p.to_owned(),
            query_ids,
        })
        .collect())
}

fn choose2(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

pub fn mining_report(groups: &[PassageQueryGroup]) -> PairMiningReport {
    let mut histogram = BTreeMap::new();
    let mut total_judgments = 0;
    let mut pair_occurrences = 0;
    let mut distinct: HashSet<(&str, &str)> = HashSet::new();
    for g in groups {
        let k = g.query_ids.len();
        *histogram.entry(k).or_insert(0) += 1;
        total_judgments += k;
        pair_occurrences += choose2(k);
        let ids: Vec<&str> = g.query_ids.iter().map(String::as_str).collect();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                distinct.insert((a, b));
            }
        }
    }
    let multi: usize = histogram
        .iter()
        .filter(|(&k, _)| k > 1)
        .map(|(_, &n)| n)
        .sum();
    PairMiningReport {
        passages: groups.len(),
        multi_query_fraction: if groups.is_empty() {
            0.0
        } else {
            multi as f64 / groups.len() as f64
        },
        histogram,
        total_judgments,
        pair_occurrences,
        unique_unordered_pairs: distinct.len(),
    }
}

impl PairMiningReport {
    /// Histogram with every k ≥ `cap` folded into the `cap` row.
    pub fn capped_histogram(&self, cap: usize) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for (&k, &n) in &self.histogram {
            *out.entry(k.min(cap)).or_insert(0) += n;
        }
        out
    }

    /// `k <TAB> passage_count` rows followed by `#`-prefixed summary lines.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, n) in &self.histogram {
            writeln!(out, "{k}\t{n}")?;
        }
        writeln!(out, "# passages\t{}", self.passages)?;
        writeln!(out, "# total_judgments\t{}", self.total_judgments)?;
        writeln!(out, "# pair_occurrences\t{}", self.pair_occurrences)?;
        writeln!(out, "# unique_unordered_pairs\t{}", self.unique_unordered_pairs)?;
        writeln!(out, "# multi_query_fraction\t{:.6}", self.multi_query_fraction)?;
        Ok(())
    }
}

/// Emits every co-relevant query pair of every group, sorted by passage id and
/// then by source and target id. A pair relevant to several passages appears
/// once per passage.
pub fn mine_pairs(groups: &[PassageQueryGroup], ordering: PairOrdering) -> Vec<EquivalentQueryPair> {
    let mut out = Vec::new();
    for g in groups {
        let ids: Vec<&String> = g.query_ids.iter().collect();
        let start = out.len();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                out.push(EquivalentQueryPair {
                    via_passage_id: g.passage_id.clone(),
                    source_query_id: (*a).clone(),
                    target_query_id: (*b).clone(),
                });
                if ordering == PairOrdering::BothDirections {
                    out.push(EquivalentQueryPair {
                        via_passage_id: g.passage_id.clone(),
                        source_query_id: (*b).clone(),
                        target_query_id: (*a).clone(),
                    });
                }
            }
        }
        out[start..].sort();
    }
    out.sort_by(|a, b| a.via_passage_id.cmp(&b.via_passage_id));
    out
}

/// Writes aligned source/target sentence files, one query text per line.
/// Returns the number of lines written to each.
pub fn export_seq2seq<S: Write, T: Write>(
    pairs: &[EquivalentQueryPair],
    queries: &QueryStore,
    mut source: S,
    mut target: T,
) -> Result<usize> {
    let lookup = |id: &str| -> Result<&str> {
        let text = queries
            .text(id)
            .ok_or_else(|| Error::MissingReference(format!("query {id}")))?;
        if text.contains(['\n', '\r']) {
            return Err(Error::Sanitation { id: id.to_owned() });
        }
        Ok(text)
    };
    let mut lines = Vec::with_capacity(pairs.len());
    for p in pairs {
        lines.push((lookup(&p.source_query_id)?, lookup(&p.target_query_id)?));
    }
    for (s, t) in &lines {
        writeln!(source, "{s}")?;
        writeln!(target, "{t}")?;
    }
    Ok(lines.len())
}
