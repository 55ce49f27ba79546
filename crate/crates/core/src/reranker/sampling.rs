use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CandidateSet, PassageStore, Qrels};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub query_id: String,
    pub passage_id: String,
    pub label: u8,
}

/// Where negatives are drawn from.
#[derive(Debug, Clone, Copy)]
pub enum NegativePool<'a> {
    /// The query's own candidate set.
    Candidates(&'a [CandidateSet]),
    /// Every passage in the collection.
    Collection(&'a PassageStore),
}

#[derive(Debug, Clone, Copy)]
pub struct SamplingConfig {
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub min_grade: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            negatives_per_positive: 4,
            seed: 0,
            min_grade: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shortfall {
    pub query_id: String,
    pub positive_passage_id: String,
    pub requested: usize,
    pub available: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SampledPairs {
    pub pairs: Vec<LabeledPair>,
    pub shortfalls: Vec<Shortfall>,
}

/// Emits every qualifying judgment as a positive, each followed by
/// `negatives_per_positive` unjudged-or-nonrelevant passages drawn uniformly
/// without replacement from the pool. Queries and positives are visited in
/// id order and the generator is seeded once, so output depends only on the
/// inputs and the seed.
pub fn sample_training_pairs(
    qrels: &Qrels,
    pool: NegativePool<'_>,
    config: &SamplingConfig,
) -> Result<SampledPairs> {
    if config.negatives_per_positive == 0 {
        return Err(Error::Config("negatives_per_positive must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let by_query: HashMap<&str, &CandidateSet> = match pool {
        NegativePool::Candidates(sets) => sets.iter().map(|s| (s.query_id.as_str(), s)).collect(),
        NegativePool::Collection(_) => HashMap::new(),
    };
    let n = config.negatives_per_positive;
    let mut out = SampledPairs::default();

    for qid in qrels.query_ids() {
        let judged = qrels.for_query(qid).expect("query id from qrels");
        let relevant: BTreeSet<&str> = judged
            .iter()
            .filter(|(_, &g)| g >= config.min_grade)
            .map(|(p, _)| p.as_str())
            .collect();
        if relevant.is_empty() {
            continue;
        }
        let candidates: Option<Vec<&str>> = match pool {
            NegativePool::Candidates(_) => {
                let set = by_query.get(qid).ok_or_else(|| {
                    Error::MissingReference(format!("no candidate set for query {qid}"))
                })?;
                let mut ids: Vec<&str> = set
                    .passage_ids()
                    .filter(|p| !relevant.contains(p))
                    .collect();
                ids.sort_unstable();
                Some(ids)
            }
            NegativePool::Collection(_) => None,
        };

        for pos in &relevant {
            out.pairs.push(LabeledPair {
                query_id: qid.to_owned(),
                passage_id: (*pos).to_owned(),
                label: 1,
            });
            let negatives: Vec<&str> = match (&candidates, pool) {
                (Some(ids), _) => {
                    if ids.len() <= n {
                        ids.clone()
                    } else {
                        let mut picked = index::sample(&mut rng, ids.len(), n).into_vec();
                        picked.sort_unstable();
                        picked.into_iter().map(|i| ids[i]).collect()
                    }
                }
                (None, NegativePool::Collection(store)) => {
                    sample_from_collection(&mut rng, store, &relevant, n)
                }
                (None, NegativePool::Candidates(_)) => unreachable!(),
            };
            if negatives.len() < n {
                log::warn!(
                    "query {qid}: only {} of {n} negatives available for {pos}",
                    negatives.len()
                );
                out.shortfalls.push(Shortfall {
                    query_id: qid.to_owned(),
                    positive_passage_id: (*pos).to_owned(),
                    requested: n,
                    available: negatives.len(),
                });
            }
            out.pairs.extend(negatives.into_iter().map(|p| LabeledPair {
                query_id: qid.to_owned(),
                passage_id: p.to_owned(),
                label: 0,
            }));
        }
    }
    Ok(out)
}

fn sample_from_collection<'a>(
    rng: &mut ChaCha8Rng,
    store: &'a PassageStore,
    relevant: &BTreeSet<&str>,
    n: usize,
) -> Vec<&'a str> {
    let records = store.records();
    let eligible = records
        .iter()
        .filter(|r| !relevant.contains(r.id.as_str()))
        .count();
    if eligible <= 2 * n {
        let ids: Vec<&str> = records
            .iter()
            .map(|r| r.id.as_str())
            .filter(|id| !relevant.contains(id))
            .collect();
        if ids.len() <= n {
            return ids;
        }
        let mut picked = index::sample(rng, ids.len(), n).into_vec();
        picked.sort_unstable();
        return picked.into_iter().map(|i| ids[i]).collect();
    }
    let mut chosen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let i = rng.random_range(0..records.len());
        let id = records[i].id.as_str();
        if !relevant.contains(id) && chosen.insert(i) {
            out.push(id);
        }
    }
    out
}

/// Writes `query_id <TAB> passage_id <TAB> label` lines.
pub fn write_training_pairs<W: Write>(pairs: &[LabeledPair], mut out: W) -> Result<()> {
    for p in pairs {
        writeln!(out, "{}\t{}\t{}", p.query_id, p.passage_id, p.label)?;
    }
    Ok(())
}
