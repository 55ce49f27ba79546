//! Query expansion: the original query followed by its top paraphrase beams,
//! joined with single spaces.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::corpus::{Lines, QueryRecord};
use crate::error::{Error, Result};
use crate::service::{validate_paraphrase_response, ParaphraseRequest, ParaphraseService, QueryItem};
use crate::text::tokenize;

/// Number of beams appended by default.
pub const DEFAULT_EXPANSION_BEAMS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ParaphraseBeam {
    pub text: String,
    pub log_likelihood: f64,
    pub beam_rank: usize,
}

impl ParaphraseBeam {
    pub fn new(text: impl Into<String>, log_likelihood: f64, beam_rank: usize) -> Self {
        ParaphraseBeam {
            text: text.into(),
            log_likelihood,
            beam_rank,
        }
    }
}

pub type ExpansionMap = BTreeMap<String, Vec<ParaphraseBeam>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedQuery {
    pub query_id: String,
    pub original_text: String,
    pub beams_used: Vec<ParaphraseBeam>,
    pub assembled_text: String,
}

impl ExpandedQuery {
    /// The query on its own, with no beams appended.
    pub fn unexpanded(query: &QueryRecord) -> Self {
        ExpandedQuery {
            query_id: query.id.clone(),
            original_text: query.text.clone(),
            beams_used: Vec::new(),
            assembled_text: query.text.clone(),
        }
    }
}

fn check_rank_order(beams: &[ParaphraseBeam]) -> Result<()> {
    if beams.windows(2).any(|w| w[0].beam_rank >= w[1].beam_rank) {
        return Err(Error::Contract("beams are not sorted by beam rank".into()));
    }
    Ok(())
}

/// Appends the first `k` beams to the original query text.
pub fn assemble(original: &QueryRecord, beams: &[ParaphraseBeam], k: usize) -> Result<ExpandedQuery> {
    check_rank_order(beams)?;
    let used: Vec<ParaphraseBeam> = beams.iter().take(k).cloned().collect();
    let mut assembled = original.text.clone();
    for b in &used {
        assembled.push(' ');
        assembled.push_str(&b.text);
    }
    Ok(ExpandedQuery {
        query_id: original.id.clone(),
        original_text: original.text.clone(),
        beams_used: used,
        assembled_text: assembled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FilterPolicy {
    #[default]
    None,
    /// Drop beams whose text repeats an earlier beam.
    DedupExact,
    /// Keep beams with log-likelihood ≥ the threshold.
    MinLogLikelihood(f64),
    /// Keep beams whose token-set Jaccard with the original is ≥ the threshold.
    LexicalOverlap(f64),
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterPolicy::MinLogLikelihood(t) if !t.is_finite() => {
                Err(Error::Config(format!("log-likelihood threshold {t} is not finite")))
            }
            FilterPolicy::LexicalOverlap(t) if !(0.0..=1.0).contains(&t) => {
                Err(Error::Config(format!("overlap threshold {t} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for FilterPolicy {
    type Err = Error;

    /// `none`, `dedup-exact`, `min-log-likelihood:<θ>` or `lexical-overlap:<τ>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let threshold = || -> Result<f64> {
            arg.ok_or_else(|| Error::Config(format!("filter {name} needs a threshold")))?
                .parse()
                .map_err(|_| Error::Config(format!("invalid threshold in {s:?}")))
        };
        let policy = match (name, arg) {
            ("none", None) => FilterPolicy::None,
            ("dedup-exact", None) => FilterPolicy::DedupExact,
            ("min-log-likelihood", _) => FilterPolicy::MinLogLikelihood(threshold()?),
            ("lexical-overlap", _) => FilterPolicy::LexicalOverlap(threshold()?),
            _ => return Err(Error::Config(format!("unknown filter policy {s:?}"))),
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Token-set Jaccard similarity under [`tokenize`]; 0 when both sides are empty.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = tokenize(a).into_inner().into_iter().collect();
    let b: BTreeSet<String> = tokenize(b).into_inner().into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Returns the beams that pass `policy`, in their original order.
pub fn filter_beams(
    original_text: &str,
    beams: &[ParaphraseBeam],
    policy: &FilterPolicy,
) -> Result<Vec<ParaphraseBeam>> {
    policy.validate()?;
    let kept = match *policy {
        FilterPolicy::None => beams.to_vec(),
        FilterPolicy::DedupExact => {
            let mut seen = HashSet::new();
            beams
                .iter()
                .filter(|b| seen.insert(b.text.as_str()))
                .cloned()
                .collect()
        }
        FilterPolicy::MinLogLikelihood(theta) => beams
            .iter()
            .filter(|b| b.log_likelihood >= theta)
            .cloned()
            .collect(),
        FilterPolicy::LexicalOverlap(tau) => beams
            .iter()
            .filter(|b| token_jaccard(original_text, &b.text) >= tau)
            .cloned()
            .collect(),
    };
    Ok(kept)
}

fn check_beam_list(beams: &[ParaphraseBeam]) -> std::result::Result<(), (usize, String)> {
    for (i, b) in beams.iter().enumerate() {
        if !(b.log_likelihood.is_finite() && b.log_likelihood <= 0.0) {
            return Err((i, format!("log-likelihood {} must be finite and ≤ 0", b.log_likelihood)));
        }
        if i > 0 {
            let prev = &beams[i - 1];
            if prev.beam_rank == b.beam_rank {
                return Err((i, format!("beam rank {} repeated", b.beam_rank)));
            }
            if prev.log_likelihood < b.log_likelihood {
                return Err((i, "log-likelihood increases with beam rank".into()));
            }
        }
    }
    Ok(())
}

/// Reads `query_id <TAB> beam_rank <TAB> log_likelihood <TAB> text` lines.
pub fn load_precomputed_expansions<R: BufRead>(reader: R) -> Result<ExpansionMap> {
    let mut grouped: BTreeMap<String, Vec<(usize, ParaphraseBeam)>> = BTreeMap::new();
    for item in Lines::new(reader) {
        let (lineno, line) = item?;
        let f: Vec<&str> = line.splitn(4, '\t').collect();
        if f.len() != 4 || f[0].is_empty() {
            return Err(Error::parse(lineno, "expected query_id, beam_rank, log_likelihood, text"));
        }
        let rank: usize = f[1]
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| Error::parse(lineno, format!("invalid beam rank {:?}", f[1])))?;
        let ll: f64 = f[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid log-likelihood {:?}", f[2])))?;
        grouped
            .entry(f[0].to_owned())
            .or_default()
            .push((lineno, ParaphraseBeam::new(f[3], ll, rank)));
    }
    let mut out = ExpansionMap::new();
    for (qid, mut beams) in grouped {
        beams.sort_by_key(|(_, b)| b.beam_rank);
        let lines: Vec<usize> = beams.iter().map(|(l, _)| *l).collect();
        let beams: Vec<ParaphraseBeam> = beams.into_iter().map(|(_, b)| b).collect();
        if let Err((i, message)) = check_beam_list(&beams) {
            return Err(Error::Validation {
                line: lines[i],
                message: format!("query {qid}: {message}"),
            });
        }
        out.insert(qid, beams);
    }
    Ok(out)
}

pub fn write_expansions<W: Write>(expansions: &ExpansionMap, mut out: W) -> Result<()> {
    for (qid, beams) in expansions {
        for b in beams {
            if b.text.contains(['\n', '\r']) {
                return Err(Error::Sanitation { id: qid.clone() });
            }
            writeln!(out, "{qid}\t{}\t{}\t{}", b.beam_rank, b.log_likelihood, b.text)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub num_beams: usize,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            num_beams: DEFAULT_EXPANSION_BEAMS,
            batch_size: 32,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FetchedExpansions {
    pub beams: ExpansionMap,
    /// Queries the service could not paraphrase, with its reason.
    pub failed: Vec<(String, String)>,
}

/// Requests paraphrases for every query in batches, with at most
/// `max_in_flight` requests outstanding. Results are keyed by query id, so
/// completion order does not matter. A per-item error from the service drops
/// that query into `failed`; a transport or protocol failure aborts the fetch.
pub fn fetch_expansions(
    queries: &[QueryRecord],
    service: &dyn ParaphraseService,
    options: &FetchOptions,
) -> Result<FetchedExpansions> {
    if options.num_beams == 0 {
        return Err(Error::Config("num_beams must be at least 1".into()));
    }
    let requests: Vec<ParaphraseRequest> = queries
        .chunks(options.batch_size.max(1))
        .map(|chunk| ParaphraseRequest {
            queries: chunk.iter().map(QueryItem::from).collect(),
            num_beams: options.num_beams,
        })
        .collect();

    let mut out = FetchedExpansions::default();
    for wave in requests.chunks(options.max_in_flight.max(1)) {
        let responses: Vec<Result<_>> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|req| {
                    s.spawn(move || {
                        let resp = service.paraphrase(req)?;
                        validate_paraphrase_response(req, &resp)?;
                        Ok(resp)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("paraphrase worker panicked"))
                .collect()
        });
        for resp in responses {
            for r in resp?.results {
                if let Some(err) = r.error {
                    out.failed.push((r.id, err));
                    continue;
                }
                let beams = r
                    .beams
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| ParaphraseBeam::new(b.text, b.log_likelihood, i + 1))
                    .collect();
                out.beams.insert(r.id, beams);
            }
        }
    }
    out.failed.sort();
    Ok(out)
}

/// Expands every query with up to `k` beams after filtering. Queries without
/// beams proceed unexpanded; their ids are returned alongside.
pub fn expand_queries(
    queries: &[QueryRecord],
    expansions: &ExpansionMap,
    k: usize,
    policy: &FilterPolicy,
) -> Result<(Vec<ExpandedQuery>, Vec<String>)> {
    let mut expanded = Vec::with_capacity(queries.len());
    let mut missing = Vec::new();
    for q in queries {
        match expansions.get(&q.id) {
            Some(beams) if k > 0 => {
                let kept = filter_beams(&q.text, beams, policy)?;
                expanded.push(assemble(q, &kept, k)?);
            }
            Some(_) => expanded.push(ExpandedQuery::unexpanded(q)),
            None => {
                if k > 0 {
                    missing.push(q.id.clone());
                }
                expanded.push(ExpandedQuery::unexpanded(q));
            }
        }
    }
    Ok((expanded, missing))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beams(texts: &[&str]) -> Vec<ParaphraseBeam> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| ParaphraseBeam::new(*t, -(i as f64) - 0.5, i + 1))
            .collect()
    }

    #[test]
    fn assemble_tesla_row() {
        let q = QueryRecord::new("q", "average tesla cost");
        let b = beams(&[
            "what is the cost of the new tesla",
            "how much money do you save purchasing a tesla",
            "how much do you have to pay for a tesla",
        ]);
        let e = assemble(&q, &b, 3).unwrap();
        assert_eq!(
            e.assembled_text,
            "average tesla cost what is the cost of the new tesla how much money do you save \
             purchasing a tesla how much do you have to pay for a tesla"
        );
        assert_eq!(e.beams_used.len(), 3);
        assert_eq!(assemble(&q, &b, 0).unwrap().assembled_text, "average tesla cost");
        assert_eq!(assemble(&q, &b, 5).unwrap().beams_used.len(), 3);
    }

    #[test]
    fn assemble_rejects_unsorted() {
        let q = QueryRecord::new("q", "x");
        let mut b = beams(&["a", "b"]);
        b.swap(0, 1);
        assert!(matches!(assemble(&q, &b, 2).unwrap_err(), Error::Contract(_)));
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let b = beams(&[
            "what is not a waste product of cellular respiration",
            "what is oxidized during cellular respiration",
            "what is not a waste product of cellular respiration",
        ]);
        let kept = filter_beams(
            "what processes occur during cellular photosynthesis",
            &b,
            &FilterPolicy::DedupExact,
        )
        .unwrap();
        assert_eq!(kept, b[..2].to_vec());
        assert_eq!(filter_beams("x", &b, &FilterPolicy::None).unwrap(), b);
    }

    #[test]
    fn threshold_filters() {
        let b = beams(&["cats dogs", "fish"]);
        assert!(filter_beams("birds", &b, &FilterPolicy::LexicalOverlap(1.0))
            .unwrap()
            .is_empty());
        let kept = filter_beams("cats", &b, &FilterPolicy::LexicalOverlap(0.5)).unwrap();
        assert_eq!(kept, b[..1].to_vec());
        let kept = filter_beams("x", &b, &FilterPolicy::MinLogLikelihood(-1.0)).unwrap();
        assert_eq!(kept, b[..1].to_vec());
        assert!(filter_beams("x", &b, &FilterPolicy::LexicalOverlap(1.5)).is_err());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("none".parse::<FilterPolicy>().unwrap(), FilterPolicy::None);
        assert_eq!("dedup-exact".parse::<FilterPolicy>().unwrap(), FilterPolicy::DedupExact);
        assert_eq!(
            "min-log-likelihood:-2.5".parse::<FilterPolicy>().unwrap(),
            FilterPolicy::MinLogLikelihood(-2.5)
        );
        assert_eq!(
            "lexical-overlap:0.2".parse::<FilterPolicy>().unwrap(),
            FilterPolicy::LexicalOverlap(0.2)
        );
        assert!("lexical-overlap:2".parse::<FilterPolicy>().is_err());
        assert!("lexical-overlap".parse::<FilterPolicy>().is_err());
        assert!("sideways".parse::<FilterPolicy>().is_err());
    }

    #[test]
    fn load_expansions() {
        let m = load_precomputed_expansions("q1\t2\t-1.2\tsecond\nq1\t1\t-0.5\tfirst\n".as_bytes())
            .unwrap();
        assert_eq!(
            m["q1"],
            vec![ParaphraseBeam::new("first", -0.5, 1), ParaphraseBeam::new("second", -1.2, 2)]
        );
        let err =
            load_precomputed_expansions("q1\t1\t-1.2\ta\nq1\t2\t-0.5\tb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation { line: 2, .. }), "{err}");
        assert!(load_precomputed_expansions("q1\t1\tx\ta\n".as_bytes()).is_err());
        assert!(load_precomputed_expansions("q1\t1\t0.3\ta\n".as_bytes()).is_err());
        assert!(load_precomputed_expansions("q1\t1\t-0.3\n".as_bytes()).is_err());
    }

    #[test]
    fn missing_expansions_degrade() {
        let qs = vec![QueryRecord::new("q1", "a"), QueryRecord::new("q2", "b")];
        let mut m = ExpansionMap::new();
        m.insert("q1".into(), beams(&["c"]));
        let (e, missing) = expand_queries(&qs, &m, 3, &FilterPolicy::None).unwrap();
        assert_eq!(e[0].assembled_text, "a c");
        assert_eq!(e[1].assembled_text, "b");
        assert_eq!(missing, vec!["q2".to_string()]);
    }
}
