//! TREC-style evaluation: average precision, nDCG and precision at k, macro
//! averaged over topics, plus classification of per-topic scores against
//! committee best/median/worst statistics.
//!
//! Topics without any relevant judgment produce `None` instead of a score and
//! are left out of means. Only topics present in the run are evaluated.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{Lines, Qrels, Ranking};
use crate::error::{Error, Result};

pub const DEFAULT_BUCKET_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gain {
    /// 2^grade − 1
    #[default]
    Exponential,
    /// grade
    Linear,
}

impl FromStr for Gain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" | "exp" => Ok(Gain::Exponential),
            "linear" | "lin" => Ok(Gain::Linear),
            _ => Err(Error::Config(format!("unknown nDCG gain {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricConfig {
    /// Grades at or above this count as relevant for AP and P@k.
    pub binarize_threshold: u32,
    pub ndcg_gain: Gain,
    pub ndcg_cutoff: Option<usize>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            binarize_threshold: 1,
            ndcg_gain: Gain::Exponential,
            ndcg_cutoff: None,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.binarize_threshold < 1 {
            return Err(Error::Config("binarize threshold must be at least 1".into()));
        }
        if self.ndcg_cutoff == Some(0) {
            return Err(Error::Config("nDCG cutoff must be positive".into()));
        }
        Ok(())
    }

    fn is_relevant(&self, grade: u32) -> bool {
        grade >= self.binarize_threshold
    }

    fn gain(&self, grade: u32) -> f64 {
        match self.ndcg_gain {
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
            Gain::Linear => grade as f64,
        }
    }
}

fn grade_of(qrels: &Qrels, query_id: &str, passage_id: &str) -> u32 {
    qrels.grade(query_id, passage_id).unwrap_or(0)
}

fn num_relevant(qrels: &Qrels, query_id: &str, config: &MetricConfig) -> usize {
    qrels
        .for_query(query_id)
        .map(|j| j.values().filter(|&&g| config.is_relevant(g)).count())
        .unwrap_or(0)
}

/// Iterates ranked passage ids, skipping repeats of an already seen id.
fn distinct_ids(ranking: &Ranking) -> impl Iterator<Item = &str> {
    let mut seen = HashSet::new();
    ranking.passage_ids().filter(move |p| seen.insert(*p))
}

/// `None` when the topic has no relevant judgment.
pub fn average_precision(ranking: &Ranking, qrels: &Qrels, config: &MetricConfig) -> Option<f64> {
    let r = num_relevant(qrels, &ranking.query_id, config);
    if r == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, pid) in distinct_ids(ranking).enumerate() {
        if config.is_relevant(grade_of(qrels, &ranking.query_id, pid)) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / r as f64)
}

/// `None` when the ideal DCG is zero.
pub fn ndcg(ranking: &Ranking, qrels: &Qrels, config: &MetricConfig) -> Option<f64> {
    let cutoff = config.ndcg_cutoff.unwrap_or(usize::MAX);
    let mut ideal: Vec<f64> = qrels
        .for_query(&ranking.query_id)
        .map(|j| j.values().map(|&g| config.gain(g)).collect())
        .unwrap_or_default();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let discounted = |gains: &mut dyn Iterator<Item = f64>| -> f64 {
        gains
            .take(cutoff)
            .enumerate()
            .map(|(i, g)| g / ((i + 2) as f64).log2())
            .sum()
    };
    let idcg = discounted(&mut ideal.into_iter());
    if idcg <= 0.0 {
        return None;
    }
    let dcg = discounted(
        &mut distinct_ids(ranking).map(|p| config.gain(grade_of(qrels, &ranking.query_id, p))),
    );
    Some(dcg / idcg)
}

/// Fraction of the top `k` that is relevant; short rankings count as padded
/// with non-relevant passages.
pub fn precision_at_k(
    ranking: &Ranking,
    qrels: &Qrels,
    k: usize,
    config: &MetricConfig,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let hits = distinct_ids(ranking)
        .take(k)
        .filter(|p| config.is_relevant(grade_of(qrels, &ranking.query_id, p)))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Arithmetic mean over included (`Some`) topics.
pub fn mean_over_topics<'a, I>(scores: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a Option<f64>>,
{
    let (sum, n) = scores
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(Error::NoTopics);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Map,
    Ndcg,
    P10,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Map, Metric::Ndcg, Metric::P10];

    pub fn key(&self) -> &'static str {
        match self {
            Metric::Map => "map",
            Metric::Ndcg => "ndcg",
            Metric::P10 => "p10",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Map => "MAP",
            Metric::Ndcg => "nDCG",
            Metric::P10 => "P@10",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" | "ap" => Ok(Metric::Map),
            "ndcg" => Ok(Metric::Ndcg),
            "p10" | "p@10" | "p_10" => Ok(Metric::P10),
            _ => Err(Error::Config(format!("unknown metric {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicScores {
    pub topic_id: String,
    pub map: Option<f64>,
    pub ndcg: Option<f64>,
    pub p10: Option<f64>,
}

impl TopicScores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Map => self.map,
            Metric::Ndcg => self.ndcg,
            Metric::P10 => self.p10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Sorted by topic id.
    pub topics: Vec<TopicScores>,
}

/// Computes all metrics for every ranked topic. P@10 is excluded for topics
/// with no relevant judgment, like AP.
pub fn evaluate_run(rankings: &[Ranking], qrels: &Qrels, config: &MetricConfig) -> Result<EvalReport> {
    config.validate()?;
    let mut topics: Vec<TopicScores> = rankings
        .par_iter()
        .map(|r| {
            let map = average_precision(r, qrels, config);
            TopicScores {
                topic_id: r.query_id.clone(),
                ndcg: ndcg(r, qrels, config),
                p10: map.and_then(|_| precision_at_k(r, qrels, 10, config).ok()),
                map,
            }
        })
        .collect();
    topics.sort_by(|a, b| a.topic_id.cmp(&b.topic_id));
    if topics.windows(2).any(|w| w[0].topic_id == w[1].topic_id) {
        return Err(Error::Contract("topic ranked twice in run".into()));
    }
    Ok(EvalReport { topics })
}

impl EvalReport {
    pub fn mean(&self, metric: Metric) -> Result<f64> {
        let scores: Vec<Option<f64>> = self.topics.iter().map(|t| t.get(metric)).collect();
        mean_over_topics(&scores)
    }

    /// Per-topic scores of the included topics.
    pub fn scores(&self, metric: Metric) -> BTreeMap<String, f64> {
        self.topics
            .iter()
            .filter_map(|t| t.get(metric).map(|v| (t.topic_id.clone(), v)))
            .collect()
    }

    /// `topic_id <TAB> metric <TAB> value` rows for the selected metrics,
    /// then `all` rows with the means.
    pub fn write_tsv<W: Write>(&self, metrics: &[Metric], mut out: W) -> Result<()> {
        for t in &self.topics {
            for &m in metrics {
                if let Some(v) = t.get(m) {
                    writeln!(out, "{}\t{}\t{:.6}", t.topic_id, m.key(), v)?;
                }
            }
        }
        for &m in metrics {
            if let Ok(v) = self.mean(m) {
                writeln!(out, "all\t{}\t{:.6}", m.key(), v)?;
            }
        }
        Ok(())
    }
}

/// Reads per-topic rows written by [`EvalReport::write_tsv`]; `all` rows are
/// skipped.
pub fn parse_topic_scores<R: BufRead>(reader: R) -> Result<BTreeMap<(String, Metric), f64>> {
    let mut out = BTreeMap::new();
    for item in Lines::new(reader) {
        let (lineno, line) = item?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(lineno, "expected topic_id, metric, value"));
        }
        if f[0] == "all" {
            continue;
        }
        let metric: Metric = f[1].parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
        let value: f64 = f[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("invalid value {:?}", f[2])))?;
        if out.insert((f[0].to_owned(), metric), value).is_some() {
            return Err(Error::DuplicateKey {
                line: lineno,
                key: format!("{} {}", f[0], f[1]),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerTopicStats {
    pub topic_id: String,
    pub metric: Metric,
    pub best: f64,
    pub median: f64,
    pub worst: f64,
}

/// Reads `topic_id <TAB> metric <TAB> best <TAB> median <TAB> worst` lines.
pub fn parse_committee_stats<R: BufRead>(reader: R) -> Result<Vec<PerTopicStats>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for item in Lines::new(reader) {
        let (lineno, line) = item?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::parse(lineno, "expected topic_id, metric, best, median, worst"));
        }
        let metric: Metric = f[1].parse().map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::parse(lineno, format!("invalid number {s:?}")))
        };
        let stats = PerTopicStats {
            topic_id: f[0].to_owned(),
            metric,
            best: num(f[2])?,
            median: num(f[3])?,
            worst: num(f[4])?,
        };
        if !(stats.best >= stats.median && stats.median >= stats.worst) {
            return Err(Error::Validation {
                line: lineno,
                message: "expected best ≥ median ≥ worst".into(),
            });
        }
        if !seen.insert((stats.topic_id.clone(), metric)) {
            return Err(Error::DuplicateKey {
                line: lineno,
                key: format!("{} {}", f[0], f[1]),
            });
        }
        out.push(stats);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bucket {
    AtBest,
    BestToMedian,
    AtMedian,
    MedianToWorst,
    AtWorst,
}

impl Bucket {
    pub const ALL: [Bucket; 5] = [
        Bucket::AtBest,
        Bucket::BestToMedian,
        Bucket::AtMedian,
        Bucket::MedianToWorst,
        Bucket::AtWorst,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Bucket::AtBest => "At Best",
            Bucket::BestToMedian => "Best to Median",
            Bucket::AtMedian => "At Median",
            Bucket::MedianToWorst => "Median to Worst",
            Bucket::AtWorst => "At Worst",
        }
    }

    /// First matching rule wins: best, median, worst (each within ε), then
    /// above or below the median.
    pub fn classify(own: f64, stats: &PerTopicStats, epsilon: f64) -> Bucket {
        if (own - stats.best).abs() <= epsilon {
            Bucket::AtBest
        } else if (own - stats.median).abs() <= epsilon {
            Bucket::AtMedian
        } else if (own - stats.worst).abs() <= epsilon {
            Bucket::AtWorst
        } else if own > stats.median {
            Bucket::BestToMedian
        } else {
            Bucket::MedianToWorst
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopicBucketReport {
    /// Per metric, counts indexed in [`Bucket::ALL`] order.
    pub counts: BTreeMap<Metric, [usize; 5]>,
    pub assignments: BTreeMap<(String, Metric), Bucket>,
}

pub fn classify_buckets(
    own: &BTreeMap<(String, Metric), f64>,
    stats: &[PerTopicStats],
    epsilon: f64,
) -> Result<TopicBucketReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let by_key: BTreeMap<(&str, Metric), &PerTopicStats> = stats
        .iter()
        .map(|s| ((s.topic_id.as_str(), s.metric), s))
        .collect();
    let missing: Vec<String> = own
        .keys()
        .filter(|(t, m)| !by_key.contains_key(&(t.as_str(), *m)))
        .map(|(t, m)| format!("{t}/{}", m.key()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingStats(missing));
    }
    let mut report = TopicBucketReport::default();
    for ((topic, metric), &value) in own {
        let bucket = Bucket::classify(value, by_key[&(topic.as_str(), *metric)], epsilon);
        report.counts.entry(*metric).or_insert([0; 5])[bucket as usize] += 1;
        report.assignments.insert((topic.clone(), *metric), bucket);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketFractions {
    /// (At Best + Best to Median + At Median) / topics
    pub median_or_better: f64,
    /// (At Best + Best to Median) / topics
    pub above_median: f64,
}

impl TopicBucketReport {
    pub fn topic_count(&self, metric: Metric) -> usize {
        self.counts.get(&metric).map(|c| c.iter().sum()).unwrap_or(0)
    }

    pub fn count(&self, metric: Metric, bucket: Bucket) -> usize {
        self.counts.get(&metric).map(|c| c[bucket as usize]).unwrap_or(0)
    }

    /// Five rows, one column per metric, tab separated.
    pub fn render_table(&self) -> String {
        let metrics: Vec<Metric> = self.counts.keys().copied().collect();
        let mut s = String::from("Number of Topics");
        for m in &metrics {
            s.push_str(&format!("\t{m}"));
        }
        s.push('\n');
        for b in Bucket::ALL {
            s.push_str(b.label());
            for m in &metrics {
                s.push_str(&format!("\t{}", self.count(*m, b)));
            }
            s.push('\n');
        }
        s
    }
}

/// Share of topics at or above the median, under both readings of "median to
/// best": with and without the At Median bucket.
pub fn summarize_fractions(report: &TopicBucketReport) -> BTreeMap<Metric, BucketFractions> {
    report
        .counts
        .iter()
        .map(|(&m, c)| {
            let total: usize = c.iter().sum();
            let frac = |n: usize| if total == 0 { 0.0 } else { n as f64 / total as f64 };
            (
                m,
                BucketFractions {
                    median_or_better: frac(c[0] + c[1] + c[2]),
                    above_median: frac(c[0] + c[1]),
                },
            )
        })
        .collect()
}
