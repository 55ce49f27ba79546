//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.
//!
//! Set `MSMARCO_TRAIN_QRELS` to the official training qrels to add the
//! full-data pair-mining check.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use passage_rerank::bm25::{bm25_score, idf, retrieve_topk, Bm25Params, InvertedIndex};
use passage_rerank::corpus::{
    parse_qrels, write_run_file, PassageRecord, Qrels, Ranking, RecordStore, ScoredPassage,
};
use passage_rerank::eval::{
    average_precision, classify_buckets, evaluate_run, ndcg, precision_at_k, summarize_fractions,
    Bucket, Metric, MetricConfig, PerTopicStats,
};
use passage_rerank::expansion::ExpandedQuery;
use passage_rerank::pairs::{group_by_passage, mine_pairs, mining_report, PairOrdering};
use passage_rerank::reranker::{prepare_input, ConstantScorer, OracleScorer, Reranker, TruncationConfig};
use passage_rerank::synthetic::{Fixture, FixtureSpec};
use passage_rerank::text::{Analyzer, AnalyzerConfig, TokenSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<String, String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {:.1?}, limit {:?}", took, limit);
    Ok(format!("{:.2?}", took))
}

/// MS MARCO training qrels: passages with exactly k = 1..9 relevant queries.
const TRAIN_HISTOGRAM: [usize; 9] = [503_187, 11_328, 1_396, 343, 115, 42, 27, 14, 7];
/// A split of the 13 passages with ten or more queries that holds 167
/// judgments and 1,017 pairs.
const TAIL_SIZES: [usize; 13] = [10, 10, 10, 10, 12, 13, 14, 14, 14, 15, 15, 15, 15];

fn pair_mining_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let n = rng.random_range(0..=500);
        let (nq, np) = (rng.random_range(1..80), rng.random_range(1..120));
        let mut seen = BTreeSet::new();
        let mut j = Vec::new();
        for _ in 0..n {
            let (q, p) = (format!("q{}", rng.random_range(0..nq)), format!("p{}", rng.random_range(0..np)));
            if seen.insert((q.clone(), p.clone())) {
                j.push((q, p, rng.random_range(0..3u32)));
            }
        }
        let oracle = common::pair_oracle(&j, 1);
        let groups = group_by_passage(&common::qrels_from(&j), 1).map_err(|e| e.to_string())?;
        let report = mining_report(&groups);
        ensure!(report.histogram == oracle.histogram, "case {case}: histogram differs");
        ensure!(
            report.unique_unordered_pairs == oracle.unordered.len(),
            "case {case}: {} pairs, oracle {}",
            report.unique_unordered_pairs,
            oracle.unordered.len()
        );
        let mined: BTreeSet<(String, String, String)> = mine_pairs(&groups, PairOrdering::BothDirections)
            .into_iter()
            .map(|p| (p.via_passage_id, p.source_query_id, p.target_query_id))
            .collect();
        ensure!(mined == oracle.triples, "case {case}: mined pair set differs");
    }
    within(Duration::from_secs(10), start).map(|t| format!("100 random qrels, {t}"))
}

fn check_train_shape(qrels: &Qrels) -> Result<String, String> {
    let groups = group_by_passage(qrels, 1).map_err(|e| e.to_string())?;
    let report = mining_report(&groups);
    let capped = report.capped_histogram(10);
    for (i, &want) in TRAIN_HISTOGRAM.iter().enumerate() {
        let got = capped.get(&(i + 1)).copied().unwrap_or(0);
        ensure!(got == want, "k={}: {got} passages, expected {want}", i + 1);
    }
    ensure!(capped.get(&10) == Some(&13), "≥10 bucket: {:?}", capped.get(&10));
    ensure!(report.total_judgments == 532_761, "judgments {}", report.total_judgments);
    ensure!(report.pair_occurrences == 21_582, "pairs {}", report.pair_occurrences);
    Ok(format!(
        "{} judgments, {} pairs ({} distinct)",
        report.total_judgments, report.pair_occurrences, report.unique_unordered_pairs
    ))
}

fn train_histogram() -> Result<String, String> {
    let head_judgments: usize = TRAIN_HISTOGRAM.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
    let head_pairs: usize = TRAIN_HISTOGRAM.iter().enumerate().map(|(i, c)| (i + 1) * i / 2 * c).sum();
    ensure!(head_judgments == 532_594, "Σ k·count = {head_judgments}");
    ensure!(head_pairs == 20_565, "Σ C(k,2)·count = {head_pairs}");
    ensure!(532_761 - head_judgments == 167, "tail judgments");
    ensure!(21_582 - head_pairs == 1_017, "tail pairs");
    let tail_j: usize = TAIL_SIZES.iter().sum();
    let tail_p: usize = TAIL_SIZES.iter().map(|k| k * (k - 1) / 2).sum();
    ensure!(tail_j == 167 && tail_p == 1_017, "tail decomposition");

    // Qrels with exactly this shape: single-query passages share one query,
    // every multi-query passage gets its own queries.
    let mut q = Qrels::new();
    let mut next = 0usize;
    let sizes = TRAIN_HISTOGRAM
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i + 1, c))
        .chain(TAIL_SIZES);
    for (pi, k) in sizes.enumerate() {
        let pid = format!("p{pi}");
        if k == 1 {
            q.insert("solo", &pid, 1);
            continue;
        }
        for _ in 0..k {
            q.insert(&format!("q{next}"), &pid, 1);
            next += 1;
        }
    }
    let synthetic = check_train_shape(&q)?;
    let real = match std::env::var_os("MSMARCO_TRAIN_QRELS") {
        Some(path) => {
            let f = std::fs::File::open(&path).map_err(|e| format!("{path:?}: {e}"))?;
            let qrels = parse_qrels(std::io::BufReader::new(f)).map_err(|e| e.to_string())?;
            format!("official qrels: {}", check_train_shape(&qrels)?)
        }
        None => "official qrels not present (set MSMARCO_TRAIN_QRELS)".into(),
    };
    Ok(format!("arithmetic and synthetic reconstruction: {synthetic}; {real}"))
}

fn analyzer() -> Analyzer {
    Analyzer::new(AnalyzerConfig::default())
}

fn bm25() -> Result<String, String> {
    let start = Instant::now();
    let store = RecordStore::from_records(vec![
        PassageRecord::new("p1", "a b"),
        PassageRecord::new("p2", "b b c"),
    ])
    .unwrap();
    let index = InvertedIndex::build(&store, &analyzer()).unwrap();
    let params = Bm25Params::default();
    let idf_a = idf(&index, "a");
    ensure!((idf_a - 2f64.ln()).abs() < 1e-9, "idf(a) = {idf_a}");
    let q = TokenSequence::new(vec!["a".into()]);
    let s = bm25_score(&index, &q, "p1", &params).unwrap();
    ensure!((s - 0.720_448).abs() < 1e-6, "score {s}");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..100 {
        let n = rng.random_range(1..=1000);
        let vocab = rng.random_range(5..60);
        let docs: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let len = rng.random_range(1..30);
                // Skewed term distribution: low ids are common.
                (0..len).map(|_| rng.random_range(0..vocab) * rng.random_range(0..=vocab) / vocab).collect()
            })
            .collect();
        let store = RecordStore::from_records(
            docs.iter()
                .enumerate()
                .map(|(i, d)| {
                    let words: Vec<String> = d.iter().map(|w| format!("w{w}")).collect();
                    PassageRecord::new(format!("p{i:04}"), words.join(" "))
                })
                .collect(),
        )
        .unwrap();
        let index = InvertedIndex::build(&store, &analyzer()).unwrap();
        let qlen = rng.random_range(1..6);
        let query: Vec<usize> = (0..qlen).map(|_| rng.random_range(0..vocab)).collect();
        let qtext: Vec<String> = query.iter().map(|w| format!("w{w}")).collect();
        let k = rng.random_range(1..=1000);

        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n as f64;
        let mut df: HashMap<usize, usize> = HashMap::new();
        for d in &docs {
            for t in d.iter().collect::<BTreeSet<_>>() {
                *df.entry(*t).or_default() += 1;
            }
        }
        let terms: BTreeSet<usize> = query.iter().copied().collect();
        let mut exhaustive: Vec<(f64, String)> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let s: f64 = terms
                    .iter()
                    .filter_map(|t| {
                        let tf = d.iter().filter(|w| *w == t).count() as f64;
                        let df = *df.get(t)? as f64;
                        let idf = (1.0 + (n as f64 - df + 0.5) / (df + 0.5)).ln();
                        let norm = params.k1 * (1.0 - params.b + params.b * d.len() as f64 / avgdl);
                        Some(idf * tf * (params.k1 + 1.0) / (tf + norm))
                    })
                    .sum();
                (s, format!("p{i:04}"))
            })
            .filter(|(s, _)| *s > 0.0)
            .collect();
        exhaustive.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let by_id: HashMap<&str, f64> = exhaustive.iter().map(|(s, id)| (id.as_str(), *s)).collect();

        let got = retrieve_topk(&index, "q", &qtext.join(" "), k, &params).unwrap();
        let ids: Vec<&str> = got.passage_ids().collect();
        ensure!(ids.len() == k.min(exhaustive.len()), "case {case}: {} results", ids.len());
        for (i, id) in ids.iter().enumerate() {
            let s = by_id.get(id).copied().unwrap_or(0.0);
            ensure!((s - exhaustive[i].0).abs() < 1e-9, "case {case}: rank {} is {id}", i + 1);
            if i + 1 < ids.len() {
                let next = by_id[ids[i + 1]];
                ensure!(s > next + 1e-9 || (s - next).abs() <= 1e-9 && *id < ids[i + 1], "case {case}: tie order at rank {}", i + 1);
            }
        }
    }
    within(Duration::from_secs(30), start).map(|t| format!("worked example and 100 random corpora, {t}"))
}

fn truncation() -> Result<String, String> {
    let cfg = TruncationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let seq = |n: usize| TokenSequence::new(vec!["t".to_string(); n]);
    let cases = 10_000;
    for _ in 0..cases {
        let (q, p) = (rng.random_range(0..2000), rng.random_range(0..2000));
        let input = prepare_input(&seq(q), &seq(p), &cfg).map_err(|e| e.to_string())?;
        ensure!(input.query_tokens.len() <= 64, "query part {} for q={q}", input.query_tokens.len());
        ensure!(
            input.query_tokens.len() + input.passage_tokens.len() + 3 <= 512,
            "packed {} for q={q} p={p}",
            input.packed_len()
        );
    }
    Ok(format!("{cases} random cases"))
}

fn single(grades: &[u32]) -> (Ranking, Qrels) {
    let mut q = Qrels::new();
    let entries = grades
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let id = format!("d{i}");
            q.insert("t", &id, *g);
            ScoredPassage { passage_id: id, score: (grades.len() - i) as f64 }
        })
        .collect();
    (Ranking { query_id: "t".into(), entries }, q)
}

fn metrics() -> Result<String, String> {
    let start = Instant::now();
    let cfg = MetricConfig::default();
    let (r, q) = single(&[1, 0, 1]);
    let ap = average_precision(&r, &q, &cfg).unwrap();
    ensure!((ap - 0.833_333).abs() < 1e-6, "AP {ap}");
    let n = ndcg(&r, &q, &cfg).unwrap();
    ensure!((n - 0.919_721).abs() < 1e-6, "nDCG {n}");
    let (r, q) = single(&[1, 0, 2, 0, 0, 1, 0, 0, 0, 0, 1, 1]);
    ensure!(precision_at_k(&r, &q, 10, &cfg).unwrap() == 0.3, "P@10 crafted");
    let (r, q) = single(&[0, 1]);
    ensure!(precision_at_k(&r, &q, 10, &cfg).unwrap() == 0.1, "P@10 short ranking");

    let mut ideal: HashMap<Vec<u32>, Option<f64>> = HashMap::new();
    let mut count = 0;
    for len in 1..=6 {
        for grades in common::grade_sequences(len, 2) {
            let (r, q) = single(&grades);
            let rel = grades.iter().filter(|&&g| g >= 1).count();
            let (got, want) = (average_precision(&r, &q, &cfg), common::ap_oracle(&grades, rel));
            ensure!(
                got.zip(want).is_some_and(|(a, b)| (a - b).abs() < 1e-12) || got == want,
                "AP mismatch on {grades:?}"
            );
            let mut pool = grades.clone();
            pool.sort_unstable();
            let has_ideal = ideal.entry(pool.clone()).or_insert_with(|| common::ndcg_oracle(&pool, &pool)).is_some();
            let got = ndcg(&r, &q, &cfg);
            let want = if has_ideal { common::ndcg_oracle(&grades, &pool) } else { None };
            ensure!(
                got.zip(want).is_some_and(|(a, b)| (a - b).abs() < 1e-12) || got == want,
                "nDCG mismatch on {grades:?}"
            );
            count += 1;
        }
    }
    within(Duration::from_secs(60), start).map(|t| format!("worked examples and {count} exhaustive rankings, {t}"))
}

fn oracle_end_to_end() -> Result<String, String> {
    let f = Fixture::generate(&FixtureSpec::default());
    ensure!(f.queries.len() == 20 && f.candidates.iter().all(|c| c.len() == 50), "fixture shape");
    let expanded: Vec<ExpandedQuery> = f.queries.iter().map(ExpandedQuery::unexpanded).collect();
    let rr = Reranker::default();
    let oracle = OracleScorer { qrels: &f.qrels, min_grade: 1 };
    let runs = rr.rerank_all(&f.candidates, &expanded, &oracle, None).map_err(|e| e.to_string())?;
    let map = evaluate_run(&runs, &f.qrels, &MetricConfig::default())
        .and_then(|r| r.mean(Metric::Map))
        .map_err(|e| e.to_string())?;
    ensure!(format!("{map:.6}") == "1.000000", "oracle MAP {map}");

    let runs = rr.rerank_all(&f.candidates, &expanded, &ConstantScorer(0.5), None).map_err(|e| e.to_string())?;
    let mut written = Vec::new();
    write_run_file(&runs, "const", &mut written).map_err(|e| e.to_string())?;
    let mut golden = String::new();
    let mut sets: Vec<_> = f.candidates.iter().collect();
    sets.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    for set in sets {
        let mut ids: Vec<&str> = set.passage_ids().collect();
        ids.sort();
        for (i, id) in ids.iter().enumerate() {
            golden.push_str(&format!("{} Q0 {id} {} 0.500000 const\n", set.query_id, i + 1));
        }
    }
    ensure!(written == golden.as_bytes(), "constant-scorer run differs from golden");
    Ok("oracle MAP 1.000000; constant run byte-identical to golden".into())
}

fn buckets() -> Result<String, String> {
    let table: [(Metric, [usize; 5]); 3] = [
        (Metric::Map, [2, 29, 5, 6, 1]),
        (Metric::Ndcg, [1, 26, 3, 13, 0]),
        (Metric::P10, [17, 10, 13, 2, 1]),
    ];
    let mut own = BTreeMap::new();
    let mut stats = Vec::new();
    for (metric, counts) in table {
        let mut topic = 0;
        for (bucket, &n) in Bucket::ALL.iter().zip(&counts) {
            for _ in 0..n {
                topic += 1;
                let (best, median, worst) = (0.9, 0.5, 0.1);
                let value = match bucket {
                    Bucket::AtBest => best - 5e-5,
                    Bucket::BestToMedian => 0.7,
                    Bucket::AtMedian => median + 5e-5,
                    Bucket::MedianToWorst => 0.3,
                    Bucket::AtWorst => worst,
                };
                let id = format!("{}", 1000 + topic);
                own.insert((id.clone(), metric), value);
                stats.push(PerTopicStats { topic_id: id, metric, best, median, worst });
            }
        }
    }
    let report = classify_buckets(&own, &stats, 1e-4).map_err(|e| e.to_string())?;
    let want = "Number of Topics\tMAP\tnDCG\tP@10\n\
                At Best\t2\t1\t17\n\
                Best to Median\t29\t26\t10\n\
                At Median\t5\t3\t13\n\
                Median to Worst\t6\t13\t2\n\
                At Worst\t1\t0\t1\n";
    ensure!(report.render_table() == want, "table:\n{}", report.render_table());
    for m in Metric::ALL {
        ensure!(report.topic_count(m) == 43, "{m}: {} topics", report.topic_count(m));
    }
    let f = summarize_fractions(&report);
    let pct = |x: f64| format!("{:.1}", 100.0 * x);
    ensure!(pct(f[&Metric::Map].above_median) == "72.1", "MAP fraction");
    ensure!(pct(f[&Metric::Ndcg].median_or_better) == "69.8", "nDCG fraction");
    ensure!(pct(f[&Metric::P10].median_or_better) == "93.0", "P@10 fraction");
    Ok("5×3 table reproduced, 43 topics per metric".into())
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let f = Fixture::generate(&FixtureSpec::default());
    f.write_to(d).map_err(|e| e.to_string())?;
    let mut stats = String::new();
    for q in f.queries.iter() {
        for m in ["map", "ndcg", "p10"] {
            stats.push_str(&format!("{}\t{m}\t1\t0.5\t0\n", q.id));
        }
    }
    std::fs::write(d.join("stats.tsv"), stats).map_err(|e| e.to_string())?;
    let path = |n: &str| d.join(n).to_string_lossy().into_owned();
    let outs = ["out_a", "out_b"];
    for (out, threads) in outs.iter().zip(["1", "3"]) {
        let code = passage_rerank::cli::run_subcommand([
            "passage-rerank", "--seed", "5", "--threads", threads, "pipeline",
            "--queries", &path("queries.tsv"), "--qrels", &path("qrels.txt"),
            "--top1000", &path("top1000.tsv"), "--collection", &path("collection.tsv"),
            "--expansions", &path("expansions.tsv"), "--filter", "dedup-exact",
            "--scorer", "lexical", "--stats", &path("stats.tsv"), "--out-dir", &path(out),
        ]);
        ensure!(code == 0, "pipeline exited {code}");
    }
    for file in ["expanded.tsv", "run.txt", "eval.tsv", "buckets.tsv"] {
        let a = std::fs::read(d.join(outs[0]).join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(d.join(outs[1]).join(file)).map_err(|e| e.to_string())?;
        ensure!(!a.is_empty() && a == b, "{file} differs between runs");
    }
    Ok("two pipeline runs byte-identical".into())
}

fn main() {
    let checks: [(&str, Check); 8] = [
        ("pair-mining oracle equivalence", pair_mining_oracle),
        ("pair-mining histogram and pair totals", train_histogram),
        ("BM25 correctness", bm25),
        ("truncation contract", truncation),
        ("metric correctness", metrics),
        ("oracle and constant scorer end-to-end", oracle_end_to_end),
        ("bucket classifier", buckets),
        ("pipeline determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
