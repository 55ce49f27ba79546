//! Place per-topic scores relative to the best, median and worst submitted
//! runs for each topic.

use std::collections::BTreeMap;

use passage_rerank::eval::{classify_buckets, parse_committee_stats, summarize_fractions, Metric, DEFAULT_BUCKET_EPSILON};

const STATS: &str = "\
1037798\tmap\t0.95\t0.51\t0.02
1037798\tndcg\t0.98\t0.60\t0.10
1063750\tmap\t0.83\t0.40\t0.00
1063750\tndcg\t0.91\t0.55\t0.05
1103812\tmap\t0.77\t0.35\t0.01
1103812\tndcg\t0.85\t0.47\t0.12
";

fn main() -> passage_rerank::Result<()> {
    let stats = parse_committee_stats(STATS.as_bytes())?;
    let own: BTreeMap<(String, Metric), f64> = [
        ("1037798", Metric::Map, 0.95),
        ("1037798", Metric::Ndcg, 0.72),
        ("1063750", Metric::Map, 0.40),
        ("1063750", Metric::Ndcg, 0.30),
        ("1103812", Metric::Map, 0.01),
        ("1103812", Metric::Ndcg, 0.60),
    ]
    .into_iter()
    .map(|(t, m, v)| ((t.to_string(), m), v))
    .collect();

    let report = classify_buckets(&own, &stats, DEFAULT_BUCKET_EPSILON)?;
    print!("{}", report.render_table());
    for ((topic, metric), bucket) in &report.assignments {
        println!("{topic} {metric}: {}", bucket.label());
    }
    for (m, f) in summarize_fractions(&report) {
        println!("{m}: {:.1}% at or above median, {:.1}% strictly above", 100.0 * f.median_or_better, 100.0 * f.above_median);
    }
    Ok(())
}
