//! Score a TREC run file against graded qrels.

use passage_rerank::corpus::{parse_qrels, read_rankings};
use passage_rerank::eval::{evaluate_run, Gain, Metric, MetricConfig};

const QRELS: &str = "\
19335 0 p1 3
19335 0 p2 0
19335 0 p3 1
47923 0 p7 2
47923 0 p9 2
";

const RUN: &str = "\
19335 Q0 p1 1 0.98 demo
19335 Q0 p2 2 0.61 demo
19335 Q0 p3 3 0.40 demo
47923 Q0 p8 1 0.77 demo
47923 Q0 p9 2 0.52 demo
";

fn main() -> passage_rerank::Result<()> {
    let qrels = parse_qrels(QRELS.as_bytes())?;
    let run = read_rankings(RUN.as_bytes())?;
    for gain in [Gain::Exponential, Gain::Linear] {
        let config = MetricConfig { ndcg_gain: gain, ..Default::default() };
        let report = evaluate_run(&run, &qrels, &config)?;
        println!("{gain:?} gain");
        let mut out = Vec::new();
        report.write_tsv(&Metric::ALL, &mut out)?;
        print!("{}", String::from_utf8_lossy(&out));
    }
    // Only grade-2+ judgments count as relevant for AP and P@10 here.
    let strict = MetricConfig { binarize_threshold: 2, ..Default::default() };
    println!("MAP @ threshold 2: {:.4}", evaluate_run(&run, &qrels, &strict)?.mean(Metric::Map)?);
    Ok(())
}
