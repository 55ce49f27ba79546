//! Mine equivalent-query pairs from relevance judgments: queries that share a
//! relevant passage become (source, target) paraphrase training pairs.

use passage_rerank::corpus::{parse_qrels, QueryRecord, RecordStore};
use passage_rerank::pairs::{export_seq2seq, group_by_passage, mine_pairs, mining_report, PairOrdering};

const QRELS: &str = "\
q1 0 p10 1
q2 0 p10 1
q3 0 p10 1
q2 0 p11 1
q4 0 p11 1
q5 0 p12 1
q6 0 p13 0
";

fn main() -> passage_rerank::Result<()> {
    let qrels = parse_qrels(QRELS.as_bytes())?;
    let groups = group_by_passage(&qrels, 1)?;
    let report = mining_report(&groups);

    println!("queries per passage -> passages");
    for (k, n) in &report.histogram {
        println!("  {k} -> {n}");
    }
    println!("judgments: {}", report.total_judgments);
    println!("unordered pairs: {} distinct, {} per passage", report.unique_unordered_pairs, report.pair_occurrences);

    let pairs = mine_pairs(&groups, PairOrdering::BothDirections);
    let queries = RecordStore::from_records(vec![
        QueryRecord::new("q1", "average cost of a tesla"),
        QueryRecord::new("q2", "tesla price"),
        QueryRecord::new("q3", "how much does a tesla cost"),
        QueryRecord::new("q4", "tesla model 3 price range"),
        QueryRecord::new("q5", "what is a tesla coil"),
        QueryRecord::new("q6", "unrelated"),
    ])?;
    let (mut src, mut tgt) = (Vec::new(), Vec::new());
    let n = export_seq2seq(&pairs, &queries, &mut src, &mut tgt)?;
    println!("\n{n} seq2seq pairs:");
    let src = String::from_utf8_lossy(&src);
    let tgt = String::from_utf8_lossy(&tgt);
    for (s, t) in src.lines().zip(tgt.lines()) {
        println!("  {s}  =>  {t}");
    }
    Ok(())
}
