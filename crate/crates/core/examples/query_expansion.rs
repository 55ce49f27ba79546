//! Append paraphrase beams to queries, with and without filtering.

use passage_rerank::corpus::QueryRecord;
use passage_rerank::expansion::{expand_queries, load_precomputed_expansions, FilterPolicy};

const BEAMS: &str = "\
q1\t1\t-0.41\thow much does a tesla cost
q1\t2\t-0.93\ttesla price
q1\t3\t-1.80\ttesla price
q2\t1\t-2.70\twhat is the boiling point
";

fn main() -> passage_rerank::Result<()> {
    let beams = load_precomputed_expansions(BEAMS.as_bytes())?;
    let queries = vec![
        QueryRecord::new("q1", "average tesla cost"),
        QueryRecord::new("q2", "water boiling temperature"),
        QueryRecord::new("q3", "cheapest flights"),
    ];
    for spec in ["none", "dedup-exact", "min-log-likelihood:-1.0", "lexical-overlap:0.2"] {
        let policy: FilterPolicy = spec.parse()?;
        let (expanded, missing) = expand_queries(&queries, &beams, 3, &policy)?;
        println!("[{spec}]");
        for e in &expanded {
            println!("  {} ({} beams): {}", e.query_id, e.beams_used.len(), e.assembled_text);
        }
        println!("  no beams for: {missing:?}");
    }
    Ok(())
}
