//! Re-rank a synthetic candidate pool with the built-in scorers and compare
//! their effectiveness.

use passage_rerank::eval::{evaluate_run, Metric, MetricConfig};
use passage_rerank::expansion::{expand_queries, FilterPolicy};
use passage_rerank::reranker::{ConstantScorer, LexicalOverlapScorer, OracleScorer, RelevanceScorer, Reranker};
use passage_rerank::synthetic::{Fixture, FixtureSpec};

fn main() -> passage_rerank::Result<()> {
    let f = Fixture::generate(&FixtureSpec::default());
    let reranker = Reranker::default();
    let oracle = OracleScorer { qrels: &f.qrels, min_grade: 1 };
    let scorers: [(&str, &dyn RelevanceScorer); 3] = [
        ("constant", &ConstantScorer(0.5)),
        ("lexical", &LexicalOverlapScorer),
        ("oracle", &oracle),
    ];
    for k in [0, 1, 3] {
        let (expanded, _) = expand_queries(f.queries.records(), &f.expansions, k, &FilterPolicy::None)?;
        for (name, scorer) in scorers {
            let runs = reranker.rerank_all(&f.candidates, &expanded, scorer, None)?;
            let report = evaluate_run(&runs, &f.qrels, &MetricConfig::default())?;
            println!(
                "beams={k} {name:<8} MAP {:.4}  nDCG {:.4}  P@10 {:.4}",
                report.mean(Metric::Map)?,
                report.mean(Metric::Ndcg)?,
                report.mean(Metric::P10)?
            );
        }
    }
    Ok(())
}
