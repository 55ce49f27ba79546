//! The full pipeline through the command-line entry point: write a synthetic
//! collection, build an index, retrieve, expand, re-rank, evaluate.

use passage_rerank::cli::run_subcommand;
use passage_rerank::synthetic::{Fixture, FixtureSpec};

fn main() {
    let dir = std::env::temp_dir().join("passage-rerank-demo");
    Fixture::generate(&FixtureSpec::default())
        .write_to(&dir)
        .expect("write fixture");
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    let steps: Vec<Vec<String>> = vec![
        vec!["build-index".into(), "--collection".into(), p("collection.tsv"), "--index".into(), p("bm25.idx")],
        vec![
            "retrieve".into(), "--index".into(), p("bm25.idx"), "--queries".into(), p("queries.tsv"),
            "--collection".into(), p("collection.tsv"), "--topk".into(), "100".into(),
            "--out".into(), p("bm25_top.tsv"), "--run".into(), p("bm25_run.txt"),
        ],
        vec!["evaluate".into(), "--run".into(), p("bm25_run.txt"), "--qrels".into(), p("qrels.txt")],
        vec![
            "pipeline".into(), "--queries".into(), p("queries.tsv"), "--qrels".into(), p("qrels.txt"),
            "--top1000".into(), p("bm25_top.tsv"), "--expansions".into(), p("expansions.tsv"),
            "--num-beams".into(), "2".into(), "--scorer".into(), "lexical".into(),
            "--out-dir".into(), p("pipeline"),
        ],
    ];
    for step in steps {
        println!("$ passage-rerank {}", step[0]);
        let code = run_subcommand(std::iter::once("passage-rerank".to_string()).chain(step));
        if code != 0 {
            std::process::exit(code);
        }
    }
    println!("outputs in {}", dir.display());
}
