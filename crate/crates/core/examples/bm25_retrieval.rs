//! Build a BM25 index, save and reload it, and retrieve candidates.

use passage_rerank::bm25::{retrieve_topk, Bm25Params, InvertedIndex};
use passage_rerank::corpus::{PassageRecord, RecordStore};
use passage_rerank::text::{Analyzer, AnalyzerConfig};

fn main() -> passage_rerank::Result<()> {
    let passages = RecordStore::from_records(vec![
        PassageRecord::new("p1", "The Tesla Model 3 starts at around 35,000 dollars."),
        PassageRecord::new("p2", "Nikola Tesla invented the Tesla coil in 1891."),
        PassageRecord::new("p3", "Electric cars cost less to run than petrol cars."),
        PassageRecord::new("p4", "Prices for used electric cars keep falling."),
    ])?;
    let analyzer = Analyzer::new(AnalyzerConfig {
        stem: true,
        stopwords: ["the", "a", "of", "in", "to"].iter().map(|s| s.to_string()).collect(),
    });
    let index = InvertedIndex::build(&passages, &analyzer)?;
    println!("{} passages, {} terms, avgdl {:.2}", index.num_docs(), index.num_terms(), index.avgdl());

    let mut bytes = Vec::new();
    index.write_to(&mut bytes)?;
    let index = InvertedIndex::read_from(&bytes[..])?;
    println!("index file: {} bytes", bytes.len());

    for (k1, b) in [(0.9, 0.4), (1.2, 0.75)] {
        let params = Bm25Params::new(k1, b)?;
        let set = retrieve_topk(&index, "q1", "price of electric cars", 3, &params)?;
        let ids: Vec<&str> = set.passage_ids().collect();
        println!("k1={k1} b={b}: {ids:?}");
    }
    Ok(())
}
