//! Seeded synthetic collections with planted relevance, for tests, examples
//! and smoke runs of the pipeline without MS MARCO data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    write_qrels, write_records, write_top1000, CandidateSet, PassageRecord, PassageStore, Qrels,
    QueryRecord, QueryStore, RecordStore,
};
use crate::error::Result;
use crate::expansion::{write_expansions, ExpansionMap, ParaphraseBeam};

const FILLER: &[&str] = &[
    "the", "a", "of", "and", "is", "in", "for", "with", "on", "how", "what", "long", "time",
    "cost", "price", "average", "water", "school", "house", "city", "body", "food", "energy",
    "music", "river", "market", "health", "car", "plant", "light",
];

#[derive(Debug, Clone, Copy)]
pub struct FixtureSpec {
    pub queries: usize,
    pub candidates_per_query: usize,
    pub max_relevant: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            queries: 20,
            candidates_per_query: 50,
            max_relevant: 3,
            seed: 2019,
        }
    }
}

/// Queries, passages, candidate sets and judgments. Every judged-relevant
/// passage is among its query's candidates.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub queries: QueryStore,
    pub passages: PassageStore,
    pub qrels: Qrels,
    pub candidates: Vec<CandidateSet>,
    pub expansions: ExpansionMap,
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'static str> {
    (0..n).map(|_| *FILLER.choose(rng).expect("filler")).collect()
}

impl Fixture {
    pub fn generate(spec: &FixtureSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut queries = Vec::new();
        let mut passages = Vec::new();
        let mut qrels = Qrels::new();
        let mut candidates = Vec::new();
        let mut expansions = ExpansionMap::new();
        let mut next_pid = 0usize;

        for qi in 0..spec.queries {
            let qid = format!("q{:03}", qi + 1);
            let key = format!("topic{}", qi + 1);
            let alt = format!("subject{}", qi + 1);
            let mut qtext = words(&mut rng, 2);
            qtext.insert(1, &key);
            queries.push(QueryRecord::new(&qid, qtext.join(" ")));
            expansions.insert(
                qid.clone(),
                vec![
                    ParaphraseBeam::new(format!("what is {key} {alt}"), -0.4, 1),
                    ParaphraseBeam::new(format!("{alt} meaning"), -0.9, 2),
                    ParaphraseBeam::new(format!("define {key}"), -1.7, 3),
                ],
            );

            let n_rel = rng.random_range(1..=spec.max_relevant.max(1));
            let mut set = CandidateSet::new(&qid);
            set.query_text = Some(queries[qi].text.clone());
            let mut members = Vec::new();
            // Shuffled id slots, so passage id order says nothing about relevance.
            let mut slots: Vec<usize> = (0..spec.candidates_per_query).collect();
            slots.shuffle(&mut rng);
            for (ci, slot) in slots.into_iter().enumerate() {
                let pid = format!("p{:05}", next_pid + slot);
                let len = rng.random_range(6..20);
                let mut body = words(&mut rng, len);
                let relevant = ci < n_rel;
                if relevant {
                    body.push(&key);
                    body.push(if rng.random_bool(0.5) { &alt } else { &key });
                    let grade = rng.random_range(1..=3);
                    qrels.insert(&qid, &pid, grade);
                } else if ci < n_rel + 2 {
                    qrels.insert(&qid, &pid, 0);
                }
                body.shuffle(&mut rng);
                let text = body.join(" ");
                passages.push(PassageRecord::new(&pid, &text));
                members.push((pid, text));
            }
            next_pid += spec.candidates_per_query;
            members.shuffle(&mut rng);
            for (pid, text) in members {
                set.push(pid, Some(text)).expect("fixture candidate set within capacity");
            }
            candidates.push(set);
        }

        Fixture {
            queries: RecordStore::from_records(queries).expect("unique query ids"),
            passages: RecordStore::from_records(passages).expect("unique passage ids"),
            qrels,
            candidates,
            expansions,
        }
    }

    /// Writes `queries.tsv`, `collection.tsv`, `qrels.txt`, `top1000.tsv` and
    /// `expansions.tsv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            Ok(BufWriter::new(File::create(dir.join(name))?))
        };
        let mut w = open("queries.tsv")?;
        write_records(&self.queries, &mut w)?;
        w.flush()?;
        let mut w = open("collection.tsv")?;
        write_records(&self.passages, &mut w)?;
        w.flush()?;
        let mut w = open("qrels.txt")?;
        write_qrels(&self.qrels, &mut w)?;
        w.flush()?;
        let mut w = open("top1000.tsv")?;
        write_top1000(&self.candidates, None, None, &mut w)?;
        w.flush()?;
        let mut w = open("expansions.tsv")?;
        write_expansions(&self.expansions, &mut w)?;
        w.flush()?;
        Ok(())
    }
}
