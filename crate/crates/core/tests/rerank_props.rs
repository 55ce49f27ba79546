use std::collections::{HashMap, HashSet};

use passage_rerank::corpus::{CandidateSet, QueryRecord};
use passage_rerank::expansion::{assemble, filter_beams, ExpandedQuery, FilterPolicy, ParaphraseBeam};
use passage_rerank::reranker::{
    prepare_input, RelevanceScorer, Reranker, ScoringPair, TruncationConfig, WordPiece,
};
use passage_rerank::text::{whitespace_tokens, TokenSequence};
use passage_rerank::Result;
use proptest::prelude::*;

fn seq(n: usize, tag: &str) -> TokenSequence {
    TokenSequence::new((0..n).map(|i| format!("{tag}{i}")).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn truncation_contract(q in 0usize..2000, p in 0usize..2000) {
        let cfg = TruncationConfig::default();
        let input = prepare_input(&seq(q, "q"), &seq(p, "p"), &cfg).unwrap();
        prop_assert!(input.query_tokens.len() <= 64);
        prop_assert!(input.packed_len() <= 512);
        prop_assert_eq!(input.query_tokens.len(), q.min(64));
        prop_assert_eq!(input.passage_tokens.len(), p.min(512 - 3 - q.min(64)));
        // Prefixes are kept.
        let kept_q = input.query_tokens.tokens().iter().enumerate().all(|(i, t)| *t == format!("q{i}"));
        prop_assert!(kept_q);
        let kept_p = input.passage_tokens.tokens().iter().enumerate().all(|(i, t)| *t == format!("p{i}"));
        prop_assert!(kept_p);
    }
}

proptest! {
    #[test]
    fn truncation_contract_any_config(q in 0usize..600, p in 0usize..600, max_q in 1usize..100, total in 5usize..600) {
        let cfg = TruncationConfig { max_query_tokens: max_q, total_budget: total, special_token_overhead: 3 };
        let input = prepare_input(&seq(q, "q"), &seq(p, "p"), &cfg).unwrap();
        prop_assert!(input.query_tokens.len() <= max_q);
        prop_assert!(input.packed_len() <= total);
    }
}

struct ByHash;

impl RelevanceScorer for ByHash {
    fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|p| {
                let h = p.passage.bytes().fold(17u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
                (h % 97) as f64 / 96.0
            })
            .collect())
    }
}

/// Same scores pushed through a strictly increasing map into [0, 1].
struct Squashed;

impl RelevanceScorer for Squashed {
    fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>> {
        Ok(ByHash.score_batch(pairs)?.into_iter().map(|s| s * s * 0.5 + 0.25).collect())
    }
}

fn candidates(ids: &[usize]) -> CandidateSet {
    let mut set = CandidateSet::new("q1");
    for &i in ids {
        set.push(format!("p{i}"), Some(format!("text {i} {}", i * 7 % 13))).unwrap();
    }
    set
}

proptest! {
    #[test]
    fn rerank_ignores_candidate_order(ids in prop::collection::btree_set(0usize..500, 1..60), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let ids: Vec<usize> = ids.into_iter().collect();
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let q = ExpandedQuery::unexpanded(&QueryRecord::new("q1", "text"));
        let r = Reranker::default();
        let a = r.rerank(&candidates(&ids), &q, &ByHash, None).unwrap();
        let b = r.rerank(&candidates(&shuffled), &q, &ByHash, None).unwrap();
        prop_assert_eq!(&a, &b);
        let c = r.rerank(&candidates(&ids), &q, &Squashed, None).unwrap();
        prop_assert_eq!(a.passage_ids().collect::<Vec<_>>(), c.passage_ids().collect::<Vec<_>>());
        let got: HashSet<&str> = a.passage_ids().collect();
        prop_assert_eq!(got.len(), ids.len());
    }

    #[test]
    fn expansion_length_is_additive(words in prop::collection::vec("[a-z]{1,6}", 1..6), beams in prop::collection::vec(prop::collection::vec("[a-z]{1,6}", 1..6), 0..6), k in 0usize..8) {
        let q = QueryRecord::new("q", words.join(" "));
        let beams: Vec<ParaphraseBeam> = beams
            .iter()
            .enumerate()
            .map(|(i, w)| ParaphraseBeam::new(w.join(" "), -(i as f64), i + 1))
            .collect();
        let e = assemble(&q, &beams, k).unwrap();
        let want = words.len() + beams.iter().take(k).map(|b| whitespace_tokens(&b.text).len()).sum::<usize>();
        prop_assert_eq!(whitespace_tokens(&e.assembled_text).len(), want);
        prop_assert_eq!(e.beams_used.len(), k.min(beams.len()));
        prop_assert!(e.assembled_text.starts_with(&q.text));
    }

    #[test]
    fn filters_are_idempotent_subsets(texts in prop::collection::vec("[a-c]{1,2}( [a-c]{1,2}){0,2}", 0..8), theta in -5.0f64..0.0, tau in 0.0f64..1.0) {
        let beams: Vec<ParaphraseBeam> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| ParaphraseBeam::new(t.clone(), -0.7 * i as f64, i + 1))
            .collect();
        for policy in [
            FilterPolicy::None,
            FilterPolicy::DedupExact,
            FilterPolicy::MinLogLikelihood(theta),
            FilterPolicy::LexicalOverlap(tau),
        ] {
            let once = filter_beams("a b", &beams, &policy).unwrap();
            let twice = filter_beams("a b", &once, &policy).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.iter().all(|b| beams.contains(b)));
        }
    }
}

#[test]
fn wordpiece_budgets_count_pieces() {
    let vocab: HashSet<String> = ["[UNK]", "play", "##ing", "the", "game", "##s"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let wp = WordPiece::new(vocab);
    let toks = wp.tokenize("Playing the games");
    assert_eq!(toks.tokens(), ["play", "##ing", "the", "game", "##s"]);
    assert_eq!(WordPiece::detokenize(&toks), "playing the games");
    let cfg = TruncationConfig {
        max_query_tokens: 2,
        total_budget: 8,
        special_token_overhead: 3,
    };
    let input = prepare_input(&toks, &toks, &cfg).unwrap();
    assert_eq!(input.query_tokens.len(), 2);
    assert_eq!(input.passage_tokens.len(), 3);
}

#[test]
fn every_candidate_scored_once() {
    use std::sync::Mutex;
    struct Counting(Mutex<HashMap<String, usize>>);
    impl RelevanceScorer for Counting {
        fn score_batch(&self, pairs: &[ScoringPair<'_>]) -> Result<Vec<f64>> {
            let mut m = self.0.lock().unwrap();
            for p in pairs {
                *m.entry(p.passage_id.to_owned()).or_default() += 1;
            }
            Ok(vec![0.5; pairs.len()])
        }
    }
    let s = Counting(Mutex::new(HashMap::new()));
    let q = ExpandedQuery::unexpanded(&QueryRecord::new("q1", "x"));
    Reranker::default().rerank(&candidates(&[3, 1, 2]), &q, &s, None).unwrap();
    let m = s.0.into_inner().unwrap();
    assert_eq!(m.len(), 3);
    assert!(m.values().all(|&c| c == 1));
}
