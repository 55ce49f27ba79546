#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use passage_rerank::corpus::Qrels;

pub type Handler = dyn Fn(&str, &str) -> (u16, String) + Send + Sync;

/// Minimal HTTP server on an ephemeral port. Each request is answered by the
/// handler with (status, JSON body).
pub struct StubServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    server: Arc<tiny_http::Server>,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: impl Fn(&str, &str) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub"));
        let url = format!("http://{}", server.server_addr().to_ip().expect("ip addr"));
        let hits = Arc::new(AtomicUsize::new(0));
        let (srv, h) = (server.clone(), hits.clone());
        let worker = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                h.fetch_add(1, Ordering::SeqCst);
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let (status, reply) = handler(req.url(), &body);
                let header =
                    tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let resp = tiny_http::Response::from_string(reply)
                    .with_status_code(status)
                    .with_header(header);
                let _ = req.respond(resp);
            }
        });
        StubServer {
            url,
            hits,
            server,
            worker: Some(worker),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// Deterministic fake model: paraphrases are word rotations with decreasing
/// log-likelihood, scores are query/passage token overlap squashed to [0, 1].
pub fn fake_model(path: &str, body: &str) -> (u16, String) {
    let v: serde_json::Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(_) if path == "/health" => return (200, r#"{"status":"ok"}"#.into()),
        Err(e) => return (400, format!(r#"{{"error":"{e}"}}"#)),
    };
    match path {
        "/paraphrase" => {
            let n = v["num_beams"].as_u64().unwrap_or(1) as usize;
            let results: Vec<serde_json::Value> = v["queries"]
                .as_array()
                .unwrap()
                .iter()
                .map(|q| {
                    let words: Vec<&str> = q["text"].as_str().unwrap().split(' ').collect();
                    let beams: Vec<serde_json::Value> = (0..n)
                        .map(|i| {
                            let mut w = words.clone();
                            w.rotate_left((i + 1) % words.len().max(1));
                            serde_json::json!({"text": w.join(" "), "log_likelihood": -0.5 * (i + 1) as f64})
                        })
                        .collect();
                    serde_json::json!({"id": q["id"], "beams": beams})
                })
                .collect();
            (200, serde_json::json!({ "results": results }).to_string())
        }
        "/score" => {
            let scores: Vec<serde_json::Value> = v["pairs"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| {
                    let q: BTreeSet<&str> = p["query"].as_str().unwrap().split(' ').collect();
                    let hits = p["passage"]
                        .as_str()
                        .unwrap()
                        .split(' ')
                        .filter(|w| q.contains(w))
                        .count();
                    serde_json::json!({"id": p["id"], "probability": hits as f64 / (hits as f64 + 1.0)})
                })
                .collect();
            (200, serde_json::json!({ "scores": scores }).to_string())
        }
        _ => (404, r#"{"error":"not found"}"#.into()),
    }
}

/// Brute-force pair mining: every (query, query) combination is checked for a
/// shared relevant passage, passage by passage.
pub struct PairOracle {
    pub histogram: BTreeMap<usize, usize>,
    pub unordered: BTreeSet<(String, String)>,
    pub triples: BTreeSet<(String, String, String)>,
}

pub fn pair_oracle(judgments: &[(String, String, u32)], min_grade: u32) -> PairOracle {
    let passages: Vec<&str> = judgments
        .iter()
        .map(|j| j.1.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let queries: Vec<&str> = judgments
        .iter()
        .map(|j| j.0.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut relevant = vec![vec![false; queries.len()]; passages.len()];
    for (q, p, g) in judgments {
        if *g >= min_grade {
            let qi = queries.binary_search(&q.as_str()).unwrap();
            let pi = passages.binary_search(&p.as_str()).unwrap();
            relevant[pi][qi] = true;
        }
    }
    let mut histogram = BTreeMap::new();
    let mut unordered = BTreeSet::new();
    let mut triples = BTreeSet::new();
    for (pi, p) in passages.iter().enumerate() {
        let k = relevant[pi].iter().filter(|&&r| r).count();
        if k > 0 {
            *histogram.entry(k).or_insert(0) += 1;
        }
        for (ai, a) in queries.iter().enumerate() {
            for (bi, b) in queries.iter().enumerate() {
                if ai != bi && relevant[pi][ai] && relevant[pi][bi] {
                    triples.insert((p.to_string(), a.to_string(), b.to_string()));
                    if a < b {
                        unordered.insert((a.to_string(), b.to_string()));
                    }
                }
            }
        }
    }
    PairOracle {
        histogram,
        unordered,
        triples,
    }
}

/// AP as the area under the stepwise precision/recall curve.
pub fn ap_oracle(grades_in_rank_order: &[u32], total_relevant: usize) -> Option<f64> {
    if total_relevant == 0 {
        return None;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=grades_in_rank_order.len() {
        let hits = grades_in_rank_order[..k].iter().filter(|&&g| g >= 1).count();
        let recall = hits as f64 / total_relevant as f64;
        area += (hits as f64 / k as f64) * (recall - prev_recall);
        prev_recall = recall;
    }
    Some(area)
}

fn dcg(grades: &[u32]) -> f64 {
    grades
        .iter()
        .enumerate()
        .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// nDCG with the ideal DCG found by trying every ordering of the judged pool.
pub fn ndcg_oracle(grades_in_rank_order: &[u32], judged_pool: &[u32]) -> Option<f64> {
    let ideal = permutations(judged_pool)
        .iter()
        .map(|p| dcg(p))
        .fold(0.0, f64::max);
    if ideal <= 0.0 {
        return None;
    }
    Some(dcg(grades_in_rank_order) / ideal)
}

/// All sequences of length `n` over grades `0..=max_grade`.
pub fn grade_sequences(n: usize, max_grade: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..=max_grade).map(move |g| {
                    let mut t = s.clone();
                    t.push(g);
                    t
                })
            })
            .collect();
    }
    out
}

pub fn qrels_from(judgments: &[(String, String, u32)]) -> Qrels {
    let mut q = Qrels::new();
    for (a, b, g) in judgments {
        q.insert(a, b, *g);
    }
    q
}
