//! Talk to a model service over HTTP. A toy service runs in-process so the
//! example is self-contained; point `ServiceClient::new` at a real one to use
//! trained models.


use passage_rerank::corpus::QueryRecord;
use passage_rerank::expansion::{fetch_expansions, FetchOptions};
use passage_rerank::reranker::score_remote;
use passage_rerank::service::{ParaphraseRequest, ParaphraseResponse, ScoreRequest, ScoreResponse, ScoreItem, ParaphraseResult, BeamItem, ServiceClient};

fn toy_service(path: &str, body: &str) -> String {
    match path {
        "/paraphrase" => {
            let req: ParaphraseRequest = serde_json::from_str(body).unwrap();
            let results = req
                .queries
                .into_iter()
                .map(|q| ParaphraseResult {
                    beams: (1..=req.num_beams)
                        .map(|i| BeamItem { text: format!("{} variant {i}", q.text), log_likelihood: -(i as f64) })
                        .collect(),
                    id: q.id,
                    error: None,
                })
                .collect();
            serde_json::to_string(&ParaphraseResponse { results }).unwrap()
        }
        "/score" => {
            let req: ScoreRequest = serde_json::from_str(body).unwrap();
            let scores = req
                .pairs
                .into_iter()
                .map(|p| {
                    let shared = p.query.split(' ').filter(|w| p.passage.contains(w)).count();
                    ScoreItem { id: p.id, probability: shared as f64 / (shared as f64 + 1.0) }
                })
                .collect();
            serde_json::to_string(&ScoreResponse { scores }).unwrap()
        }
        _ => r#"{"status":"ok"}"#.to_string(),
    }
}

fn main() -> passage_rerank::Result<()> {
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind");
    let url = format!("http://{}", server.server_addr().to_ip().expect("ip"));
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let reply = toy_service(req.url(), &body);
            let _ = req.respond(tiny_http::Response::from_string(reply));
        }
    });

    let client = ServiceClient::new(&url);
    println!("health: {}", client.health()?.status);

    let queries = vec![QueryRecord::new("q1", "tesla price"), QueryRecord::new("q2", "boiling point")];
    let fetched = fetch_expansions(&queries, &client, &FetchOptions { num_beams: 2, ..Default::default() })?;
    for (id, beams) in &fetched.beams {
        for b in beams {
            println!("{id} beam {}: {} ({})", b.beam_rank, b.text, b.log_likelihood);
        }
    }

    let pairs = [("tesla price", "the tesla price dropped"), ("tesla price", "water boils at 100 degrees")];
    println!("scores: {:?}", score_remote(&pairs, &client, 64, 4)?);
    Ok(())
}
