//! HTTP/JSON client for the model service that hosts the paraphraser and the
//! relevance scorer.
//!
//! Endpoints: `POST /paraphrase`, `POST /score`, `GET /health`. Transport
//! failures and 5xx responses are retried with exponential backoff up to a
//! fixed number of attempts; 4xx responses and malformed bodies are protocol
//! errors and are not retried.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::QueryRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRequest {
    pub queries: Vec<QueryItem>,
    pub num_beams: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamItem {
    pub text: String,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseResult {
    pub id: String,
    #[serde(default)]
    pub beams: Vec<BeamItem>,
    /// Per-item failure reported by the service (e.g. empty input text).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseResponse {
    pub results: Vec<ParaphraseResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairItem {
    pub id: String,
    pub query: String,
    pub passage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub pairs: Vec<PairItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub id: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<ScoreItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Checks a paraphrase response against its request: every requested id
/// answered exactly once, at most `num_beams` beams, log-likelihoods ≤ 0 and
/// non-increasing.
pub fn validate_paraphrase_response(
    request: &ParaphraseRequest,
    response: &ParaphraseResponse,
) -> Result<()> {
    let expected: HashSet<&str> = request.queries.iter().map(|q| q.id.as_str()).collect();
    let mut seen = HashSet::new();
    for r in &response.results {
        if !expected.contains(r.id.as_str()) {
            return Err(Error::Protocol(format!("unexpected id {:?} in response", r.id)));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Protocol(format!("id {:?} answered twice", r.id)));
        }
        if r.beams.len() > request.num_beams {
            return Err(Error::Protocol(format!(
                "{} beams for {:?}, requested at most {}",
                r.beams.len(),
                r.id,
                request.num_beams
            )));
        }
        for (i, b) in r.beams.iter().enumerate() {
            if !(b.log_likelihood.is_finite() && b.log_likelihood <= 0.0) {
                return Err(Error::Protocol(format!(
                    "invalid log-likelihood {} for {:?}",
                    b.log_likelihood, r.id
                )));
            }
            if i > 0 && r.beams[i - 1].log_likelihood < b.log_likelihood {
                return Err(Error::Protocol(format!(
                    "beams for {:?} are not ordered by log-likelihood",
                    r.id
                )));
            }
        }
    }
    if seen.len() != expected.len() {
        return Err(Error::Protocol(format!(
            "response answers {} of {} queries",
            seen.len(),
            expected.len()
        )));
    }
    Ok(())
}

/// Checks a score response and returns probabilities aligned with the
/// request's pair order.
pub fn align_scores(request: &ScoreRequest, response: &ScoreResponse) -> Result<Vec<f64>> {
    if response.scores.len() != request.pairs.len() {
        return Err(Error::Protocol(format!(
            "{} scores for {} pairs",
            response.scores.len(),
            request.pairs.len()
        )));
    }
    let mut by_id: HashMap<&str, f64> = HashMap::with_capacity(response.scores.len());
    for s in &response.scores {
        if !(0.0..=1.0).contains(&s.probability) {
            return Err(Error::Protocol(format!(
                "probability {} for {:?} outside [0, 1]",
                s.probability, s.id
            )));
        }
        if by_id.insert(s.id.as_str(), s.probability).is_some() {
            return Err(Error::Protocol(format!("id {:?} scored twice", s.id)));
        }
    }
    request
        .pairs
        .iter()
        .map(|p| {
            by_id
                .get(p.id.as_str())
                .copied()
                .ok_or_else(|| Error::Protocol(format!("no score for id {:?}", p.id)))
        })
        .collect()
}

/// Source of paraphrase beams; implemented by the HTTP client and by
/// in-process fakes.
pub trait ParaphraseService: Sync {
    fn paraphrase(&self, request: &ParaphraseRequest) -> Result<ParaphraseResponse>;
}

/// Source of relevance probabilities for (query, passage) text pairs.
pub trait ScoreService: Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse>;
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

pub struct ServiceClient {
    base_url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl ServiceClient {
    pub fn new(base_url: &str) -> Self {
        Self::with_options(base_url, Duration::from_secs(60), RetryPolicy::default())
    }

    pub fn with_options(base_url: &str, timeout: Duration, retry: RetryPolicy) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        ServiceClient {
            base_url: base_url.trim_end_matches('/').to_owned(),
            agent: ureq::Agent::new_with_config(config),
            retry,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn health(&self) -> Result<HealthResponse> {
        self.with_retries("/health", |url| self.agent.get(url).call())
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp> {
        self.with_retries(path, |url| self.agent.post(url).send_json(body))
    }

    fn with_retries<Resp: DeserializeOwned>(
        &self,
        path: &str,
        send: impl Fn(&str) -> std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<Resp> {
        let url = format!("{}{}", self.base_url, path);
        let attempts = self.retry.max_attempts.max(1);
        let mut backoff = self.retry.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match send(&url) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let body = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| Error::Protocol(format!("{path}: unreadable body: {e}")))?;
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&body)
                            .map_err(|e| Error::Protocol(format!("{path}: malformed response: {e}")));
                    }
                    let detail = serde_json::from_str::<ErrorBody>(&body)
                        .map(|e| e.error)
                        .unwrap_or(body);
                    if status < 500 {
                        return Err(Error::Protocol(format!("{path}: HTTP {status}: {detail}")));
                    }
                    last = format!("{path}: HTTP {status}: {detail}");
                }
                Err(e) => last = format!("{path}: {e}"),
            }
            log::warn!("attempt {attempt}/{attempts} failed: {last}");
            if attempt < attempts {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(Error::Transport {
            attempts,
            message: last,
        })
    }
}

impl ParaphraseService for ServiceClient {
    fn paraphrase(&self, request: &ParaphraseRequest) -> Result<ParaphraseResponse> {
        self.post("/paraphrase", request)
    }
}

impl ScoreService for ServiceClient {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        self.post("/score", request)
    }
}

impl From<&QueryRecord> for QueryItem {
    fn from(q: &QueryRecord) -> Self {
        QueryItem {
            id: q.id.clone(),
            text: q.text.clone(),
        }
    }
}
