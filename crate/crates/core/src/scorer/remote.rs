//! HTTP client for the model-serving sidecar.
//!
//! Wire protocol (JSON, natural-log probabilities):
//!
//! * `POST /v1/score/masked` with `{"words": [...], "filled": [...], "targets": [...]}`
//!   answers `{"logprobs": {"<target>": <real>, ...}}`
//! * `POST /v1/score/causal` with `{"words": [...]}` answers `{"logprobs": [<real>, ...]}`
//! * `GET /v1/health` answers `{"status": "ok", "masked_model": ..., "causal_model": ...}`
//!
//! A `null` log-probability is read as a zero probability.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{ConfigError, MaskedScoreRequest, PositionScores, ScoreError, Scorer, ScorerConfig};
use crate::types::{LogProb, Sentence};

pub const MASKED_PATH: &str = "/v1/score/masked";
pub const CAUSAL_PATH: &str = "/v1/score/causal";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Serialize)]
struct MaskedBody<'a> {
    words: &'a [String],
    filled: Vec<usize>,
    targets: &'a [usize],
}

#[derive(Debug, Deserialize)]
struct MaskedReply {
    logprobs: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Serialize)]
struct CausalBody<'a> {
    words: &'a [String],
}

#[derive(Debug, Deserialize)]
struct CausalReply {
    logprobs: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Health {
    pub status: String,
    pub masked_model: Option<String>,
    pub causal_model: Option<String>,
}

type ScoreResult = Result<PositionScores, ScoreError>;

/// Counting semaphore bounding in-flight HTTP requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Permits { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteScorer {
    base: String,
    client: Client,
    permits: Permits,
    batch_size: usize,
    max_concurrent: usize,
    retries: u32,
}

impl std::fmt::Debug for RemoteScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteScorer").field("base", &self.base).finish_non_exhaustive()
    }
}

impl RemoteScorer {
    pub fn new(endpoint: &str, config: &ScorerConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let url = reqwest::Url::parse(endpoint)
            .map_err(|e| ConfigError::Invalid(format!("bad endpoint `{endpoint}`: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(ConfigError::Invalid(format!("endpoint `{endpoint}` is not http(s)")));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ConfigError::Invalid(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteScorer {
            base: endpoint.trim_end_matches('/').to_string(),
            client,
            permits: Permits::new(config.max_concurrent_requests),
            batch_size: config.batch_size,
            max_concurrent: config.max_concurrent_requests,
            retries: config.retries,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    pub fn health(&self) -> Result<Health, ScoreError> {
        let _permit = self.permits.acquire();
        let resp = self
            .client
            .get(format!("{}{HEALTH_PATH}", self.base))
            .send()
            .map_err(|e| ScoreError::Transport(e.to_string()))?;
        let resp = check_status(resp)?;
        resp.json().map_err(|e| ScoreError::Protocol(format!("bad health reply: {e}")))
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R, ScoreError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.permits.acquire();
                self.post_once(path, body)
            };
            match result {
                Err(e) if e.is_retriable() && attempt < self.retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(50 << attempt));
                }
                other => return other,
            }
        }
    }

    fn post_once<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R, ScoreError> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(|e| ScoreError::Transport(e.to_string()))?;
        let resp = check_status(resp)?;
        let bytes = resp.bytes().map_err(|e| ScoreError::Transport(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| ScoreError::Protocol(format!("malformed reply: {e}")))
    }
}

fn check_status(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, ScoreError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let message = resp.text().unwrap_or_default();
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        Err(ScoreError::Transport(format!("status {status}: {message}")))
    } else {
        Err(ScoreError::Rejected { status: status.as_u16(), message })
    }
}

fn to_logprob(v: Option<f64>) -> Result<LogProb, ScoreError> {
    match v {
        None => Ok(LogProb::ZERO_PROB),
        Some(v) => LogProb::new(v).map_err(|e| ScoreError::Protocol(e.to_string())),
    }
}

/// Checks that the reply answers exactly the requested targets.
fn decode_masked(reply: MaskedReply, targets: &[usize]) -> Result<PositionScores, ScoreError> {
    let wanted: BTreeSet<usize> = targets.iter().copied().collect();
    let mut out = PositionScores::new();
    for (key, value) in reply.logprobs {
        let k: usize = key
            .parse()
            .map_err(|_| ScoreError::Protocol(format!("non-integer position key `{key}`")))?;
        if !wanted.contains(&k) {
            return Err(ScoreError::Protocol(format!("unrequested position {k} in reply")));
        }
        if out.insert(k, to_logprob(value)?).is_some() {
            return Err(ScoreError::Protocol(format!("position {k} answered twice")));
        }
    }
    if let Some(missing) = wanted.iter().find(|k| !out.contains_key(k)) {
        return Err(ScoreError::Protocol(format!("reply lacks position {missing}")));
    }
    Ok(out)
}

impl Scorer for RemoteScorer {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        req.validate()?;
        let body = MaskedBody {
            words: req.sentence.words(),
            filled: req.state.filled_positions(),
            targets: &req.targets,
        };
        let reply: MaskedReply = self.post(MASKED_PATH, &body)?;
        decode_masked(reply, &req.targets)
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        let reply: CausalReply = self.post(CAUSAL_PATH, &CausalBody { words: sentence.words() })?;
        if reply.logprobs.len() != sentence.len() {
            return Err(ScoreError::Protocol(format!(
                "causal reply has {} entries for {} words",
                reply.logprobs.len(),
                sentence.len()
            )));
        }
        reply.logprobs.into_iter().map(to_logprob).collect()
    }

    /// Dispatches the requests in chunks of `batch_size`, with at most
    /// `max_concurrent_requests` in flight across every caller.
    fn score_states(&self, reqs: &[MaskedScoreRequest<'_>]) -> Vec<Result<PositionScores, ScoreError>> {
        if reqs.len() <= 1 {
            return reqs.iter().map(|r| self.score_state(r)).collect();
        }
        let chunks: Vec<&[MaskedScoreRequest<'_>]> = reqs.chunks(self.batch_size).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Vec<ScoreResult>>>> = Mutex::new(vec![None; chunks.len()]);
        let workers = self.max_concurrent.min(chunks.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(chunk) = chunks.get(i) else { break };
                    let scored: Vec<_> = chunk.iter().map(|r| self.score_state(r)).collect();
                    results.lock().unwrap()[i] = Some(scored);
                });
            }
        });
        results
            .into_inner()
            .unwrap()
            .into_iter()
            .flat_map(|c| c.expect("every chunk scored"))
            .collect()
    }
}
