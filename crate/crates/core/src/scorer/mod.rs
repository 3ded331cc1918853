//! Scoring contract: the log-probability of the true word at masked
//! positions of a partially filled sentence, or at every position of a
//! left-to-right prefix.
//!
//! Scorers return only the true word's log-probability, never a full
//! vocabulary distribution. Subword tokenization, when a real model is
//! involved, stays behind the remote sidecar.

mod cache;
mod reference;
mod remote;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::types::{LogProb, Sentence, SubsetState};

pub use cache::{with_cache, CachedScorer};
pub use reference::{NeighborScorer, TableParseError, TableScorer, UniformScorer};
pub use remote::{RemoteScorer, MASKED_PATH, CAUSAL_PATH, HEALTH_PATH};

/// Log-probabilities keyed by word position.
pub type PositionScores = BTreeMap<usize, LogProb>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    /// Network or server-side failure; the same request may succeed later.
    #[error("transport error (retriable): {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The sidecar refused the request (4xx).
    #[error("request rejected with status {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no table entry for {0}")]
    MissingEntry(String),
}

impl ScoreError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ScoreError::Transport(_))
    }
}

/// Request for the true-word log-probability at each of `targets`, with
/// the words at `state`'s filled positions visible and every other slot
/// masked.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedScoreRequest<'a> {
    pub sentence: &'a Sentence,
    pub state: SubsetState,
    pub targets: Vec<usize>,
}

impl<'a> MaskedScoreRequest<'a> {
    /// Request targeting every masked position of `state`.
    pub fn all_masked(sentence: &'a Sentence, state: SubsetState) -> Self {
        MaskedScoreRequest {
            sentence,
            targets: state.masked_positions(),
            state,
        }
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        let n = self.sentence.len();
        if self.state.n() != n {
            return Err(ScoreError::Contract(format!(
                "state width {} does not match sentence length {n}",
                self.state.n()
            )));
        }
        if self.targets.is_empty() {
            return Err(ScoreError::Contract("empty target set".into()));
        }
        for &k in &self.targets {
            if k >= n {
                return Err(ScoreError::Contract(format!(
                    "target {k} out of range for {n} words"
                )));
            }
            if self.state.is_filled(k) {
                return Err(ScoreError::Contract(format!("target {k} is already filled")));
            }
        }
        Ok(())
    }
}

/// A source of true-word log-probabilities.
///
/// Implementations must be deterministic for a fixed configuration and
/// shareable across threads.
pub trait Scorer: Send + Sync {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError>;

    /// Entry `k` is `ln P(word_k | words 0..k)`.
    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError>;

    /// Scores several states at once. Results line up with `reqs` and must
    /// not depend on how callers partition their requests.
    fn score_states(&self, reqs: &[MaskedScoreRequest<'_>]) -> Vec<Result<PositionScores, ScoreError>> {
        reqs.iter().map(|r| self.score_state(r)).collect()
    }
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        (**self).score_state(req)
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        (**self).score_causal(sentence)
    }

    fn score_states(&self, reqs: &[MaskedScoreRequest<'_>]) -> Vec<Result<PositionScores, ScoreError>> {
        (**self).score_states(reqs)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        (**self).score_state(req)
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        (**self).score_causal(sentence)
    }

    fn score_states(&self, reqs: &[MaskedScoreRequest<'_>]) -> Vec<Result<PositionScores, ScoreError>> {
        (**self).score_states(reqs)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        (**self).score_state(req)
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        (**self).score_causal(sentence)
    }

    fn score_states(&self, reqs: &[MaskedScoreRequest<'_>]) -> Vec<Result<PositionScores, ScoreError>> {
        (**self).score_states(reqs)
    }
}

/// Wrapper counting the masked and causal requests that reach `inner`.
#[derive(Debug, Default)]
pub struct CountingScorer<S> {
    inner: S,
    masked: AtomicU64,
    causal: AtomicU64,
}

impl<S> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        CountingScorer {
            inner,
            masked: AtomicU64::new(0),
            causal: AtomicU64::new(0),
        }
    }

    pub fn masked_calls(&self) -> u64 {
        self.masked.load(Ordering::Relaxed)
    }

    pub fn causal_calls(&self) -> u64 {
        self.causal.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Scorer> Scorer for CountingScorer<S> {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        self.masked.fetch_add(1, Ordering::Relaxed);
        self.inner.score_state(req)
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        self.causal.fetch_add(1, Ordering::Relaxed);
        self.inner.score_causal(sentence)
    }

    fn score_states(&self, reqs: &[MaskedScoreRequest<'_>]) -> Vec<Result<PositionScores, ScoreError>> {
        self.masked.fetch_add(reqs.len() as u64, Ordering::Relaxed);
        self.inner.score_states(reqs)
    }
}

/// Which scorer backend to build.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerKind {
    Uniform(f64),
    Table(PathBuf),
    Neighbor,
    Remote(String),
}

impl FromStr for ScorerKind {
    type Err = ConfigError;

    /// Accepts `ref:uniform:<p>`, `ref:neighbor`, `table:<path>` and
    /// `remote:<endpoint>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(p) = s.strip_prefix("ref:uniform:") {
            let p: f64 = p
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("bad uniform probability `{p}`")))?;
            return Ok(ScorerKind::Uniform(p));
        }
        if s == "ref:neighbor" {
            return Ok(ScorerKind::Neighbor);
        }
        if let Some(path) = s.strip_prefix("table:") {
            if path.is_empty() {
                return Err(ConfigError::Invalid("table scorer needs a path".into()));
            }
            return Ok(ScorerKind::Table(PathBuf::from(path)));
        }
        if let Some(endpoint) = s.strip_prefix("remote:") {
            if endpoint.is_empty() {
                return Err(ConfigError::Invalid("remote scorer needs an endpoint".into()));
            }
            return Ok(ScorerKind::Remote(endpoint.to_string()));
        }
        Err(ConfigError::Invalid(format!(
            "unknown scorer `{s}` (expected ref:uniform:<p>, ref:neighbor, table:<path> or remote:<url>)"
        )))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid scorer configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Table(#[from] TableParseError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub batch_size: usize,
    pub max_concurrent_requests: usize,
    pub timeout: Duration,
    /// Extra attempts after a retriable remote failure.
    pub retries: u32,
}

impl ScorerConfig {
    pub fn new(kind: ScorerKind) -> Self {
        ScorerConfig {
            kind,
            batch_size: 32,
            max_concurrent_requests: 4,
            timeout: Duration::from_secs(60),
            retries: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let ScorerKind::Uniform(p) = self.kind {
            if !(p > 0.0 && p <= 1.0) {
                return Err(ConfigError::Invalid(format!("uniform p must be in (0, 1], got {p}")));
            }
        }
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be at least 1".into()));
        }
        if self.max_concurrent_requests == 0 {
            return Err(ConfigError::Invalid("max_concurrent_requests must be at least 1".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Scorer>, ConfigError> {
        self.validate()?;
        Ok(match &self.kind {
            ScorerKind::Uniform(p) => Box::new(UniformScorer::new(*p).expect("validated")),
            ScorerKind::Neighbor => Box::new(NeighborScorer),
            ScorerKind::Table(path) => Box::new(TableScorer::from_file(path)?),
            ScorerKind::Remote(endpoint) => Box::new(RemoteScorer::new(endpoint, self)?),
        })
    }
}
