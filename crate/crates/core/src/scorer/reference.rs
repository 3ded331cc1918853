//! Reference scorers used as fixtures and oracles. They are cost stubs, not
//! normalized distributions over a vocabulary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{MaskedScoreRequest, PositionScores, ScoreError, Scorer};
use crate::types::{LogProb, Sentence, SubsetState};

/// Context-free scorer: every word has probability `p` everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformScorer {
    logp: LogProb,
}

impl UniformScorer {
    pub fn new(p: f64) -> Option<Self> {
        if p > 0.0 && p <= 1.0 {
            Some(UniformScorer { logp: LogProb::from_prob(p).ok()? })
        } else {
            None
        }
    }

    pub fn logp(&self) -> LogProb {
        self.logp
    }
}

impl Scorer for UniformScorer {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        req.validate()?;
        Ok(req.targets.iter().map(|&k| (k, self.logp)).collect())
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        Ok(vec![self.logp; sentence.len()])
    }
}

/// Scores a fill at `k` as `(1 + filled neighbours of k) / 4`, so values
/// lie in {1/4, 2/4, 3/4}. Its causal answers coincide with its masked
/// answers on prefix-filled states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NeighborScorer;

impl NeighborScorer {
    pub fn prob(state: SubsetState, k: usize) -> f64 {
        let left = k > 0 && state.is_filled(k - 1);
        let right = state.is_filled(k + 1);
        (1 + left as u32 + right as u32) as f64 / 4.0
    }
}

impl Scorer for NeighborScorer {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        req.validate()?;
        Ok(req
            .targets
            .iter()
            .map(|&k| (k, LogProb::from_prob(Self::prob(req.state, k)).expect("in (0, 1)")))
            .collect())
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        let n = sentence.len();
        Ok((0..n)
            .map(|k| {
                let prefix = SubsetState::from_bits(n, (1u64 << k) - 1).expect("k < n");
                LogProb::from_prob(Self::prob(prefix, k)).expect("in (0, 1)")
            })
            .collect())
    }
}

#[derive(Debug, Error)]
pub enum TableParseError {
    #[error("cannot read table {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// Explicit lookup table of probabilities keyed by filled set and target
/// position. Entries are independent of the sentence's words; any missing
/// entry is a hard error.
///
/// Text format, one record per line (`#` starts a comment):
///
/// ```text
/// masked:<comma-list of filled positions or none>,target:<k>,p:<decimal>
/// causal,target:<k>,p:<decimal>
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableScorer {
    masked: HashMap<(u64, usize), f64>,
    causal: HashMap<usize, f64>,
}

impl TableScorer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics unless `p` is in `[0, 1]`.
    pub fn insert_masked(&mut self, filled: &[usize], target: usize, p: f64) {
        assert!((0.0..=1.0).contains(&p), "probability {p} outside [0, 1]");
        let bits = filled.iter().fold(0u64, |acc, &p| acc | (1 << p));
        self.masked.insert((bits, target), p);
    }

    /// Panics unless `p` is in `[0, 1]`.
    pub fn insert_causal(&mut self, target: usize, p: f64) {
        assert!((0.0..=1.0).contains(&p), "probability {p} outside [0, 1]");
        self.causal.insert(target, p);
    }

    pub fn masked_len(&self) -> usize {
        self.masked.len()
    }

    pub fn causal_len(&self) -> usize {
        self.causal.len()
    }

    /// A total table over every state of an `n`-position lattice with
    /// probabilities drawn uniformly from (0, 1]. Masked answers on
    /// prefix-filled states are independent of the causal ones.
    pub fn random(n: usize, seed: u64) -> Self {
        assert!(n <= 20, "random tables are limited to 20 positions");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = TableScorer::new();
        for bits in 0..(1u64 << n) {
            for k in (0..n).filter(|&k| bits & (1 << k) == 0) {
                table.masked.insert((bits, k), 1.0 - rng.random::<f64>());
            }
        }
        for k in 0..n {
            table.causal.insert(k, 1.0 - rng.random::<f64>());
        }
        table
    }

    /// Overwrites the causal entries with the masked answers on
    /// prefix-filled states, so the identity order and the causal route
    /// score identically.
    pub fn rig_causal_to_prefix_states(&mut self, n: usize) {
        for k in 0..n {
            let prefix = (1u64 << k) - 1;
            if let Some(&p) = self.masked.get(&(prefix, k)) {
                self.causal.insert(k, p);
            }
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TableParseError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TableParseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    /// Serializes in the line format accepted by [`str::parse`]; reading
    /// the output back yields an identical table.
    pub fn to_table_text(&self) -> String {
        let mut out = String::new();
        let mut masked: Vec<_> = self.masked.iter().collect();
        masked.sort_by_key(|((bits, k), _)| (bits.count_ones(), *bits, *k));
        for ((bits, k), p) in masked {
            let filled: Vec<String> = (0..64)
                .filter(|p| bits & (1u64 << p) != 0)
                .map(|p| p.to_string())
                .collect();
            let filled = if filled.is_empty() { "none".to_string() } else { filled.join(",") };
            writeln!(out, "masked:{filled},target:{k},p:{p}").unwrap();
        }
        let mut causal: Vec<_> = self.causal.iter().collect();
        causal.sort_by_key(|(k, _)| **k);
        for (k, p) in causal {
            writeln!(out, "causal,target:{k},p:{p}").unwrap();
        }
        out
    }

    fn lookup_masked(&self, state: SubsetState, k: usize) -> Result<LogProb, ScoreError> {
        self.masked.get(&(state.bits(), k)).map(|&p| to_logprob(p)).ok_or_else(|| {
            ScoreError::MissingEntry(format!(
                "masked state {:?} target {k}",
                state.filled_positions()
            ))
        })
    }
}

fn to_logprob(p: f64) -> LogProb {
    LogProb::from_prob(p).expect("table probabilities are checked on insert")
}

fn parse_prob(s: &str, line: usize) -> Result<f64, TableParseError> {
    let syntax = |message: String| TableParseError::Syntax { line, message };
    let p: f64 = s.trim().parse().map_err(|_| syntax(format!("bad probability `{s}`")))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(syntax(format!("probability {p} outside [0, 1]")));
    }
    Ok(p)
}

fn parse_position(s: &str, line: usize) -> Result<usize, TableParseError> {
    s.trim().parse().map_err(|_| TableParseError::Syntax {
        line,
        message: format!("bad position `{s}`"),
    })
}

/// Splits `target:<k>,p:<decimal>`.
fn parse_target_and_prob(rest: &str, line: usize) -> Result<(usize, f64), TableParseError> {
    let syntax = |message: &str| TableParseError::Syntax { line, message: message.to_string() };
    let rest = rest.strip_prefix("target:").ok_or_else(|| syntax("expected `target:`"))?;
    let (k, p) = rest.split_once(",p:").ok_or_else(|| syntax("expected `,p:`"))?;
    let k = parse_position(k, line)?;
    if k >= 64 {
        return Err(syntax("target position must be below 64"));
    }
    Ok((k, parse_prob(p, line)?))
}

impl std::str::FromStr for TableScorer {
    type Err = TableParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut table = TableScorer::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let syntax = |message: String| TableParseError::Syntax { line, message };
            if let Some(rest) = content.strip_prefix("masked:") {
                let (list, rest) = rest
                    .split_once(",target:")
                    .ok_or_else(|| syntax("expected `,target:`".into()))?;
                let mut bits = 0u64;
                if list.trim() != "none" {
                    for p in list.split(',') {
                        let p = parse_position(p, line)?;
                        if p >= 64 {
                            return Err(syntax(format!("filled position {p} must be below 64")));
                        }
                        bits |= 1 << p;
                    }
                }
                let (k, lp) = parse_target_and_prob(&format!("target:{rest}"), line)?;
                if bits & (1 << k) != 0 {
                    return Err(syntax(format!("target {k} is listed as filled")));
                }
                if table.masked.insert((bits, k), lp).is_some() {
                    return Err(syntax("duplicate masked entry".into()));
                }
            } else if let Some(rest) = content.strip_prefix("causal,") {
                let (k, lp) = parse_target_and_prob(rest, line)?;
                if table.causal.insert(k, lp).is_some() {
                    return Err(syntax("duplicate causal entry".into()));
                }
            } else {
                return Err(syntax(format!("unrecognised record `{content}`")));
            }
        }
        Ok(table)
    }
}

impl Scorer for TableScorer {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        req.validate()?;
        req.targets
            .iter()
            .map(|&k| Ok((k, self.lookup_masked(req.state, k)?)))
            .collect()
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        (0..sentence.len())
            .map(|k| {
                self.causal
                    .get(&k)
                    .map(|&p| to_logprob(p))
                    .ok_or_else(|| ScoreError::MissingEntry(format!("causal target {k}")))
            })
            .collect()
    }
}
