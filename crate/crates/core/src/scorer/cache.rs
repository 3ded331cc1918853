use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::{MaskedScoreRequest, PositionScores, ScoreError, Scorer};
use crate::types::{LogProb, Sentence};

/// Sentence identity for cache keys. The text is included so that two
/// different sentences sharing an id never alias.
type SentenceKey = (String, String);

type Slot<T> = Arc<Mutex<Option<T>>>;

/// Memoizing wrapper: each distinct (sentence, filled set) masked request
/// and each distinct sentence causal request reaches the inner scorer at
/// most once. Failed evaluations are not cached.
pub struct CachedScorer<S> {
    inner: S,
    masked: Mutex<HashMap<(SentenceKey, u64), Slot<PositionScores>>>,
    causal: Mutex<HashMap<SentenceKey, Slot<Vec<LogProb>>>>,
    masked_misses: AtomicU64,
    causal_misses: AtomicU64,
}

pub fn with_cache<S: Scorer>(scorer: S) -> CachedScorer<S> {
    CachedScorer::new(scorer)
}

fn sentence_key(s: &Sentence) -> SentenceKey {
    (s.id().to_string(), s.text().to_string())
}

impl<S: Scorer> CachedScorer<S> {
    pub fn new(inner: S) -> Self {
        CachedScorer {
            inner,
            masked: Mutex::new(HashMap::new()),
            causal: Mutex::new(HashMap::new()),
            masked_misses: AtomicU64::new(0),
            causal_misses: AtomicU64::new(0),
        }
    }

    /// Masked requests forwarded to the inner scorer.
    pub fn masked_misses(&self) -> u64 {
        self.masked_misses.load(Ordering::Relaxed)
    }

    pub fn causal_misses(&self) -> u64 {
        self.causal_misses.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    /// Drops every cached entry for `sentence`.
    pub fn evict(&self, sentence: &Sentence) {
        let key = sentence_key(sentence);
        self.masked.lock().unwrap().retain(|(k, _), _| *k != key);
        self.causal.lock().unwrap().remove(&key);
    }

    fn masked_slot(&self, req: &MaskedScoreRequest<'_>) -> Slot<PositionScores> {
        let key = (sentence_key(req.sentence), req.state.bits());
        self.masked.lock().unwrap().entry(key).or_default().clone()
    }
}

/// Picks the requested targets out of a cached entry, or `None` when some
/// target has not been scored yet.
fn project(cached: &PositionScores, targets: &[usize]) -> Option<PositionScores> {
    targets
        .iter()
        .map(|k| cached.get(k).map(|&lp| (*k, lp)))
        .collect()
}

impl<S: Scorer> Scorer for CachedScorer<S> {
    fn score_state(&self, req: &MaskedScoreRequest<'_>) -> Result<PositionScores, ScoreError> {
        req.validate()?;
        let slot = self.masked_slot(req);
        let mut entry = slot.lock().unwrap();
        if let Some(hit) = entry.as_ref().and_then(|c| project(c, &req.targets)) {
            return Ok(hit);
        }
        self.masked_misses.fetch_add(1, Ordering::Relaxed);
        let fresh = self.inner.score_state(req)?;
        let merged = entry.get_or_insert_with(PositionScores::new);
        merged.extend(fresh.iter().map(|(&k, &lp)| (k, lp)));
        Ok(fresh)
    }

    fn score_causal(&self, sentence: &Sentence) -> Result<Vec<LogProb>, ScoreError> {
        let slot = self
            .causal
            .lock()
            .unwrap()
            .entry(sentence_key(sentence))
            .or_default()
            .clone();
        let mut entry = slot.lock().unwrap();
        if let Some(hit) = entry.as_ref() {
            return Ok(hit.clone());
        }
        self.causal_misses.fetch_add(1, Ordering::Relaxed);
        let fresh = self.inner.score_causal(sentence)?;
        *entry = Some(fresh.clone());
        Ok(fresh)
    }

    fn score_states(&self, reqs: &[MaskedScoreRequest<'_>]) -> Vec<Result<PositionScores, ScoreError>> {
        let mut out: Vec<Option<Result<PositionScores, ScoreError>>> = vec![None; reqs.len()];
        let mut pending: Vec<usize> = Vec::new();
        for (i, req) in reqs.iter().enumerate() {
            if let Err(e) = req.validate() {
                out[i] = Some(Err(e));
            } else {
                pending.push(i);
            }
        }

        // Lock slots in a global key order so concurrent batches cannot
        // deadlock on each other.
        let mut slots: Vec<((SentenceKey, u64), usize, Slot<PositionScores>)> = pending
            .iter()
            .map(|&i| {
                let key = (sentence_key(reqs[i].sentence), reqs[i].state.bits());
                (key, i, self.masked_slot(&reqs[i]))
            })
            .collect();
        slots.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut guards = Vec::new();
        let mut last_key: Option<&(SentenceKey, u64)> = None;
        let mut owner: HashMap<usize, usize> = HashMap::new();
        for (key, i, slot) in &slots {
            if last_key != Some(key) {
                guards.push(slot.lock().unwrap());
                last_key = Some(key);
            }
            owner.insert(*i, guards.len() - 1);
        }

        let mut misses: Vec<usize> = Vec::new();
        for &i in &pending {
            let guard = &guards[owner[&i]];
            match guard.as_ref().and_then(|c| project(c, &reqs[i].targets)) {
                Some(hit) => out[i] = Some(Ok(hit)),
                None => misses.push(i),
            }
        }

        // identical requests within one batch are forwarded once
        let mut forwarded: Vec<MaskedScoreRequest<'_>> = Vec::new();
        let mut forwarded_for: Vec<Vec<usize>> = Vec::new();
        for &i in &misses {
            match forwarded.iter().position(|f| f == &reqs[i]) {
                Some(j) => forwarded_for[j].push(i),
                None => {
                    forwarded.push(reqs[i].clone());
                    forwarded_for.push(vec![i]);
                }
            }
        }
        self.masked_misses.fetch_add(forwarded.len() as u64, Ordering::Relaxed);
        let results = self.inner.score_states(&forwarded);
        for (res, idxs) in results.into_iter().zip(forwarded_for) {
            if let Ok(scores) = &res {
                let guard = &mut guards[owner[&idxs[0]]];
                let merged = guard.get_or_insert_with(PositionScores::new);
                merged.extend(scores.iter().map(|(&k, &lp)| (k, lp)));
            }
            for i in idxs {
                out[i] = Some(res.clone());
            }
        }
        drop(guards);

        out.into_iter().map(|r| r.expect("every request answered")).collect()
    }
}
