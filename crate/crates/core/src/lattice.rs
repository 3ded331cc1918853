//! Exact maximum-likelihood generation order over the masked-subset lattice.
//!
//! A state is the set of already generated (unmasked) positions. Filling
//! position `k` from state `F` costs `ln P(word_k | words in F, rest masked)`,
//! and the likelihood of an order is the sum of its fill costs. The search
//! keeps, for every state, the best achievable log-probability of the words
//! still missing; the optimal order is then read off from the empty state.
//!
//! Exactly one scorer request is issued per state with at least one masked
//! slot (`2^N - 1` requests). States are processed in decreasing popcount
//! layers, so every successor is final before it is read. Among optimal
//! orders the lexicographically smallest one is returned.

use itertools::Itertools;
use thiserror::Error;

use crate::scorer::{MaskedScoreRequest, ScoreError, Scorer};
use crate::types::{CoreError, LogProb, OrderPermutation, Sentence, SubsetState};

pub const DEFAULT_MAX_WORDS: usize = 18;
/// Upper bound for any configured cap; beyond it the per-state tables no
/// longer fit in memory.
pub const HARD_MAX_WORDS: usize = 30;
pub const BRUTE_FORCE_MAX_WORDS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("{n} words exceeds the limit of {max}")]
    SizeLimit { n: usize, max: usize },
    #[error("scoring state with filled positions {filled:?} failed: {source}")]
    Scorer {
        filled: Vec<usize>,
        #[source]
        source: ScoreError,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Filling `position` from state `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: SubsetState,
    pub position: usize,
    pub cost: LogProb,
}

impl Transition {
    pub fn to(&self) -> SubsetState {
        self.from.with(self.position)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    pub order: OrderPermutation,
    /// Sum of `path` costs, accumulated in generation order.
    pub logp: LogProb,
    pub path: Vec<Transition>,
    pub states_visited: u64,
    pub scorer_calls: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViterbiConfig {
    pub max_words: usize,
    /// States per `score_states` call within one popcount layer.
    pub chunk_size: usize,
}

impl Default for ViterbiConfig {
    fn default() -> Self {
        ViterbiConfig { max_words: DEFAULT_MAX_WORDS, chunk_size: 4096 }
    }
}

/// `(|states|, |transitions|)` of the lattice over `n` words: `2^n` and
/// `n * 2^(n-1)`.
pub fn lattice_counts(n: usize, max_words: usize) -> Result<(u64, u64), LatticeError> {
    let max = max_words.min(HARD_MAX_WORDS);
    if n == 0 || n > max {
        return Err(LatticeError::SizeLimit { n, max });
    }
    Ok((1u64 << n, (n as u64) << (n - 1)))
}

/// All `n`-bit masks with exactly `ones` bits set, in increasing order.
fn masks_with_popcount(n: usize, ones: usize) -> impl Iterator<Item = u64> {
    let limit = 1u64 << n;
    let first = if ones == 0 { Some(0) } else { Some((1u64 << ones) - 1) };
    std::iter::successors(first, move |&x| {
        if x == 0 {
            return None;
        }
        let t = x | (x - 1);
        let next = (t + 1) | (((!t & (t + 1)) - 1) >> (x.trailing_zeros() + 1));
        Some(next)
    })
    .take_while(move |&x| x < limit)
}

pub fn viterbi_optimal_order<S: Scorer + ?Sized>(
    sentence: &Sentence,
    scorer: &S,
) -> Result<ViterbiResult, LatticeError> {
    viterbi_optimal_order_with(sentence, scorer, &ViterbiConfig::default())
}

pub fn viterbi_optimal_order_with<S: Scorer + ?Sized>(
    sentence: &Sentence,
    scorer: &S,
    config: &ViterbiConfig,
) -> Result<ViterbiResult, LatticeError> {
    let n = sentence.len();
    let (states, _) = lattice_counts(n, config.max_words)?;
    let full = states - 1;

    // best log-probability of filling every masked slot of a state
    let mut to_go = vec![f64::NEG_INFINITY; states as usize];
    let mut choice = vec![u8::MAX; states as usize];
    let mut step_cost = vec![f64::NEG_INFINITY; states as usize];
    to_go[full as usize] = 0.0;
    let mut scorer_calls = 0u64;

    for ones in (0..n).rev() {
        let layer: Vec<u64> = masks_with_popcount(n, ones).collect();
        for chunk in layer.chunks(config.chunk_size.max(1)) {
            let reqs: Vec<MaskedScoreRequest<'_>> = chunk
                .iter()
                .map(|&bits| {
                    let state = SubsetState::from_bits(n, bits).expect("mask below 2^n");
                    MaskedScoreRequest::all_masked(sentence, state)
                })
                .collect();
            let replies = scorer.score_states(&reqs);
            scorer_calls += reqs.len() as u64;
            for (req, reply) in reqs.iter().zip(replies) {
                let state_err = |source| LatticeError::Scorer {
                    filled: req.state.filled_positions(),
                    source,
                };
                let scores = reply.map_err(state_err)?;
                let bits = req.state.bits() as usize;
                let mut best: Option<(f64, usize, f64)> = None;
                for &k in &req.targets {
                    let cost = scores.get(&k).copied().ok_or_else(|| {
                        state_err(ScoreError::Protocol(format!("reply lacks position {k}")))
                    })?;
                    let total = cost.value() + to_go[bits | (1 << k)];
                    // strict comparison keeps the smallest position on ties
                    if best.is_none_or(|(b, _, _)| total > b) {
                        best = Some((total, k, cost.value()));
                    }
                }
                let (total, k, cost) = best.expect("non-full state has a masked slot");
                to_go[bits] = total;
                choice[bits] = k as u8;
                step_cost[bits] = cost;
            }
        }
    }

    let mut path = Vec::with_capacity(n);
    let mut state = SubsetState::empty(n);
    while !state.is_full() {
        let bits = state.bits() as usize;
        let position = choice[bits] as usize;
        let cost = LogProb::new(step_cost[bits]).expect("scorer costs are valid log-probabilities");
        path.push(Transition { from: state, position, cost });
        state = state.with(position);
    }
    let order = OrderPermutation::new(path.iter().map(|t| t.position).collect())?;
    let logp = path.iter().map(|t| t.cost).sum();
    Ok(ViterbiResult { order, logp, path, states_visited: states, scorer_calls })
}

/// Log-probability of generating `sentence` in `order`, each word scored
/// with the previously generated words visible and the rest masked.
pub fn order_logprob<S: Scorer + ?Sized>(
    sentence: &Sentence,
    order: &OrderPermutation,
    scorer: &S,
) -> Result<LogProb, LatticeError> {
    Ok(order_path(sentence, order, scorer)?.iter().map(|t| t.cost).sum())
}

fn order_path<S: Scorer + ?Sized>(
    sentence: &Sentence,
    order: &OrderPermutation,
    scorer: &S,
) -> Result<Vec<Transition>, LatticeError> {
    let n = sentence.len();
    if order.len() != n {
        return Err(CoreError::InvalidPermutation(format!(
            "order has {} positions for {n} words",
            order.len()
        ))
        .into());
    }
    let mut state = SubsetState::empty(n);
    let mut path = Vec::with_capacity(n);
    for &k in order.order() {
        let req = MaskedScoreRequest { sentence, state, targets: vec![k] };
        let scores = scorer.score_state(&req).map_err(|source| LatticeError::Scorer {
            filled: state.filled_positions(),
            source,
        })?;
        let cost = scores.get(&k).copied().ok_or_else(|| LatticeError::Scorer {
            filled: state.filled_positions(),
            source: ScoreError::Protocol(format!("reply lacks position {k}")),
        })?;
        path.push(Transition { from: state, position: k, cost });
        state = state.with(k);
    }
    Ok(path)
}

/// Exhaustive search over all `N!` orders; the reference the lattice search
/// is checked against. Ties go to the lexicographically smallest order.
pub fn brute_force_optimal_order<S: Scorer + ?Sized>(
    sentence: &Sentence,
    scorer: &S,
) -> Result<ViterbiResult, LatticeError> {
    let n = sentence.len();
    if n > BRUTE_FORCE_MAX_WORDS {
        return Err(LatticeError::SizeLimit { n, max: BRUTE_FORCE_MAX_WORDS });
    }
    let mut best: Option<(LogProb, OrderPermutation, Vec<Transition>)> = None;
    let mut scorer_calls = 0u64;
    // itertools yields permutations of a sorted input in lexicographic order
    for perm in (0..n).permutations(n) {
        let order = OrderPermutation::new(perm)?;
        let path = order_path(sentence, &order, scorer)?;
        scorer_calls += n as u64;
        let logp: LogProb = path.iter().map(|t| t.cost).sum();
        if best.as_ref().is_none_or(|(b, _, _)| logp > *b) {
            best = Some((logp, order, path));
        }
    }
    let (logp, order, path) = best.expect("at least one permutation");
    Ok(ViterbiResult { order, logp, path, states_visited: 1u64 << n, scorer_calls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{with_cache, CountingScorer, NeighborScorer, TableScorer, UniformScorer};

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn counts_match_binomial_sums() {
        for n in 1..=12usize {
            let states: u64 = (0..=n as u64).map(|i| binom(n as u64, i)).sum();
            let transitions: u64 = (0..=n as u64).map(|i| binom(n as u64, i) * i).sum();
            assert_eq!(lattice_counts(n, 18).unwrap(), (states, transitions), "n = {n}");
        }
        assert_eq!(lattice_counts(3, 18).unwrap(), (8, 12));
        assert_eq!(lattice_counts(1, 18).unwrap(), (2, 1));
        assert_eq!(lattice_counts(10, 18).unwrap(), (1024, 5120));
        assert_eq!(lattice_counts(19, 18), Err(LatticeError::SizeLimit { n: 19, max: 18 }));
        assert!(lattice_counts(0, 18).is_err());
    }

    #[test]
    fn popcount_enumeration_is_complete_and_ordered() {
        for n in 0..=8usize {
            let mut seen = Vec::new();
            for ones in 0..=n {
                let layer: Vec<u64> = masks_with_popcount(n, ones).collect();
                assert_eq!(layer.len() as u64, binom(n as u64, ones as u64));
                assert!(layer.windows(2).all(|w| w[0] < w[1]));
                assert!(layer.iter().all(|m| m.count_ones() as usize == ones));
                seen.extend(layer);
            }
            seen.sort_unstable();
            assert_eq!(seen, (0..1u64 << n).collect::<Vec<_>>());
        }
    }

    fn la_casa_azul() -> Sentence {
        Sentence::from_words("toy", ["la", "casa", "azul"]).unwrap()
    }

    #[test]
    fn neighbor_fixture_prefers_identity_among_ties() {
        let s = la_casa_azul();
        let r = viterbi_optimal_order(&s, &NeighborScorer).unwrap();
        assert_eq!(r.order.order(), &[0, 1, 2]);
        assert!((r.logp.prob() - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(r.states_visited, 8);
        assert_eq!(r.scorer_calls, 7);
        assert_eq!(r.path.len(), 3);
        assert_eq!(r.path[2].to(), SubsetState::full(3));
    }

    #[test]
    fn neighbor_order_logprob() {
        let s = la_casa_azul();
        let order = OrderPermutation::new(vec![0, 2, 1]).unwrap();
        let lp = order_logprob(&s, &order, &NeighborScorer).unwrap();
        assert!((lp.prob() - 3.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_gives_identity() {
        let u = UniformScorer::new(0.3).unwrap();
        for n in 2..=8 {
            let s = Sentence::from_words("u", (0..n).map(|i| format!("w{i}"))).unwrap();
            let r = viterbi_optimal_order(&s, &u).unwrap();
            assert_eq!(r.order, OrderPermutation::identity(n));
            assert!((r.logp.value() - n as f64 * 0.3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_agrees_on_fixtures() {
        let s = la_casa_azul();
        let bf = brute_force_optimal_order(&s, &NeighborScorer).unwrap();
        assert_eq!(bf.order.order(), &[0, 1, 2]);
        assert!((bf.logp.prob() - 1.0 / 16.0).abs() < 1e-15);
        let s4 = Sentence::from_words("u", ["a", "b", "c", "d"]).unwrap();
        let bf = brute_force_optimal_order(&s4, &UniformScorer::new(0.5).unwrap()).unwrap();
        assert_eq!(bf.order.order(), &[0, 1, 2, 3]);
        let s9 = Sentence::from_words("big", (0..9).map(|i| i.to_string())).unwrap();
        assert_eq!(
            brute_force_optimal_order(&s9, &NeighborScorer),
            Err(LatticeError::SizeLimit { n: 9, max: 8 })
        );
    }

    #[test]
    fn random_tables_match_brute_force() {
        for n in 2..=6usize {
            for seed in 0..10u64 {
                let s = Sentence::from_words("r", (0..n).map(|i| format!("w{i}"))).unwrap();
                let table = TableScorer::random(n, seed);
                let v = viterbi_optimal_order(&s, &table).unwrap();
                let b = brute_force_optimal_order(&s, &table).unwrap();
                assert_eq!(v.order, b.order, "n = {n}, seed = {seed}");
                assert!((v.logp.value() - b.logp.value()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cache_gives_one_call_per_unfinished_state() {
        for n in 2..=7usize {
            let s = Sentence::from_words("c", (0..n).map(|i| format!("w{i}"))).unwrap();
            let cache = with_cache(CountingScorer::new(TableScorer::random(n, 3)));
            let r = viterbi_optimal_order(&s, &cache).unwrap();
            assert_eq!(cache.inner().masked_calls(), (1 << n) - 1);
            assert_eq!(r.scorer_calls, (1 << n) - 1);
            // rerun is served entirely from the cache
            viterbi_optimal_order(&s, &cache).unwrap();
            assert_eq!(cache.inner().masked_calls(), (1 << n) - 1);
        }
    }

    #[test]
    fn chunking_does_not_change_the_result() {
        let s = Sentence::from_words("c", (0..7).map(|i| format!("w{i}"))).unwrap();
        let table = TableScorer::random(7, 99);
        let base = viterbi_optimal_order(&s, &table).unwrap();
        for chunk_size in [1, 2, 5, 17] {
            let cfg = ViterbiConfig { chunk_size, ..ViterbiConfig::default() };
            assert_eq!(viterbi_optimal_order_with(&s, &table, &cfg).unwrap(), base);
        }
    }

    #[test]
    fn size_cap_is_enforced() {
        let s = Sentence::from_words("big", (0..5).map(|i| i.to_string())).unwrap();
        let cfg = ViterbiConfig { max_words: 4, ..ViterbiConfig::default() };
        assert_eq!(
            viterbi_optimal_order_with(&s, &NeighborScorer, &cfg),
            Err(LatticeError::SizeLimit { n: 5, max: 4 })
        );
    }

    #[test]
    fn scorer_failure_names_the_state() {
        let s = la_casa_azul();
        let mut table = TableScorer::random(3, 1);
        // rebuild without the entry for filled {0, 1}, target 2
        let text: String = table
            .to_table_text()
            .lines()
            .filter(|l| !l.starts_with("masked:0,1,target:2,"))
            .map(|l| format!("{l}\n"))
            .collect();
        table = text.parse().unwrap();
        match viterbi_optimal_order(&s, &table) {
            Err(LatticeError::Scorer { filled, source: ScoreError::MissingEntry(_) }) => {
                assert_eq!(filled, vec![0, 1]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_probability_paths_lose() {
        // filling position 0 first is impossible; everything else uniform
        let mut table = TableScorer::new();
        for bits in 0..4u64 {
            for k in 0..2usize {
                if bits & (1 << k) == 0 {
                    let filled: Vec<usize> = (0..2).filter(|p| bits & (1 << p) != 0).collect();
                    let p = if bits == 0 && k == 0 { 0.0 } else { 0.5 };
                    table.insert_masked(&filled, k, p);
                }
            }
        }
        let s = Sentence::from_words("z", ["a", "b"]).unwrap();
        let r = viterbi_optimal_order(&s, &table).unwrap();
        assert_eq!(r.order.order(), &[1, 0]);
        assert!((r.logp.prob() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn all_paths_impossible_still_returns_a_permutation() {
        let mut table = TableScorer::new();
        table.insert_masked(&[], 0, 0.0);
        table.insert_masked(&[], 1, 0.0);
        table.insert_masked(&[0], 1, 0.0);
        table.insert_masked(&[1], 0, 0.0);
        let s = Sentence::from_words("z", ["a", "b"]).unwrap();
        let r = viterbi_optimal_order(&s, &table).unwrap();
        assert_eq!(r.order.order(), &[0, 1]);
        assert_eq!(r.logp, LogProb::ZERO_PROB);
    }
}
