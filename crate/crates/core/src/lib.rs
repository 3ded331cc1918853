//! Maximum-likelihood word generation order for non-causal language models.
//!
//! Given a sentence and a scorer that reports the probability of the true
//! word at masked positions, [`lattice::viterbi_optimal_order`] finds the
//! order in which a masked language model would most likely have generated
//! the sentence. The [`analysis`] module runs that search over a labeled
//! corpus and compares it with left-to-right generation.

pub mod analysis;
pub mod causal;
pub mod corpus;
pub mod lattice;
pub mod scorer;
pub mod stats;
pub mod types;

pub use causal::causal_sequence_logprob;
pub use corpus::{load_corpus, segment_words, CorpusError, CorpusFile};
pub use lattice::{
    brute_force_optimal_order, lattice_counts, order_logprob, viterbi_optimal_order, viterbi_optimal_order_with,
    LatticeError, Transition, ViterbiConfig, ViterbiResult,
};
pub use scorer::{
    with_cache, CachedScorer, CountingScorer, MaskedScoreRequest, NeighborScorer, RemoteScorer, ScoreError, Scorer,
    ScorerConfig, ScorerKind, TableScorer, UniformScorer,
};
pub use stats::{aggregate_by_structure, histogram, ratio_db, rho_vs_causal, spearman_rho, Histogram, StructureAggregate};
pub use types::{
    order_to_ranks, AnalysisRecord, CoreError, LogProb, OrderPermutation, Sentence, SentenceLabels, SentenceType,
    Structure, SubsetState,
};
