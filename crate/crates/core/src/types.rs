//! Domain types shared by the scorer, lattice, statistics and corpus modules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest word count a [`SubsetState`] bitset can hold.
pub const MAX_BITSET_WORDS: usize = 63;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("log-probability must be <= 0 and not NaN, got {0}")]
    InvalidLogProb(f64),
    #[error("sentence must have at least 2 words, got {0}")]
    TooShort(usize),
    #[error("sentence has {0} words, more than the {MAX_BITSET_WORDS} a state bitset supports")]
    TooLong(usize),
    #[error("empty word at position {0}")]
    EmptyWord(usize),
    #[error("unknown sentence type `{0}`")]
    UnknownSentenceType(String),
    #[error("unknown structure `{0}`")]
    UnknownStructure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceType {
    Declarative,
    Interrogative,
}

impl SentenceType {
    pub const ALL: [SentenceType; 2] = [SentenceType::Declarative, SentenceType::Interrogative];

    pub fn as_str(self) -> &'static str {
        match self {
            SentenceType::Declarative => "declarative",
            SentenceType::Interrogative => "interrogative",
        }
    }
}

impl fmt::Display for SentenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentenceType {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "declarative" => Ok(SentenceType::Declarative),
            "interrogative" => Ok(SentenceType::Interrogative),
            _ => Err(CoreError::UnknownSentenceType(s.to_string())),
        }
    }
}

/// Constituent order of subject, verb and object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Structure {
    Svo,
    Sov,
    Vso,
    Vos,
    Osv,
    Ovs,
}

impl Structure {
    pub const ALL: [Structure; 6] = [
        Structure::Svo,
        Structure::Sov,
        Structure::Vso,
        Structure::Vos,
        Structure::Osv,
        Structure::Ovs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Svo => "SVO",
            Structure::Sov => "SOV",
            Structure::Vso => "VSO",
            Structure::Vos => "VOS",
            Structure::Osv => "OSV",
            Structure::Ovs => "OVS",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SVO" => Ok(Structure::Svo),
            "SOV" => Ok(Structure::Sov),
            "VSO" => Ok(Structure::Vso),
            "VOS" => Ok(Structure::Vos),
            "OSV" => Ok(Structure::Osv),
            "OVS" => Ok(Structure::Ovs),
            _ => Err(CoreError::UnknownStructure(s.to_string())),
        }
    }
}

/// Corpus labels attached to a sentence. Ad-hoc sentences typed on the
/// command line carry none.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceLabels {
    pub sentence_type: SentenceType,
    pub structure: Structure,
    pub triplet_id: String,
}

/// An ordered sequence of word units. Word order is significant and the
/// words are kept verbatim (no case folding).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    id: String,
    text: String,
    words: Vec<String>,
    labels: Option<SentenceLabels>,
}

impl Sentence {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        words: Vec<String>,
        labels: Option<SentenceLabels>,
    ) -> Result<Self, CoreError> {
        if words.len() < 2 {
            return Err(CoreError::TooShort(words.len()));
        }
        if words.len() > MAX_BITSET_WORDS {
            return Err(CoreError::TooLong(words.len()));
        }
        if let Some(i) = words.iter().position(|w| w.is_empty()) {
            return Err(CoreError::EmptyWord(i));
        }
        Ok(Sentence {
            id: id.into(),
            text: text.into(),
            words,
            labels,
        })
    }

    /// Builds a sentence whose text is the words joined by single spaces.
    pub fn from_words<S: Into<String>>(
        id: impl Into<String>,
        words: impl IntoIterator<Item = S>,
    ) -> Result<Self, CoreError> {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        let text = words.join(" ");
        Sentence::new(id, text, words, None)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn labels(&self) -> Option<&SentenceLabels> {
        self.labels.as_ref()
    }
}

/// Set of filled (unmasked) word positions. The masked index set is the
/// complement within `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetState {
    n: u8,
    filled: u64,
}

impl SubsetState {
    /// All positions masked.
    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_BITSET_WORDS, "state width {n} exceeds {MAX_BITSET_WORDS}");
        SubsetState { n: n as u8, filled: 0 }
    }

    /// All positions filled.
    pub fn full(n: usize) -> Self {
        let mut s = SubsetState::empty(n);
        s.filled = s.mask();
        s
    }

    /// Builds a state from raw bits; bits at or above `n` are rejected.
    pub fn from_bits(n: usize, filled: u64) -> Option<Self> {
        if n > MAX_BITSET_WORDS {
            return None;
        }
        let s = SubsetState { n: n as u8, filled };
        (filled & !s.mask() == 0).then_some(s)
    }

    pub fn from_positions(n: usize, positions: &[usize]) -> Option<Self> {
        let mut s = SubsetState::empty(n);
        for &p in positions {
            if p >= n {
                return None;
            }
            s.filled |= 1 << p;
        }
        Some(s)
    }

    fn mask(&self) -> u64 {
        if self.n == 64 {
            u64::MAX
        } else {
            (1u64 << self.n) - 1
        }
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn bits(&self) -> u64 {
        self.filled
    }

    pub fn is_filled(&self, pos: usize) -> bool {
        pos < self.n() && self.filled & (1 << pos) != 0
    }

    pub fn filled_count(&self) -> usize {
        self.filled.count_ones() as usize
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.mask()
    }

    /// State after filling `pos`.
    pub fn with(&self, pos: usize) -> Self {
        debug_assert!(pos < self.n());
        SubsetState {
            n: self.n,
            filled: self.filled | (1 << pos),
        }
    }

    pub fn filled_positions(&self) -> Vec<usize> {
        (0..self.n()).filter(|&p| self.is_filled(p)).collect()
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.n()).filter(|&p| !self.is_filled(p)).collect()
    }
}

/// A generation order: `order[j]` is the position generated at step `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderPermutation {
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl OrderPermutation {
    pub fn new(order: Vec<usize>) -> Result<Self, CoreError> {
        let rank = order_to_ranks(&order)?;
        Ok(OrderPermutation { order, rank })
    }

    /// Left-to-right order `0..n`.
    pub fn identity(n: usize) -> Self {
        OrderPermutation {
            order: (0..n).collect(),
            rank: (0..n).collect(),
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `ranks()[p]` is the step at which position `p` is generated.
    pub fn ranks(&self) -> &[usize] {
        &self.rank
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

impl Serialize for OrderPermutation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.order.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OrderPermutation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let order = Vec::<usize>::deserialize(deserializer)?;
        OrderPermutation::new(order).map_err(serde::de::Error::custom)
    }
}

/// Inverts a generation order into per-position ranks.
pub fn order_to_ranks(order: &[usize]) -> Result<Vec<usize>, CoreError> {
    let n = order.len();
    let mut rank = vec![usize::MAX; n];
    for (step, &pos) in order.iter().enumerate() {
        if pos >= n {
            return Err(CoreError::InvalidPermutation(format!(
                "position {pos} out of range for length {n}"
            )));
        }
        if rank[pos] != usize::MAX {
            return Err(CoreError::InvalidPermutation(format!("duplicate position {pos}")));
        }
        rank[pos] = step;
    }
    Ok(rank)
}

/// Natural-log probability. Finite values are `<= 0`; negative infinity
/// stands for a zero probability. NaN is unrepresentable.
///
/// Serializes as a JSON number, or `null` for negative infinity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO_PROB: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn new(value: f64) -> Result<Self, CoreError> {
        if value.is_nan() || value > 0.0 {
            return Err(CoreError::InvalidLogProb(value));
        }
        // normalise -0.0 so equal probabilities compare and print identically
        Ok(LogProb(if value == 0.0 { 0.0 } else { value }))
    }

    /// Log of a linear probability in `[0, 1]`.
    pub fn from_prob(p: f64) -> Result<Self, CoreError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(CoreError::InvalidLogProb(p));
        }
        LogProb::new(p.ln())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn log10(self) -> f64 {
        self.0 / std::f64::consts::LN_10
    }

    /// Product of the underlying probabilities.
    pub fn combine(self, other: LogProb) -> LogProb {
        LogProb(self.0 + other.0)
    }
}

impl std::iter::Sum for LogProb {
    fn sum<I: Iterator<Item = LogProb>>(iter: I) -> LogProb {
        iter.fold(LogProb::ONE, LogProb::combine)
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl Serialize for LogProb {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for LogProb {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match Option::<f64>::deserialize(deserializer)? {
            None => Ok(LogProb::ZERO_PROB),
            Some(v) => LogProb::new(v).map_err(serde::de::Error::custom),
        }
    }
}

/// One per-sentence analysis row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub id: String,
    pub triplet_id: Option<String>,
    pub sentence_type: Option<SentenceType>,
    pub structure: Option<Structure>,
    pub text: String,
    pub words: Vec<String>,
    pub n_words: usize,
    pub optimal_order: OrderPermutation,
    pub optimal_ranks: Vec<usize>,
    pub logp_optimal_noncausal: LogProb,
    pub logp_causal: LogProb,
    pub log10p_optimal_noncausal: Option<f64>,
    pub log10p_causal: Option<f64>,
    pub rho: f64,
    /// `None` when either probability is zero.
    pub ratio_db: Option<f64>,
    pub states_visited: u64,
    pub scorer_calls: u64,
}
