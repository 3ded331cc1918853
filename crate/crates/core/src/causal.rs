//! Left-to-right sequence log-probability, the baseline the optimal
//! non-causal order is compared against. No length normalization.

use crate::scorer::{ScoreError, Scorer};
use crate::types::{LogProb, Sentence};

pub fn causal_sequence_logprob<S: Scorer + ?Sized>(
    sentence: &Sentence,
    scorer: &S,
) -> Result<LogProb, ScoreError> {
    let per_word = scorer.score_causal(sentence)?;
    if per_word.len() != sentence.len() {
        return Err(ScoreError::Protocol(format!(
            "causal scorer returned {} values for {} words",
            per_word.len(),
            sentence.len()
        )));
    }
    Ok(per_word.into_iter().sum())
}
