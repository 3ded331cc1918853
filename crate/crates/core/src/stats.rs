//! Rank correlation, probability-ratio metric, per-structure aggregates and
//! histograms.

use std::collections::BTreeMap;
use std::f64::consts::LN_10;

use serde::Serialize;
use thiserror::Error;

use crate::types::{order_to_ranks, AnalysisRecord, LogProb, OrderPermutation, SentenceType, Structure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("ratio undefined for a zero probability")]
    UndefinedRatio,
    #[error("empty input")]
    EmptyInput,
    #[error("record `{0}` has no structure/type labels")]
    Unlabeled(String),
}

fn check_ranks(v: &[usize], name: &str) -> Result<(), StatsError> {
    order_to_ranks(v)
        .map(|_| ())
        .map_err(|e| StatsError::Contract(format!("{name} is not a rank permutation: {e}")))
}

/// Spearman's rank correlation of two tie-free rank vectors:
/// `1 - 6 * sum(d_i^2) / (N (N^2 - 1))`.
pub fn spearman_rho(a: &[usize], b: &[usize]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Contract(format!(
            "rank vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::Contract(format!("need at least 2 ranks, got {n}")));
    }
    check_ranks(a, "first argument")?;
    check_ranks(b, "second argument")?;
    let sum_d2: u128 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u128;
            d * d
        })
        .sum();
    let n = n as u128;
    Ok(1.0 - (6 * sum_d2) as f64 / (n * (n * n - 1)) as f64)
}

/// Correlation between a generation order and left-to-right generation.
pub fn rho_vs_causal(order: &OrderPermutation) -> Result<f64, StatsError> {
    let identity: Vec<usize> = (0..order.len()).collect();
    spearman_rho(order.ranks(), &identity)
}

/// `10 log10(P_optimal / P_causal)` computed from natural-log inputs.
pub fn ratio_db(logp_optimal: LogProb, logp_causal: LogProb) -> Result<f64, StatsError> {
    if !logp_optimal.is_finite() || !logp_causal.is_finite() {
        return Err(StatsError::UndefinedRatio);
    }
    Ok((logp_optimal.value() - logp_causal.value()) / LN_10 * 10.0)
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Per (sentence type, structure) summary of analysis records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureAggregate {
    pub sentence_type: SentenceType,
    pub structure: Structure,
    pub count: usize,
    /// Arithmetic mean of the linear optimal non-causal probabilities.
    pub mean_prob_optimal: f64,
    /// Arithmetic mean of the linear causal probabilities.
    pub mean_prob_causal: f64,
    /// Mean natural-log probabilities (log of the geometric means).
    pub mean_logp_optimal: f64,
    pub mean_logp_causal: f64,
    pub mean_rho: f64,
    /// `10 log10(mean_prob_optimal / mean_prob_causal)`; `None` if either mean is zero.
    pub ratio_db_of_means: Option<f64>,
    /// Statistics of the per-sentence ratios that are defined.
    pub ratio_db_count: usize,
    pub mean_ratio_db: Option<f64>,
    pub min_ratio_db: Option<f64>,
    pub max_ratio_db: Option<f64>,
}

fn mean_logp(values: impl Iterator<Item = LogProb>, count: usize) -> f64 {
    let mut acc = CompensatedSum::default();
    for lp in values {
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        acc.add(lp.value());
    }
    acc.total() / count as f64
}

pub fn aggregate_by_structure(records: &[AnalysisRecord]) -> Result<Vec<StructureAggregate>, StatsError> {
    if records.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut groups: BTreeMap<(SentenceType, Structure), Vec<&AnalysisRecord>> = BTreeMap::new();
    for r in records {
        let (Some(t), Some(s)) = (r.sentence_type, r.structure) else {
            return Err(StatsError::Unlabeled(r.id.clone()));
        };
        groups.entry((t, s)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((sentence_type, structure), rs)| {
            let count = rs.len();
            let n = count as f64;
            let mean_prob_optimal =
                rs.iter().map(|r| r.logp_optimal_noncausal.prob()).collect::<CompensatedSum>().total() / n;
            let mean_prob_causal =
                rs.iter().map(|r| r.logp_causal.prob()).collect::<CompensatedSum>().total() / n;
            let ratios: Vec<f64> = rs.iter().filter_map(|r| r.ratio_db).collect();
            let ratio_db_of_means = (mean_prob_optimal > 0.0 && mean_prob_causal > 0.0)
                .then(|| 10.0 * (mean_prob_optimal / mean_prob_causal).log10());
            StructureAggregate {
                sentence_type,
                structure,
                count,
                mean_prob_optimal,
                mean_prob_causal,
                mean_logp_optimal: mean_logp(rs.iter().map(|r| r.logp_optimal_noncausal), count),
                mean_logp_causal: mean_logp(rs.iter().map(|r| r.logp_causal), count),
                mean_rho: rs.iter().map(|r| r.rho).collect::<CompensatedSum>().total() / n,
                ratio_db_of_means,
                ratio_db_count: ratios.len(),
                mean_ratio_db: (!ratios.is_empty())
                    .then(|| ratios.iter().copied().collect::<CompensatedSum>().total() / ratios.len() as f64),
                min_ratio_db: ratios.iter().copied().reduce(f64::min),
                max_ratio_db: ratios.iter().copied().reduce(f64::max),
            }
        })
        .collect())
}

/// Equal-width histogram. Bins are half-open `[lo, hi)` except the last,
/// which is closed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        self.edges.windows(2).zip(&self.counts).map(|(w, &c)| (w[0], w[1], c))
    }
}

pub fn histogram(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Histogram, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if bins == 0 {
        return Err(StatsError::Contract("bin count must be at least 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::Contract("histogram values must be finite".into()));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(StatsError::Contract(format!("invalid range [{lo}, {hi}]")));
            }
            if let Some(v) = values.iter().find(|&&v| v < lo || v > hi) {
                return Err(StatsError::Contract(format!("value {v} outside [{lo}, {hi}]")));
            }
            (lo, hi)
        }
        None => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if min == max {
                (min - 0.5, max + 0.5)
            } else {
                (min, max)
            }
        }
    };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);

    let mut counts = vec![0u64; bins];
    for &v in values {
        let mut idx = (((v - lo) / (hi - lo)) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        // settle rounding at the edges against the stored edge values
        while idx > 0 && v < edges[idx] {
            idx -= 1;
        }
        while idx + 1 < bins && v >= edges[idx + 1] {
            idx += 1;
        }
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts, total: values.len() as u64 })
}
