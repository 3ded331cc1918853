//! Corpus-scale comparison of optimal non-causal and left-to-right
//! generation, and the report files it produces.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::causal::causal_sequence_logprob;
use crate::corpus::CorpusFile;
use crate::lattice::{viterbi_optimal_order_with, LatticeError, ViterbiConfig};
use crate::scorer::{ScoreError, Scorer};
use crate::stats::{aggregate_by_structure, histogram, ratio_db, rho_vs_causal, Histogram, StatsError, StructureAggregate};
use crate::types::{AnalysisRecord, Sentence, SentenceType, Structure};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const HISTOGRAM_FILE: &str = "rho_histograms.csv";
pub const RATIO_FILE: &str = "ratio_db.csv";
pub const FAILURES_FILE: &str = "failures.csv";

pub fn aggregates_file(t: SentenceType) -> String {
    format!("aggregates_{}.csv", t.as_str())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("optimal order search failed: {0}")]
    Lattice(#[from] LatticeError),
    #[error("causal scoring failed: {0}")]
    Causal(ScoreError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Coarse failure classes, for callers mapping failures to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    SizeLimit,
    Transport,
    Scorer,
    Other,
}

impl AnalysisError {
    pub fn kind(&self) -> FailureKind {
        let score_kind = |e: &ScoreError| {
            if e.is_retriable() {
                FailureKind::Transport
            } else {
                FailureKind::Scorer
            }
        };
        match self {
            AnalysisError::Lattice(LatticeError::SizeLimit { .. }) => FailureKind::SizeLimit,
            AnalysisError::Lattice(LatticeError::Scorer { source, .. }) => score_kind(source),
            AnalysisError::Causal(e) => score_kind(e),
            _ => FailureKind::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceFailure {
    pub id: String,
    pub error: AnalysisError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub workers: usize,
    pub bins: usize,
    /// `None` bins each histogram over its own data range.
    pub hist_range: Option<(f64, f64)>,
    pub viterbi: ViterbiConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            workers: 1,
            bins: 20,
            hist_range: Some((-1.0, 1.0)),
            viterbi: ViterbiConfig::default(),
        }
    }
}

/// Histogram over the sentences of one scope: everything, one sentence
/// type, or one (type, structure) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopedHistogram {
    pub sentence_type: Option<SentenceType>,
    pub structure: Option<Structure>,
    pub histogram: Histogram,
}

impl ScopedHistogram {
    pub fn scope(&self) -> String {
        match (self.sentence_type, self.structure) {
            (None, _) => "all".to_string(),
            (Some(t), None) => t.to_string(),
            (Some(t), Some(s)) => format!("{t}/{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutcome {
    /// Sorted by sentence id.
    pub records: Vec<AnalysisRecord>,
    /// Sorted by sentence id.
    pub failures: Vec<SentenceFailure>,
    pub aggregates: Vec<StructureAggregate>,
    pub histograms: Vec<ScopedHistogram>,
}

pub fn analyze_sentence<M: Scorer + ?Sized, C: Scorer + ?Sized>(
    sentence: &Sentence,
    masked: &M,
    causal: &C,
    viterbi: &ViterbiConfig,
) -> Result<AnalysisRecord, AnalysisError> {
    let best = viterbi_optimal_order_with(sentence, masked, viterbi)?;
    let logp_causal = causal_sequence_logprob(sentence, causal).map_err(AnalysisError::Causal)?;
    let rho = rho_vs_causal(&best.order)?;
    let labels = sentence.labels();
    let finite_log10 = |lp: crate::types::LogProb| lp.is_finite().then(|| lp.log10());
    Ok(AnalysisRecord {
        id: sentence.id().to_string(),
        triplet_id: labels.map(|l| l.triplet_id.clone()),
        sentence_type: labels.map(|l| l.sentence_type),
        structure: labels.map(|l| l.structure),
        text: sentence.text().to_string(),
        words: sentence.words().to_vec(),
        n_words: sentence.len(),
        optimal_ranks: best.order.ranks().to_vec(),
        log10p_optimal_noncausal: finite_log10(best.logp),
        log10p_causal: finite_log10(logp_causal),
        ratio_db: ratio_db(best.logp, logp_causal).ok(),
        logp_optimal_noncausal: best.logp,
        logp_causal,
        rho,
        optimal_order: best.order,
        states_visited: best.states_visited,
        scorer_calls: best.scorer_calls,
    })
}

fn scoped_histograms(records: &[AnalysisRecord], config: &AnalysisConfig) -> Vec<ScopedHistogram> {
    let mut scopes: Vec<(Option<SentenceType>, Option<Structure>)> = vec![(None, None)];
    for t in SentenceType::ALL {
        scopes.push((Some(t), None));
        scopes.extend(Structure::ALL.iter().map(|&s| (Some(t), Some(s))));
    }
    scopes
        .into_iter()
        .filter_map(|(t, s)| {
            let rhos: Vec<f64> = records
                .iter()
                .filter(|r| t.is_none_or(|t| r.sentence_type == Some(t)))
                .filter(|r| s.is_none_or(|s| r.structure == Some(s)))
                .map(|r| r.rho)
                .collect();
            let histogram = histogram(&rhos, config.bins, config.hist_range).ok()?;
            Some(ScopedHistogram { sentence_type: t, structure: s, histogram })
        })
        .collect()
}

/// Analyzes every corpus sentence on a pool of `config.workers` threads.
/// Per-sentence failures are collected and do not stop the run; the outcome
/// does not depend on the worker count.
pub fn run_analysis<M: Scorer + ?Sized, C: Scorer + ?Sized>(
    corpus: &CorpusFile,
    masked: &M,
    causal: &C,
    config: &AnalysisConfig,
) -> Result<AnalysisOutcome, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers.max(1)).build()?;
    let results: Vec<(String, Result<AnalysisRecord, AnalysisError>)> = pool.install(|| {
        corpus
            .records
            .par_iter()
            .map(|s| (s.id().to_string(), analyze_sentence(s, masked, causal, &config.viterbi)))
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (id, result) in results {
        match result {
            Ok(r) => records.push(r),
            Err(error) => failures.push(SentenceFailure { id, error }),
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    failures.sort_by(|a, b| a.id.cmp(&b.id));

    let aggregates = match aggregate_by_structure(&records) {
        Ok(a) => a,
        Err(StatsError::EmptyInput) => Vec::new(),
        Err(e) => {
            // unlabeled records only come from ad-hoc input, never a corpus
            unreachable!("corpus records are labeled: {e}")
        }
    };
    let histograms = scoped_histograms(&records, config);
    Ok(AnalysisOutcome { records, failures, aggregates, histograms })
}

fn fmt_sci(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> std::io::Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn io_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Writes the report files into `dir` (created if missing) and returns the
/// paths written.
pub fn write_reports(outcome: &AnalysisOutcome, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join(RECORDS_FILE);
    let mut out = BufWriter::new(File::create(&path)?);
    for r in &outcome.records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    written.push(path);

    for t in SentenceType::ALL {
        let rows: Vec<&StructureAggregate> = outcome.aggregates.iter().filter(|a| a.sentence_type == t).collect();
        if rows.is_empty() {
            continue;
        }
        let path = dir.join(aggregates_file(t));
        let mut w = csv_writer(&path)?;
        w.write_record([
            "structure",
            "count",
            "mean_prob_optimal_noncausal",
            "mean_prob_causal",
            "geomean_prob_optimal_noncausal",
            "geomean_prob_causal",
            "mean_logp_optimal_noncausal",
            "mean_logp_causal",
            "mean_rho",
        ])
        .map_err(io_err)?;
        for a in rows {
            w.write_record([
                a.structure.to_string(),
                a.count.to_string(),
                fmt_sci(a.mean_prob_optimal),
                fmt_sci(a.mean_prob_causal),
                fmt_sci(a.mean_logp_optimal.exp()),
                fmt_sci(a.mean_logp_causal.exp()),
                a.mean_logp_optimal.to_string(),
                a.mean_logp_causal.to_string(),
                a.mean_rho.to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush()?;
        written.push(path);
    }

    let path = dir.join(RATIO_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record([
        "sentence_type",
        "structure",
        "count",
        "ratio_db_of_means",
        "defined_ratios",
        "mean_ratio_db",
        "min_ratio_db",
        "max_ratio_db",
    ])
    .map_err(io_err)?;
    for a in &outcome.aggregates {
        w.write_record([
            a.sentence_type.to_string(),
            a.structure.to_string(),
            a.count.to_string(),
            fmt_opt(a.ratio_db_of_means),
            a.ratio_db_count.to_string(),
            fmt_opt(a.mean_ratio_db),
            fmt_opt(a.min_ratio_db),
            fmt_opt(a.max_ratio_db),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(HISTOGRAM_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["scope", "sentence_type", "structure", "bin", "lo", "hi", "count"]).map_err(io_err)?;
    for h in &outcome.histograms {
        for (i, (lo, hi, count)) in h.histogram.bins().enumerate() {
            w.write_record([
                h.scope(),
                h.sentence_type.map(|t| t.to_string()).unwrap_or_default(),
                h.structure.map(|s| s.to_string()).unwrap_or_default(),
                i.to_string(),
                lo.to_string(),
                hi.to_string(),
                count.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(FAILURES_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["id", "kind", "error"]).map_err(io_err)?;
    for f in &outcome.failures {
        let kind = serde_json::to_value(f.error.kind())?;
        w.write_record([f.id.as_str(), kind.as_str().unwrap_or("other"), &f.error.to_string()])
            .map_err(io_err)?;
    }
    w.flush()?;
    written.push(path);

    Ok(written)
}
