use std::fmt;
use std::time::Duration;

use serde_json::json;

use mlorder_core::analysis::{self, AnalysisConfig, FailureKind};
use mlorder_core::corpus::{load_corpus, segment_words, CorpusError};
use mlorder_core::lattice::{brute_force_optimal_order, viterbi_optimal_order_with, LatticeError, ViterbiConfig};
use mlorder_core::scorer::{ConfigError, ScoreError, Scorer, ScorerConfig, ScorerKind, TableScorer};
use mlorder_core::{causal_sequence_logprob, rho_vs_causal, Sentence, SentenceType, Structure};

use crate::{AnalyzeArgs, OrderArgs, OutputFormat, RemoteOptions, SelfcheckArgs, ValidateArgs};

pub const MASKED_ENDPOINT_ENV: &str = "MLORDER_MASKED_ENDPOINT";
pub const CAUSAL_ENDPOINT_ENV: &str = "MLORDER_CAUSAL_ENDPOINT";

/// Command failure with its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// 1: analysis with failed sentences, self-check mismatch, I/O.
    General(String),
    /// 2: bad flags or scorer specification.
    Usage(String),
    /// 3: corpus parse or validation error.
    Validation(String),
    /// 4: scorer transport or protocol failure.
    Scorer(String),
    /// 5: sentence longer than the configured cap.
    SizeLimit(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::General(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Validation(_) => 3,
            Failure::Scorer(_) => 4,
            Failure::SizeLimit(_) => 5,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            Failure::General(m) | Failure::Usage(m) | Failure::Validation(m) | Failure::Scorer(m) | Failure::SizeLimit(m) => m,
        };
        f.write_str(msg)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => Failure::General(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<LatticeError> for Failure {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::SizeLimit { .. } => Failure::SizeLimit(e.to_string()),
            LatticeError::Scorer { .. } => Failure::Scorer(e.to_string()),
            LatticeError::Core(_) => Failure::General(e.to_string()),
        }
    }
}

impl From<ScoreError> for Failure {
    fn from(e: ScoreError) -> Self {
        Failure::Scorer(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::General(e.to_string())
    }
}

/// Resolves a scorer flag, falling back to a remote endpoint from `env_var`.
fn scorer_config(flag: Option<&str>, env_var: &str, remote: &RemoteOptions) -> Result<ScorerConfig, Failure> {
    let kind = match flag {
        Some(spec) => spec.parse::<ScorerKind>()?,
        None => match std::env::var(env_var) {
            Ok(endpoint) if !endpoint.is_empty() => ScorerKind::Remote(endpoint),
            _ => {
                return Err(Failure::Usage(format!(
                    "no scorer given: pass a scorer flag or set {env_var}"
                )))
            }
        },
    };
    let mut config = ScorerConfig::new(kind);
    config.batch_size = remote.batch_size as usize;
    config.max_concurrent_requests = remote.max_concurrent as usize;
    config.timeout = Duration::from_secs(remote.timeout_secs);
    config.validate()?;
    Ok(config)
}

fn build_scorer(config: &ScorerConfig) -> Result<Box<dyn Scorer>, Failure> {
    config.build().map_err(|e| match e {
        ConfigError::Table(t) => Failure::Validation(t.to_string()),
        other => Failure::Usage(other.to_string()),
    })
}

pub fn order(args: OrderArgs) -> Result<(), Failure> {
    let sentence = match (&args.text, &args.id, &args.corpus) {
        (Some(text), _, _) => {
            let words = segment_words(text).map_err(|e| Failure::Usage(e.to_string()))?;
            Sentence::new("cli", text.clone(), words, None).map_err(|e| Failure::Usage(e.to_string()))?
        }
        (None, Some(id), Some(path)) => {
            let corpus = load_corpus(path, false)?;
            corpus
                .get(id)
                .cloned()
                .ok_or_else(|| Failure::Usage(format!("no sentence `{id}` in {}", path.display())))?
        }
        _ => return Err(Failure::Usage("pass --text, or --id with --corpus".into())),
    };

    let masked = build_scorer(&scorer_config(args.scorer.as_deref(), MASKED_ENDPOINT_ENV, &args.remote)?)?;
    let causal = match &args.causal_scorer {
        Some(spec) => Some(build_scorer(&scorer_config(Some(spec), CAUSAL_ENDPOINT_ENV, &args.remote)?)?),
        None => None,
    };

    let config = ViterbiConfig { max_words: args.max_words, ..ViterbiConfig::default() };
    let best = viterbi_optimal_order_with(&sentence, &masked, &config)?;
    let rho = rho_vs_causal(&best.order).map_err(|e| Failure::General(e.to_string()))?;
    let logp_causal = match &causal {
        Some(c) => Some(causal_sequence_logprob(&sentence, c)?),
        None => None,
    };
    let ordered_words: Vec<&str> = best.order.order().iter().map(|&p| sentence.words()[p].as_str()).collect();

    match args.format {
        OutputFormat::Json => {
            let out = json!({
                "id": sentence.id(),
                "text": sentence.text(),
                "words": sentence.words(),
                "order": best.order,
                "order_words": ordered_words,
                "ranks": best.order.ranks(),
                "logp": best.logp,
                "log10p": best.logp.is_finite().then(|| best.logp.log10()),
                "prob": best.logp.prob(),
                "rho_vs_causal": rho,
                "logp_causal": logp_causal,
                "states_visited": best.states_visited,
                "scorer_calls": best.scorer_calls,
            });
            println!("{out}");
        }
        OutputFormat::Text => {
            println!("sentence: {}", sentence.text());
            println!("generation order:");
            for (step, (&pos, word)) in best.order.order().iter().zip(&ordered_words).enumerate() {
                println!("  {}. {word} (position {pos})", step + 1);
            }
            println!("order: {:?}", best.order.order());
            println!("logp: {}", best.logp);
            println!("prob: {:e}", best.logp.prob());
            println!("rho vs causal: {rho}");
            if let Some(lp) = logp_causal {
                println!("causal logp: {lp}");
                println!("causal prob: {:e}", lp.prob());
            }
            println!("states visited: {}", best.states_visited);
            println!("scorer calls: {}", best.scorer_calls);
        }
    }
    Ok(())
}

fn parse_hist_range(s: &str) -> Result<Option<(f64, f64)>, Failure> {
    if s == "auto" {
        return Ok(None);
    }
    let bad = || Failure::Usage(format!("bad --hist-range `{s}` (expected lo,hi or auto)"));
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(bad());
    }
    Ok(Some((lo, hi)))
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let hist_range = parse_hist_range(&args.hist_range)?;
    let masked_cfg = scorer_config(args.scorer.as_deref(), MASKED_ENDPOINT_ENV, &args.remote)?;
    let causal_cfg = scorer_config(args.causal_scorer.as_deref(), CAUSAL_ENDPOINT_ENV, &args.remote)?;
    let corpus = load_corpus(&args.corpus, !args.lenient)?;
    let masked = build_scorer(&masked_cfg)?;
    let causal = build_scorer(&causal_cfg)?;

    let config = AnalysisConfig {
        workers: args.workers,
        bins: args.bins,
        hist_range,
        viterbi: ViterbiConfig { max_words: args.max_words, ..ViterbiConfig::default() },
    };
    let outcome = analysis::run_analysis(&corpus, &masked, &causal, &config)
        .map_err(|e| Failure::General(format!("cannot start worker pool: {e}")))?;
    let written = analysis::write_reports(&outcome, &args.out)?;

    println!(
        "analyzed {} of {} sentences ({} failed)",
        outcome.records.len(),
        corpus.len(),
        outcome.failures.len()
    );
    for a in &outcome.aggregates {
        println!(
            "  {:<13} {}  n={:<4} optimal={:.4e}  causal={:.4e}  mean rho={:+.4}",
            a.sentence_type, a.structure, a.count, a.mean_prob_optimal, a.mean_prob_causal, a.mean_rho
        );
    }
    for path in &written {
        println!("wrote {}", path.display());
    }

    if outcome.failures.is_empty() {
        return Ok(());
    }
    let ids: Vec<&str> = outcome.failures.iter().map(|f| f.id.as_str()).collect();
    for f in &outcome.failures {
        eprintln!("failed {}: {}", f.id, f.error);
    }
    let msg = format!("{} sentence(s) failed: {}", ids.len(), ids.join(", "));
    let kinds: Vec<FailureKind> = outcome.failures.iter().map(|f| f.error.kind()).collect();
    Err(if kinds.iter().all(|k| *k == FailureKind::SizeLimit) {
        Failure::SizeLimit(msg)
    } else if kinds.iter().all(|k| matches!(k, FailureKind::Transport | FailureKind::Scorer)) {
        Failure::Scorer(msg)
    } else {
        Failure::General(msg)
    })
}

pub fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let corpus = load_corpus(&args.corpus, false)?;
    println!("{}: {} records", args.corpus.display(), corpus.len());
    let by_type = corpus.counts_by_type();
    let cells = corpus.counts_by_type_and_structure();
    for t in SentenceType::ALL {
        let Some(n) = by_type.get(&t) else { continue };
        let per: Vec<String> = Structure::ALL
            .iter()
            .map(|s| format!("{s}={}", cells.get(&(t, *s)).unwrap_or(&0)))
            .collect();
        println!("  {t}: {n} ({})", per.join(" "));
    }
    let incomplete = corpus.incomplete_triplets();
    let triplets = corpus.triplet_count();
    if incomplete.is_empty() {
        println!("{} records, {triplets} triplets complete", corpus.len());
        return Ok(());
    }
    for t in &incomplete {
        let present: Vec<&str> = t.present.iter().map(|s| s.as_str()).collect();
        println!("  incomplete triplet {}: {} rows, structures [{}]", t.triplet_id, t.rows, present.join(" "));
    }
    Err(Failure::Validation(format!(
        "{} of {triplets} triplets incomplete: {}",
        incomplete.len(),
        incomplete.iter().map(|t| t.triplet_id.as_str()).collect::<Vec<_>>().join(", ")
    )))
}

/// Seed for trial `trial` at length `n`.
pub fn selfcheck_seed(base: u64, n: usize, trial: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((n as u64) << 40) ^ trial
}

pub fn selfcheck(args: SelfcheckArgs) -> Result<(), Failure> {
    for n in 2..=args.max_n {
        let sentence = Sentence::from_words("selfcheck", (0..n).map(|i| format!("w{i}")))
            .map_err(|e| Failure::General(e.to_string()))?;
        let mut agree = 0u64;
        for trial in 0..args.trials {
            let seed = selfcheck_seed(args.seed, n, trial);
            let table = TableScorer::random(n, seed);
            let dp = viterbi_optimal_order_with(&sentence, &table, &ViterbiConfig::default())?;
            let bf = brute_force_optimal_order(&sentence, &table)?;
            let diff = (dp.logp.value() - bf.logp.value()).abs();
            if dp.order != bf.order || diff > 1e-9 {
                println!("n={n}: mismatch at trial {trial}");
                return Err(Failure::General(format!(
                    "mismatch for n={n}, seed={seed}: lattice {:?} ({}) vs exhaustive {:?} ({})",
                    dp.order.order(),
                    dp.logp,
                    bf.order.order(),
                    bf.logp
                )));
            }
            agree += 1;
        }
        println!("n={n}: {agree}/{} agree", args.trials);
    }
    println!("selfcheck passed");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hist_range_parsing() {
        assert_eq!(parse_hist_range("auto").unwrap(), None);
        assert_eq!(parse_hist_range("-1,1").unwrap(), Some((-1.0, 1.0)));
        assert!(parse_hist_range("1,-1").is_err());
        assert!(parse_hist_range("x").is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            Failure::General(String::new()).code(),
            Failure::Usage(String::new()).code(),
            Failure::Validation(String::new()).code(),
            Failure::Scorer(String::new()).code(),
            Failure::SizeLimit(String::new()).code(),
        ];
        let mut sorted = codes.to_vec();
        sorted.dedup();
        assert_eq!(sorted.len(), codes.len());
        assert!(codes.iter().all(|&c| c != 0));
    }

    #[test]
    fn selfcheck_seeds_differ_across_lengths_and_trials() {
        assert_ne!(selfcheck_seed(0, 3, 0), selfcheck_seed(0, 4, 0));
        assert_ne!(selfcheck_seed(0, 3, 0), selfcheck_seed(0, 3, 1));
        assert_ne!(selfcheck_seed(1, 3, 0), selfcheck_seed(0, 3, 0));
    }
}
