//! Loading and validation of the labeled SVO-permutation corpus.
//!
//! The corpus is a UTF-8 CSV file with the header
//! `id,triplet_id,sentence_type,structure,text`. Every triplet is expected
//! to appear once in each of the six constituent orders.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::types::{CoreError, Sentence, SentenceLabels, SentenceType, Structure};

const LEADING_PUNCT: &[char] = &['¿', '¡'];
const TRAILING_PUNCT: &[char] = &['.', '?', '!', ',', ';'];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate sentence id `{id}` (line {line})")]
    DuplicateId { id: String, line: u64 },
    #[error("incomplete triplets: {}", describe_incomplete(.0))]
    IncompleteTriplets(Vec<IncompleteTriplet>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncompleteTriplet {
    pub triplet_id: String,
    pub present: Vec<Structure>,
    pub rows: usize,
}

fn describe_incomplete(items: &[IncompleteTriplet]) -> String {
    items
        .iter()
        .map(|t| {
            let present: Vec<&str> = t.present.iter().map(|s| s.as_str()).collect();
            format!("{} ({} rows, structures [{}])", t.triplet_id, t.rows, present.join(" "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Splits a sentence into word units. Standalone opening marks (`¿`, `¡`)
/// attach to the following word and standalone closing marks attach to
/// the preceding word. Case is preserved.
pub fn segment_words(text: &str) -> Result<Vec<String>, CoreError> {
    let mut words: Vec<String> = Vec::new();
    let mut pending_lead = String::new();
    for token in text.split_whitespace() {
        if token.chars().all(|c| LEADING_PUNCT.contains(&c)) {
            pending_lead.push_str(token);
            continue;
        }
        if token.chars().all(|c| TRAILING_PUNCT.contains(&c)) && pending_lead.is_empty() {
            if let Some(last) = words.last_mut() {
                last.push_str(token);
                continue;
            }
        }
        let mut word = std::mem::take(&mut pending_lead);
        word.push_str(token);
        words.push(word);
    }
    if !pending_lead.is_empty() {
        match words.last_mut() {
            Some(last) => last.push_str(&pending_lead),
            None => words.push(pending_lead),
        }
    }
    if words.len() < 2 {
        return Err(CoreError::TooShort(words.len()));
    }
    Ok(words)
}

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    triplet_id: String,
    sentence_type: String,
    structure: String,
    text: String,
}

#[derive(Debug, Clone)]
pub struct CorpusFile {
    pub source: PathBuf,
    pub records: Vec<Sentence>,
}

impl CorpusFile {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts_by_type(&self) -> BTreeMap<SentenceType, usize> {
        let mut out = BTreeMap::new();
        for s in &self.records {
            if let Some(l) = s.labels() {
                *out.entry(l.sentence_type).or_default() += 1;
            }
        }
        out
    }

    pub fn counts_by_type_and_structure(&self) -> BTreeMap<(SentenceType, Structure), usize> {
        let mut out = BTreeMap::new();
        for s in &self.records {
            if let Some(l) = s.labels() {
                *out.entry((l.sentence_type, l.structure)).or_default() += 1;
            }
        }
        out
    }

    pub fn triplet_count(&self) -> usize {
        self.records
            .iter()
            .filter_map(|s| s.labels().map(|l| l.triplet_id.as_str()))
            .collect::<HashSet<_>>()
            .len()
    }

    /// Triplets that do not have exactly one row per structure.
    pub fn incomplete_triplets(&self) -> Vec<IncompleteTriplet> {
        let mut by_triplet: BTreeMap<&str, Vec<Structure>> = BTreeMap::new();
        for s in &self.records {
            if let Some(l) = s.labels() {
                by_triplet.entry(&l.triplet_id).or_default().push(l.structure);
            }
        }
        by_triplet
            .into_iter()
            .filter_map(|(id, structures)| {
                let distinct: BTreeSet<Structure> = structures.iter().copied().collect();
                let complete = structures.len() == Structure::ALL.len() && distinct.len() == Structure::ALL.len();
                (!complete).then(|| IncompleteTriplet {
                    triplet_id: id.to_string(),
                    present: distinct.into_iter().collect(),
                    rows: structures.len(),
                })
            })
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.records.iter().find(|s| s.id() == id)
    }
}

/// Parses a corpus. In strict mode every triplet must be complete.
pub fn load_corpus(path: impl AsRef<Path>, strict: bool) -> Result<CorpusFile, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(file, path, strict)
}

pub fn parse_corpus<R: std::io::Read>(reader: R, source: &Path, strict: bool) -> Result<CorpusFile, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        CorpusError::Parse { line, message: e.to_string() }
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for raw in rdr.records() {
        let raw = raw.map_err(csv_err)?;
        let line = raw.position().map(|p| p.line()).unwrap_or(0);
        let row: Row = raw.deserialize(Some(&headers)).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        let parse_err = |message: String| CorpusError::Parse { line, message };
        if row.id.trim().is_empty() {
            return Err(parse_err("empty id".into()));
        }
        if row.triplet_id.trim().is_empty() {
            return Err(parse_err("empty triplet_id".into()));
        }
        let sentence_type: SentenceType = row.sentence_type.parse().map_err(|e: CoreError| parse_err(e.to_string()))?;
        let structure: Structure = row.structure.parse().map_err(|e: CoreError| parse_err(e.to_string()))?;
        let words = segment_words(&row.text).map_err(|e| parse_err(e.to_string()))?;
        if !ids.insert(row.id.clone()) {
            return Err(CorpusError::DuplicateId { id: row.id, line });
        }
        let labels = SentenceLabels { sentence_type, structure, triplet_id: row.triplet_id };
        let sentence = Sentence::new(row.id, row.text, words, Some(labels)).map_err(|e| parse_err(e.to_string()))?;
        records.push(sentence);
    }
    let corpus = CorpusFile { source: source.to_path_buf(), records };
    if strict {
        let incomplete = corpus.incomplete_triplets();
        if !incomplete.is_empty() {
            return Err(CorpusError::IncompleteTriplets(incomplete));
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn segmentation_policy() {
        assert_eq!(segment_words("La casa azul.").unwrap(), ["La", "casa", "azul."]);
        assert_eq!(segment_words("¿Come el gato?").unwrap(), ["¿Come", "el", "gato?"]);
        assert_eq!(segment_words("la casa azul").unwrap(), ["la", "casa", "azul"]);
        assert_eq!(segment_words("¿ Come el gato ?").unwrap(), ["¿Come", "el", "gato?"]);
        assert_eq!(segment_words("Hola , amigo .").unwrap(), ["Hola,", "amigo."]);
        assert_eq!(segment_words("  dos   palabras ").unwrap(), ["dos", "palabras"]);
        assert!(matches!(segment_words("Hola."), Err(CoreError::TooShort(1))));
        assert!(matches!(segment_words("¿ ?"), Err(CoreError::TooShort(1))));
    }

    const SAMPLE: &str = "id,triplet_id,sentence_type,structure,text
1,t1,declarative,SVO,El gato come pescado.
2,t1,declarative,SOV,El gato pescado come.
3,t1,declarative,VSO,Come el gato pescado.
4,t1,declarative,VOS,Come pescado el gato.
5,t1,declarative,OSV,Pescado el gato come.
6,t1,declarative,OVS,Pescado come el gato.
";

    #[test]
    fn parses_and_validates_a_triplet() {
        let c = parse_corpus(SAMPLE.as_bytes(), Path::new("mem"), true).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c.triplet_count(), 1);
        assert_eq!(c.counts_by_type()[&SentenceType::Declarative], 6);
        assert_eq!(c.records[2].words(), ["Come", "el", "gato", "pescado."]);
        assert_eq!(c.get("5").unwrap().labels().unwrap().structure, Structure::Osv);
    }

    #[test]
    fn strict_mode_rejects_missing_rows() {
        let cut: String = SAMPLE.lines().filter(|l| !l.starts_with("4,")).map(|l| format!("{l}\n")).collect();
        match parse_corpus(cut.as_bytes(), Path::new("mem"), true) {
            Err(CorpusError::IncompleteTriplets(t)) => {
                assert_eq!(t.len(), 1);
                assert_eq!(t[0].triplet_id, "t1");
                assert_eq!(t[0].rows, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse_corpus(cut.as_bytes(), Path::new("mem"), false).unwrap().len(), 5);
    }

    #[test]
    fn strict_mode_rejects_repeated_structures() {
        let dup = SAMPLE.replace("4,t1,declarative,VOS", "4,t1,declarative,VSO");
        assert!(matches!(
            parse_corpus(dup.as_bytes(), Path::new("mem"), true),
            Err(CorpusError::IncompleteTriplets(_))
        ));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = SAMPLE.replace("3,t1,declarative,VSO", "3,t1,exclamative,VSO");
        match parse_corpus(bad.as_bytes(), Path::new("mem"), false) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let dup = SAMPLE.replace("6,t1", "1,t1");
        match parse_corpus(dup.as_bytes(), Path::new("mem"), false) {
            Err(CorpusError::DuplicateId { id, line }) => assert_eq!((id.as_str(), line), ("1", 7)),
            other => panic!("unexpected {other:?}"),
        }
        let short = SAMPLE.replace("El gato come pescado.", "Hola.");
        assert!(matches!(parse_corpus(short.as_bytes(), Path::new("mem"), false), Err(CorpusError::Parse { line: 2, .. })));
        let ragged = "id,triplet_id,sentence_type,structure,text\n1,t1,declarative\n";
        assert!(matches!(parse_corpus(ragged.as_bytes(), Path::new("mem"), false), Err(CorpusError::Parse { .. })));
    }

    #[test]
    fn quoted_text_with_commas() {
        let csv = "id,triplet_id,sentence_type,structure,text\n1,t,interrogative,VSO,\"¿Come, el gato?\"\n";
        let c = parse_corpus(csv.as_bytes(), Path::new("mem"), false).unwrap();
        assert_eq!(c.records[0].words(), ["¿Come,", "el", "gato?"]);
    }

    proptest! {
        #[test]
        fn single_spaced_text_round_trips(words in prop::collection::vec("[A-Za-zñáé¿¡]{0,2}[a-zñáé]{1,6}[.?!,;]?", 2..10)) {
            let text = words.join(" ");
            let seg = segment_words(&text).unwrap();
            prop_assert_eq!(seg.join(" "), text);
        }
    }
}
