//! Corpus ingestion: JSONL records, tokenization, vocabulary pruning.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("stopwords.txt");

/// Names of the JSON fields holding each part of a record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FieldMap {
    pub id: String,
    pub author: String,
    pub text: String,
    pub label: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            author: "author".into(),
            text: "text".into(),
            label: "label".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub author: String,
    pub text: String,
    pub label: Option<String>,
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Parse JSONL from any reader. Blank lines are skipped; line numbers in
/// errors are 1-based and count blank lines.
pub fn parse_jsonl<R: Read>(reader: R, fields: &FieldMap) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::MalformedLine {
            line: line_no,
            message: "expected a JSON object".into(),
        })?;
        let required = |name: &str| {
            obj.get(name)
                .and_then(scalar_to_string)
                .ok_or_else(|| Error::MissingField {
                    line: line_no,
                    field: name.to_string(),
                })
        };
        let author = required(&fields.author)?;
        let text = required(&fields.text)?;
        let id = obj
            .get(&fields.id)
            .and_then(scalar_to_string)
            .unwrap_or_else(|| format!("line-{line_no}"));
        let label = obj.get(&fields.label).and_then(scalar_to_string);
        records.push(RawRecord {
            id,
            author,
            text,
            label,
        });
    }
    Ok(records)
}

pub fn load_jsonl(path: impl AsRef<Path>, fields: &FieldMap) -> Result<Vec<RawRecord>> {
    parse_jsonl(File::open(path)?, fields)
}

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

/// Read a stopword file: one word per line, UTF-8. Words are normalized the
/// same way the tokenizer normalizes text.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    Ok(text
        .lines()
        .flat_map(normalize)
        .collect())
}

/// Lowercase, drop apostrophes, turn every other non-alphanumeric character
/// into a separator.
fn normalize(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch == '\'' || ch == '\u{2019}' {
            continue;
        }
        if ch.is_alphanumeric() {
            cleaned.extend(ch.to_lowercase());
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(String::from).collect()
}

pub struct Tokenizer {
    stopwords: HashSet<String>,
    stemmer: Option<Stemmer>,
}

impl Tokenizer {
    pub fn new(stopwords: HashSet<String>, stem: bool) -> Self {
        Self {
            stopwords,
            stemmer: stem.then(|| Stemmer::create(Algorithm::English)),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        normalize(text)
            .into_iter()
            .filter(|w| !self.stopwords.contains(w))
            .map(|w| match &self.stemmer {
                Some(s) => s.stem(&w).into_owned(),
                None => w,
            })
            .filter(|w| !w.is_empty())
            .collect()
    }
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new(default_stopwords(), true)
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularySnapshot", into = "VocabularySnapshot")]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    term_to_id: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularySnapshot {
    terms: Vec<String>,
    counts: Vec<u64>,
}

impl TryFrom<VocabularySnapshot> for Vocabulary {
    type Error = Error;
    fn try_from(s: VocabularySnapshot) -> Result<Self> {
        Vocabulary::new(s.terms, s.counts)
    }
}

impl From<Vocabulary> for VocabularySnapshot {
    fn from(v: Vocabulary) -> Self {
        Self {
            terms: v.terms,
            counts: v.counts,
        }
    }
}

impl Vocabulary {
    pub fn new(terms: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if terms.len() != counts.len() {
            return Err(Error::LengthMismatch {
                left: terms.len(),
                right: counts.len(),
            });
        }
        let mut term_to_id = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if term_to_id.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidCorpus(format!("duplicate term {t:?}")));
            }
        }
        Ok(Self {
            terms,
            counts,
            term_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.term_to_id.get(term).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub author_id: usize,
    pub tokens: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_label: Option<String>,
}

impl Document {
    /// Distinct words with their counts, ordered by word id.
    pub fn bag_of_words(&self) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for &t in &self.tokens {
            *counts.entry(t).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(w, c)| (w as usize, f64::from(c)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub authors: Vec<String>,
    pub vocabulary: Vocabulary,
}

impl Corpus {
    /// Assemble a corpus, checking every structural invariant.
    pub fn new(documents: Vec<Document>, authors: Vec<String>, vocabulary: Vocabulary) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = vec![false; authors.len()];
        for doc in &documents {
            if doc.tokens.is_empty() {
                return Err(Error::InvalidCorpus(format!("document {} is empty", doc.doc_id)));
            }
            if doc.author_id >= authors.len() {
                return Err(Error::InvalidCorpus(format!(
                    "document {} references author {} of {}",
                    doc.doc_id,
                    doc.author_id,
                    authors.len()
                )));
            }
            if let Some(&t) = doc.tokens.iter().find(|&&t| t as usize >= vocabulary.len()) {
                return Err(Error::InvalidCorpus(format!(
                    "document {} has token id {t} outside vocabulary of {}",
                    doc.doc_id,
                    vocabulary.len()
                )));
            }
            seen[doc.author_id] = true;
        }
        if let Some(a) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidCorpus(format!("author {} has no documents", authors[a])));
        }
        Ok(Self {
            documents,
            authors,
            vocabulary,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn num_authors(&self) -> usize {
        self.authors.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.tokens.len()).sum()
    }

    pub fn doc_authors(&self) -> Vec<usize> {
        self.documents.iter().map(|d| d.author_id).collect()
    }

    /// Document indices per author, in document order.
    pub fn docs_by_author(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_authors()];
        for (i, d) in self.documents.iter().enumerate() {
            groups[d.author_id].push(i);
        }
        groups
    }

    pub fn decode(&self, doc: &Document) -> Vec<&str> {
        doc.tokens
            .iter()
            .map(|&t| self.vocabulary.term(t as usize))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Corpus = serde_json::from_str(text)?;
        Corpus::new(c.documents, c.authors, c.vocabulary)
    }
}

pub struct CorpusConfig {
    pub min_count: u64,
    pub tokenizer: Tokenizer,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            min_count: 10,
            tokenizer: Tokenizer::default(),
        }
    }
}

/// Tokenize records, prune terms below `min_count`, drop emptied documents
/// and re-index authors densely in order of first surviving document.
pub fn build_corpus(records: &[RawRecord], config: &CorpusConfig) -> Result<Corpus> {
    if config.min_count < 1 {
        return Err(Error::InvalidInput("min_count must be at least 1".into()));
    }
    let tokenized: Vec<Vec<String>> = records
        .iter()
        .map(|r| config.tokenizer.tokenize(&r.text))
        .collect();

    let mut order: Vec<&str> = Vec::new();
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for tokens in &tokenized {
        for t in tokens {
            let c = freq.entry(t.as_str()).or_insert(0);
            if *c == 0 {
                order.push(t.as_str());
            }
            *c += 1;
        }
    }
    let kept: Vec<&str> = order
        .into_iter()
        .filter(|t| freq[t] >= config.min_count)
        .collect();
    let counts: Vec<u64> = kept.iter().map(|t| freq[t]).collect();
    let vocabulary = Vocabulary::new(kept.iter().map(|t| t.to_string()).collect(), counts)?;

    let mut author_ids: HashMap<&str, usize> = HashMap::new();
    let mut authors = Vec::new();
    let mut documents = Vec::new();
    for (record, tokens) in records.iter().zip(&tokenized) {
        let ids: Vec<u32> = tokens
            .iter()
            .filter_map(|t| vocabulary.id(t).map(|i| i as u32))
            .collect();
        if ids.is_empty() {
            log::warn!("dropping document {} (empty after pruning)", record.id);
            continue;
        }
        let next = authors.len();
        let author_id = *author_ids.entry(record.author.as_str()).or_insert_with(|| {
            authors.push(record.author.clone());
            next
        });
        documents.push(Document {
            doc_id: record.id.clone(),
            author_id,
            tokens: ids,
            source_label: record.label.clone(),
        });
    }
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::new(documents, authors, vocabulary)
}
