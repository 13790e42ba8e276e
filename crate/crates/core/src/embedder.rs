//! Dense vectors for first-level topic phrases.
//!
//! Vectors come from a precomputed JSONL table (`{"phrase": ..., "vector": [...]}`
//! per line) or, for phrases the table lacks, from [`fallback_embed`]: a signed
//! feature-hashed bag of character trigrams.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::io::{self, BufRead, BufReader, Read, Write};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub const DEFAULT_DIM: usize = 384;
pub const MIN_FALLBACK_DIM: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("failed reading embeddings: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: vector has {found} components, expected {expected}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: vector component {index} is not finite")]
    NonFinite { line: usize, index: usize },
    #[error("line {line}: duplicate phrase '{phrase}'")]
    DuplicateKey { line: usize, phrase: String },
    #[error("embedding table is empty")]
    Empty,
    #[error("fallback embedding needs dim >= {MIN_FALLBACK_DIM}, table has dim {0}")]
    FallbackDimTooSmall(usize),
}

/// Canonical key for a topic phrase: NFC-normalized with outer whitespace trimmed.
pub fn phrase_key(phrase: &str) -> String {
    phrase.trim().nfc().collect()
}

/// Phrase vectors of a single dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

#[derive(Deserialize, Serialize)]
struct EmbeddingRecord {
    phrase: String,
    vector: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a vector, returning false if the phrase is already present.
    pub fn insert(&mut self, phrase: &str, vector: Vec<f64>) -> bool {
        assert_eq!(vector.len(), self.dim, "vector length must equal table dim");
        let key = phrase_key(phrase);
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, vector);
        true
    }

    /// Exact lookup after key canonicalization. No fuzzy matching.
    pub fn lookup(&self, phrase: &str) -> Option<&[f64]> {
        self.entries.get(&phrase_key(phrase)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (phrase, vector) in &self.entries {
            serde_json::to_writer(&mut out, &EmbeddingRecord { phrase: phrase.clone(), vector: vector.clone() })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn load_embeddings<R: Read>(stream: R) -> Result<EmbeddingTable, EmbeddingError> {
    let reader = BufReader::new(stream);
    let mut table: Option<EmbeddingTable> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord = serde_json::from_str(&line)
            .map_err(|e| EmbeddingError::Malformed { line: line_no, message: e.to_string() })?;
        if let Some(index) = record.vector.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { line: line_no, index });
        }
        if record.vector.is_empty() {
            return Err(EmbeddingError::Malformed { line: line_no, message: "empty vector".into() });
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(record.vector.len()));
        if record.vector.len() != table.dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: line_no,
                expected: table.dim,
                found: record.vector.len(),
            });
        }
        if !table.insert(&record.phrase, record.vector) {
            return Err(EmbeddingError::DuplicateKey { line: line_no, phrase: record.phrase });
        }
    }
    table.ok_or(EmbeddingError::Empty)
}

/// Character trigrams of `^phrase$`, on the canonical key.
pub(crate) fn trigrams(phrase: &str) -> Vec<String> {
    let key = phrase_key(phrase);
    if key.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = std::iter::once('^').chain(key.chars()).chain(std::iter::once('$')).collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

fn trigram_hash(seed: u64, trigram: &str) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write_u64(seed);
    hasher.write(trigram.as_bytes());
    hasher.finish()
}

/// Deterministic stand-in for a sentence encoder.
///
/// Each trigram lands in bucket `hash % dim` with sign taken from the top hash
/// bit; the bag is then L2-normalized. The empty phrase maps to the zero vector.
/// If signed collisions cancel every bucket, the unsigned bag is used instead so
/// that non-empty phrases always have unit norm.
///
/// Panics if `dim < 8`.
pub fn fallback_embed(phrase: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= MIN_FALLBACK_DIM, "fallback_embed requires dim >= {MIN_FALLBACK_DIM}");
    let grams = trigrams(phrase);
    let mut signed = vec![0.0; dim];
    let mut unsigned = vec![0.0; dim];
    for gram in &grams {
        let h = trigram_hash(seed, gram);
        let bucket = (h % dim as u64) as usize;
        signed[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        unsigned[bucket] += 1.0;
    }
    let mut vector = if signed.iter().any(|&v| v != 0.0) { signed } else { unsigned };
    let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        vector.iter_mut().for_each(|v| *v /= norm);
    }
    vector
}

/// Resolves phrases through an optional table, falling back to [`fallback_embed`]
/// and counting every miss.
#[derive(Debug)]
pub struct PhraseEmbedder<'a> {
    table: Option<&'a EmbeddingTable>,
    dim: usize,
    seed: u64,
    misses: usize,
}

impl<'a> PhraseEmbedder<'a> {
    pub fn new(table: Option<&'a EmbeddingTable>, default_dim: usize, seed: u64) -> Self {
        let dim = table.map_or(default_dim, EmbeddingTable::dim);
        Self { table, dim, seed, misses: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn embed(&mut self, phrase: &str) -> Result<Vec<f64>, EmbeddingError> {
        if let Some(v) = self.table.and_then(|t| t.lookup(phrase)) {
            return Ok(v.to_vec());
        }
        if self.dim < MIN_FALLBACK_DIM {
            return Err(EmbeddingError::FallbackDimTooSmall(self.dim));
        }
        self.misses += 1;
        Ok(fallback_embed(phrase, self.dim, self.seed))
    }
}
