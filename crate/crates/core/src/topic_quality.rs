//! Topic diversity and co-occurrence coherence (NPMI, UMass).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::embedder::phrase_key;
use crate::event_store::EventLog;

pub const NPMI_EPSILON: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum TopicError {
    #[error("no topics supplied")]
    NoTopics,
    #[error("topic {topic_id} has {found} keywords, expected {expected}")]
    RaggedTopic { topic_id: u32, expected: usize, found: usize },
    #[error("topic {topic_id} repeats keyword {keyword:?}")]
    DuplicateKeyword { topic_id: u32, keyword: String },
    #[error("coherence needs at least 2 keywords per topic, got {0}")]
    TooFewKeywords(usize),
    #[error("reference corpus has no documents")]
    EmptyCorpus,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: u32,
    /// Ranked, most representative first.
    pub keywords: Vec<String>,
}

/// Topics that all carry the same number of distinct keywords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicKeywordSet {
    k: usize,
    topics: Vec<Topic>,
}

impl TopicKeywordSet {
    pub fn new(topics: Vec<Topic>) -> Result<Self, TopicError> {
        let k = topics.first().ok_or(TopicError::NoTopics)?.keywords.len();
        for t in &topics {
            if t.keywords.len() != k {
                return Err(TopicError::RaggedTopic { topic_id: t.topic_id, expected: k, found: t.keywords.len() });
            }
            let mut seen = BTreeSet::new();
            for w in &t.keywords {
                if !seen.insert(w.as_str()) {
                    return Err(TopicError::DuplicateKeyword { topic_id: t.topic_id, keyword: w.clone() });
                }
            }
        }
        Ok(Self { k, topics })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn vocabulary(&self) -> BTreeSet<String> {
        self.topics.iter().flat_map(|t| t.keywords.iter().cloned()).collect()
    }
}

/// Share of distinct tokens among all topics' keywords.
pub fn topic_diversity(topics: &TopicKeywordSet) -> f64 {
    let unique = topics.vocabulary().len();
    unique as f64 / (topics.topics.len() * topics.k) as f64
}

#[derive(Debug, Clone, Default)]
pub struct CooccurrenceOptions {
    /// Boolean sliding window over each document's tokens; `None` means whole documents.
    pub window: Option<usize>,
    /// Only these words are counted.
    pub vocabulary: Option<BTreeSet<String>>,
}

/// Document frequencies of words and word pairs over a reference corpus.
#[derive(Debug, Clone)]
pub struct CooccurrenceStats {
    documents: u64,
    window: Option<usize>,
    single: HashMap<String, u64>,
    pair: HashMap<(String, String), u64>,
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl CooccurrenceStats {
    pub fn from_documents<D, S>(docs: &[D], options: &CooccurrenceOptions) -> Self
    where
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut stats =
            CooccurrenceStats { documents: 0, window: options.window, single: HashMap::new(), pair: HashMap::new() };
        for doc in docs {
            let tokens: Vec<&str> = doc.as_ref().iter().map(|s| s.as_ref()).collect();
            let size = options.window.unwrap_or(tokens.len()).max(1);
            let starts = if tokens.len() <= size { 1 } else { tokens.len() - size + 1 };
            for start in 0..starts {
                let end = (start + size).min(tokens.len());
                let words: BTreeSet<&str> = tokens[start..end]
                    .iter()
                    .copied()
                    .filter(|w| options.vocabulary.as_ref().is_none_or(|v| v.contains(*w)))
                    .collect();
                stats.add(words);
            }
        }
        stats
    }

    fn add(&mut self, words: BTreeSet<&str>) {
        self.documents += 1;
        let words: Vec<&str> = words.into_iter().collect();
        for (i, a) in words.iter().enumerate() {
            *self.single.entry((*a).to_owned()).or_default() += 1;
            for b in &words[i + 1..] {
                *self.pair.entry(ordered(a, b)).or_default() += 1;
            }
        }
    }

    /// Stats over each event's phrase list taken as one document.
    pub fn from_event_log(log: &EventLog, options: &CooccurrenceOptions) -> Self {
        let docs: Vec<Vec<String>> = log.events().map(|e| e.topics.iter().map(|t| phrase_key(t)).collect()).collect();
        Self::from_documents(&docs, options)
    }

    pub fn documents(&self) -> u64 {
        self.documents
    }

    pub fn window(&self) -> Option<usize> {
        self.window
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.single.get(word).copied().unwrap_or(0)
    }

    pub fn co_frequency(&self, a: &str, b: &str) -> u64 {
        if a == b {
            return self.frequency(a);
        }
        self.pair.get(&ordered(a, b)).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    /// Mean over topics.
    pub score: f64,
    pub per_topic: Vec<f64>,
    /// Pairs or terms involving a word absent from the corpus.
    pub zero_frequency: usize,
}

fn check(topics: &TopicKeywordSet, stats: &CooccurrenceStats) -> Result<(), TopicError> {
    if topics.k < 2 {
        return Err(TopicError::TooFewKeywords(topics.k));
    }
    if stats.documents == 0 {
        return Err(TopicError::EmptyCorpus);
    }
    Ok(())
}

/// Normalized PMI of a single pair, and whether a member never occurs.
///
/// A pair with a zero-frequency member scores −1. A pair present in every
/// document scores 1.
pub fn npmi_pair(stats: &CooccurrenceStats, a: &str, b: &str, epsilon: f64) -> (f64, bool) {
    let d = stats.documents as f64;
    let (fa, fb) = (stats.frequency(a), stats.frequency(b));
    if fa == 0 || fb == 0 {
        return (-1.0, true);
    }
    let pab = stats.co_frequency(a, b) as f64 / d;
    if pab == 1.0 {
        return (1.0, false);
    }
    let (pa, pb) = (fa as f64 / d, fb as f64 / d);
    (((pab + epsilon) / (pa * pb)).ln() / -(pab + epsilon).ln(), false)
}

pub fn npmi_coherence(
    topics: &TopicKeywordSet,
    stats: &CooccurrenceStats,
    epsilon: f64,
) -> Result<Coherence, TopicError> {
    check(topics, stats)?;
    let mut zero_frequency = 0;
    let per_topic: Vec<f64> = topics
        .topics
        .iter()
        .map(|t| {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for (i, a) in t.keywords.iter().enumerate() {
                for b in &t.keywords[i + 1..] {
                    let (v, flagged) = npmi_pair(stats, a, b, epsilon);
                    zero_frequency += flagged as usize;
                    sum += v;
                    pairs += 1;
                }
            }
            sum / pairs as f64
        })
        .collect();
    Ok(Coherence { score: mean(&per_topic), per_topic, zero_frequency })
}

/// Sum over keyword pairs of `ln((D(w_i, w_j) + 1) / D(w_j))`, `w_j` ranked
/// above `w_i`. A zero `D(w_j)` is replaced by 1 and counted.
pub fn umass_coherence(topics: &TopicKeywordSet, stats: &CooccurrenceStats) -> Result<Coherence, TopicError> {
    check(topics, stats)?;
    let mut zero_frequency = 0;
    let per_topic: Vec<f64> = topics
        .topics
        .iter()
        .map(|t| {
            let mut sum = 0.0;
            for (j, wj) in t.keywords.iter().enumerate() {
                let mut dj = stats.frequency(wj);
                if dj == 0 {
                    dj = 1;
                    zero_frequency += t.keywords.len() - j - 1;
                }
                for wi in &t.keywords[j + 1..] {
                    sum += ((stats.co_frequency(wi, wj) + 1) as f64 / dj as f64).ln();
                }
            }
            sum
        })
        .collect();
    Ok(Coherence { score: mean(&per_topic), per_topic, zero_frequency })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Top `k` phrases of every cluster by tag frequency in a clustered log,
/// ties broken by phrase. Clusters with fewer than `k` distinct phrases are
/// left out, as are events without cluster ids.
pub fn topics_from_log(log: &EventLog, k: usize) -> Vec<Topic> {
    let mut counts: BTreeMap<u32, BTreeMap<String, u64>> = BTreeMap::new();
    for event in log.events() {
        let Some(ids) = &event.cluster_ids else { continue };
        for (phrase, &c) in event.topics.iter().zip(ids) {
            *counts.entry(c).or_default().entry(phrase_key(phrase)).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, phrases)| phrases.len() >= k)
        .map(|(topic_id, phrases)| {
            let mut ranked: Vec<(String, u64)> = phrases.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Topic { topic_id, keywords: ranked.into_iter().take(k).map(|(p, _)| p).collect() }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScores {
    pub diversity: f64,
    pub npmi: f64,
    pub umass: f64,
}

pub fn score_topics(topics: &TopicKeywordSet, stats: &CooccurrenceStats) -> Result<TopicScores, TopicError> {
    Ok(TopicScores {
        diversity: topic_diversity(topics),
        npmi: npmi_coherence(topics, stats, NPMI_EPSILON)?.score,
        umass: umass_coherence(topics, stats)?.score,
    })
}

pub fn load_topics<R: BufRead>(input: R) -> Result<TopicKeywordSet, TopicError> {
    let mut topics = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let topic: Topic =
            serde_json::from_str(&line).map_err(|e| TopicError::Malformed { line: i + 1, message: e.to_string() })?;
        topics.push(topic);
    }
    TopicKeywordSet::new(topics)
}

pub fn write_topics<W: Write>(topics: &[Topic], mut out: W) -> std::io::Result<()> {
    for t in topics {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
