//! Token n-gram vocabulary, the binary document × feature matrix, and
//! bucketized high-level features.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::bitset::DocSet;
use crate::corpus::{DatasetStore, DocumentRecord};
use crate::error::{Error, Result};
use crate::text::{self, Ngram, MAX_NGRAM};

pub const DOC_LENGTH: &str = "doc_length";
pub const OVERLAP: &str = "overlap";

/// Default lower / upper percentiles for bucketing.
pub const P_LOW: u32 = 10;
pub const P_HIGH: u32 = 90;

/// Normalized tokens of every text part of every document.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub test: Vec<Vec<Vec<String>>>,
    pub train: Vec<Vec<Vec<String>>>,
}

impl TokenizedCorpus {
    pub fn new(store: &DatasetStore) -> Self {
        Self {
            test: store.test.iter().map(DocumentRecord::part_tokens).collect(),
            train: store.train.iter().map(DocumentRecord::part_tokens).collect(),
        }
    }
}

/// True iff `ngram` occurs contiguously inside a single part.
pub fn doc_contains(parts: &[Vec<String>], ngram: &Ngram) -> bool {
    parts.iter().any(|p| ngram.occurs_in(p))
}

fn doc_ngrams(parts: &[Vec<String>]) -> BTreeSet<Ngram> {
    let mut set = BTreeSet::new();
    for p in parts {
        text::ngrams_of(p, MAX_NGRAM, &mut set);
    }
    set
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenFeature {
    pub id: u32,
    pub tokens: Ngram,
    pub doc_frequency_test: usize,
    pub doc_frequency_train_by_label: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    features: Vec<TokenFeature>,
    index: BTreeMap<Ngram, u32>,
}

impl Vocabulary {
    pub fn features(&self) -> &[TokenFeature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn id_of(&self, ngram: &Ngram) -> Option<u32> {
        self.index.get(ngram).copied()
    }

    pub fn get(&self, id: u32) -> Option<&TokenFeature> {
        self.features.get(id as usize)
    }
}

/// `max(2, ⌈0.5% of test docs⌉)`.
pub fn default_min_df(n_test: usize) -> usize {
    n_test.div_ceil(200).max(2)
}

/// Every 1–3-gram with test document frequency `>= min_df`, ids assigned in
/// lexicographic order of the token tuples.
pub fn build_vocabulary(
    store: &DatasetStore,
    corpus: &TokenizedCorpus,
    min_df: usize,
) -> Result<Vocabulary> {
    if min_df == 0 {
        return Err(Error::InvalidArgument("min_df must be at least 1".to_string()));
    }
    let mut df: BTreeMap<Ngram, usize> = BTreeMap::new();
    for parts in &corpus.test {
        for g in doc_ngrams(parts) {
            *df.entry(g).or_default() += 1;
        }
    }
    df.retain(|_, c| *c >= min_df);
    if df.is_empty() {
        return Err(Error::EmptyVocabulary);
    }

    let mut train_df: BTreeMap<&Ngram, BTreeMap<String, usize>> = BTreeMap::new();
    for (parts, record) in corpus.train.iter().zip(&store.train) {
        for g in doc_ngrams(parts) {
            if let Some((key, _)) = df.get_key_value(&g) {
                *train_df
                    .entry(key)
                    .or_default()
                    .entry(record.label.clone())
                    .or_default() += 1;
            }
        }
    }

    let features: Vec<TokenFeature> = df
        .iter()
        .enumerate()
        .map(|(i, (g, &count))| TokenFeature {
            id: i as u32,
            tokens: g.clone(),
            doc_frequency_test: count,
            doc_frequency_train_by_label: train_df.remove(g).unwrap_or_default(),
        })
        .collect();
    let index = features.iter().map(|f| (f.tokens.clone(), f.id)).collect();
    Ok(Vocabulary { features, index })
}

/// Sparse binary incidence of test documents × vocabulary features, held in
/// both row and column orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_docs: usize,
    rows: Vec<Vec<u32>>,
    columns: Vec<Vec<u32>>,
}

impl FeatureMatrix {
    /// Matrix from per-document lists of present feature ids.
    pub fn from_rows(n_features: usize, rows: Vec<Vec<u32>>) -> Self {
        let mut columns = vec![Vec::new(); n_features];
        let rows: Vec<Vec<u32>> = rows
            .into_iter()
            .enumerate()
            .map(|(d, mut row)| {
                row.sort_unstable();
                row.dedup();
                for &f in &row {
                    columns[f as usize].push(d as u32);
                }
                row
            })
            .collect();
        FeatureMatrix {
            n_docs: rows.len(),
            rows,
            columns,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, doc: usize, feature: u32) -> bool {
        self.rows[doc].binary_search(&feature).is_ok()
    }

    /// Sorted feature ids present in `doc`.
    pub fn row(&self, doc: usize) -> &[u32] {
        &self.rows[doc]
    }

    /// Sorted test-document indices containing `feature`.
    pub fn column(&self, feature: u32) -> &[u32] {
        &self.columns[feature as usize]
    }

    pub fn column_set(&self, feature: u32) -> DocSet {
        DocSet::from_indices(self.n_docs, self.column(feature).iter().map(|&d| d as usize))
    }
}

pub fn build_feature_matrix(corpus: &TokenizedCorpus, vocab: &Vocabulary) -> FeatureMatrix {
    let rows = corpus
        .test
        .iter()
        .map(|parts| doc_ngrams(parts).iter().filter_map(|g| vocab.id_of(g)).collect())
        .collect();
    FeatureMatrix::from_rows(vocab.len(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Low,
    Medium,
    High,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Low, Bucket::Medium, Bucket::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Low => "low",
            Bucket::Medium => "medium",
            Bucket::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Some(Bucket::Low),
            "medium" => Some(Bucket::Medium),
            "high" => Some(Bucket::High),
            _ => None,
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Thresholds {
    pub fn bucket(&self, value: f64) -> Bucket {
        if value < self.low {
            Bucket::Low
        } else if value > self.high {
            Bucket::High
        } else {
            Bucket::Medium
        }
    }
}

/// Nearest-rank percentile of ascending `sorted`: the element at rank
/// `⌈p/100 · n⌉` (1-based, at least 1).
pub fn nearest_rank(sorted: &[f64], percent: u32) -> f64 {
    let n = sorted.len();
    let rank = (percent as usize * n).div_ceil(100).clamp(1, n);
    sorted[rank - 1]
}

pub fn bucketize(values: &[f64], p_low: u32, p_high: u32) -> Result<(Thresholds, Vec<Bucket>)> {
    if values.len() < 10 {
        return Err(Error::InsufficientData(values.len()));
    }
    if p_low > p_high || p_high > 100 {
        return Err(Error::InvalidArgument("percentiles must satisfy p_low <= p_high <= 100".to_string()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t = Thresholds {
        low: nearest_rank(&sorted, p_low),
        high: nearest_rank(&sorted, p_high),
    };
    Ok((t, values.iter().map(|&v| t.bucket(v)).collect()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighLevelKind {
    DocLength,
    Overlap,
    Ingested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighLevelFeature {
    pub name: String,
    pub kind: HighLevelKind,
    /// One value per test record.
    pub values: Vec<f64>,
    pub thresholds: Thresholds,
    pub buckets: Vec<Bucket>,
}

impl HighLevelFeature {
    /// Value of this feature for an arbitrary record (used for train docs).
    pub fn value_of(&self, record: &DocumentRecord, parts: &[Vec<String>]) -> Option<f64> {
        match self.kind {
            HighLevelKind::DocLength => Some(doc_length(parts)),
            HighLevelKind::Overlap => overlap(parts),
            HighLevelKind::Ingested => record.extra_features.get(&self.name).copied(),
        }
    }

    pub fn bucket_set(&self, bucket: Bucket) -> DocSet {
        DocSet::from_indices(
            self.buckets.len(),
            self.buckets
                .iter()
                .enumerate()
                .filter(|(_, b)| **b == bucket)
                .map(|(i, _)| i),
        )
    }
}

fn doc_length(parts: &[Vec<String>]) -> f64 {
    parts.iter().map(Vec::len).sum::<usize>() as f64
}

/// `|T1 ∩ T2| / |T2|` over unigram sets; `None` unless there are two parts.
fn overlap(parts: &[Vec<String>]) -> Option<f64> {
    let [first, second] = parts else {
        return None;
    };
    let t1: BTreeSet<&String> = first.iter().collect();
    let t2: BTreeSet<&String> = second.iter().collect();
    if t2.is_empty() {
        return Some(0.0);
    }
    Some(t1.intersection(&t2).count() as f64 / t2.len() as f64)
}

/// `doc_length` always; `overlap` when test records are text pairs; then
/// every ingested numeric feature. All bucketized on the test split.
pub fn compute_high_level_features(
    store: &DatasetStore,
    corpus: &TokenizedCorpus,
) -> Result<Vec<HighLevelFeature>> {
    let mut raw: Vec<(String, HighLevelKind, Vec<f64>)> = Vec::new();
    raw.push((
        DOC_LENGTH.to_string(),
        HighLevelKind::DocLength,
        corpus.test.iter().map(|p| doc_length(p)).collect(),
    ));
    if store.test.iter().all(|r| r.text_parts.len() == 2) {
        raw.push((
            OVERLAP.to_string(),
            HighLevelKind::Overlap,
            corpus.test.iter().map(|p| overlap(p).unwrap_or(0.0)).collect(),
        ));
    }
    let names: BTreeSet<&String> = store
        .test
        .iter()
        .flat_map(|r| r.extra_features.keys())
        .collect();
    for name in names {
        if name == DOC_LENGTH || name == OVERLAP {
            return Err(Error::InvalidArgument(alloc::format!(
                "ingested feature {name:?} collides with a built-in feature"
            )));
        }
        let values: Option<Vec<f64>> = store
            .test
            .iter()
            .map(|r| r.extra_features.get(name).copied())
            .collect();
        let values = values.ok_or_else(|| Error::MissingFeature(name.clone()))?;
        raw.push((name.clone(), HighLevelKind::Ingested, values));
    }

    raw.into_iter()
        .map(|(name, kind, values)| {
            let (thresholds, buckets) = bucketize(&values, P_LOW, P_HIGH)?;
            Ok(HighLevelFeature {
                name,
                kind,
                values,
                thresholds,
                buckets,
            })
        })
        .collect()
}
