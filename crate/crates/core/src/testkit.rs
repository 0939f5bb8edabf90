//! Synthetic corpora for tests and benchmarks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Attribution, DocumentRecord, Split};
use crate::text;

pub const CLASSES: [&str; 3] = ["contradiction", "entailment", "neutral"];

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub n_test: usize,
    pub n_train: usize,
    /// Documents containing the planted token.
    pub planted_docs: usize,
    /// Errors among the planted documents.
    pub planted_errors: usize,
    /// Errors over the whole test split.
    pub total_errors: usize,
    pub planted_token: &'static str,
    /// Planted-token occurrences in the training split.
    pub planted_train_docs: usize,
    pub filler_vocab: usize,
    pub words_per_doc: usize,
    pub embedding_dim: Option<usize>,
    pub seed: u64,
}

impl Default for PlantedSpec {
    /// 2,000 test documents, baseline error 0.25, planted token "island" in
    /// 10% of them with error rate 0.60.
    fn default() -> Self {
        Self {
            n_test: 2000,
            n_train: 300,
            planted_docs: 200,
            planted_errors: 120,
            total_errors: 500,
            planted_token: "island",
            planted_train_docs: 15,
            filler_vocab: 200,
            words_per_doc: 10,
            embedding_dim: None,
            seed: 7,
        }
    }
}

fn filler(i: usize) -> String {
    format!("w{i:03}")
}

fn words(rng: &mut ChaCha8Rng, spec: &PlantedSpec, planted: bool) -> Vec<String> {
    let mut ws: Vec<String> = index::sample(rng, spec.filler_vocab, spec.words_per_doc)
        .into_iter()
        .map(filler)
        .collect();
    if planted {
        let slot = rng.random_range(0..ws.len());
        ws[slot] = spec.planted_token.into();
    }
    ws
}

fn attributions_for(rng: &mut ChaCha8Rng, tokens: &[String]) -> BTreeMap<String, Vec<Attribution>> {
    let mut out = BTreeMap::new();
    for class in CLASSES {
        let entries = (0..5.min(tokens.len()))
            .map(|_| {
                let pos = rng.random_range(0..tokens.len());
                Attribution {
                    token: tokens[pos].clone(),
                    pos,
                    score: rng.random_range(-1.0..1.0),
                }
            })
            .collect();
        out.insert(class.into(), entries);
    }
    out
}

fn other_class(rng: &mut ChaCha8Rng, label: &str) -> String {
    let others: Vec<&str> = CLASSES.iter().copied().filter(|c| *c != label).collect();
    others[rng.random_range(0..others.len())].into()
}

/// Single-text corpus with one planted high-error token. Every document has
/// the same length so no length bucket can compete with the planted rule.
pub fn planted_corpus(spec: &PlantedSpec) -> Vec<DocumentRecord> {
    assert!(spec.planted_errors <= spec.planted_docs);
    assert!(spec.total_errors - spec.planted_errors <= spec.n_test - spec.planted_docs);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..spec.n_test).collect();
    order.shuffle(&mut rng);
    let planted: Vec<bool> = {
        let mut v = alloc::vec![false; spec.n_test];
        for &i in &order[..spec.planted_docs] {
            v[i] = true;
        }
        v
    };
    let mut errors = alloc::vec![false; spec.n_test];
    for &i in &order[..spec.planted_errors] {
        errors[i] = true;
    }
    for &i in &order[spec.planted_docs..spec.planted_docs + spec.total_errors - spec.planted_errors] {
        errors[i] = true;
    }

    let mut records = Vec::with_capacity(spec.n_test + spec.n_train);
    for i in 0..spec.n_test {
        let ws = words(&mut rng, spec, planted[i]);
        let label: String = CLASSES[rng.random_range(0..CLASSES.len())].into();
        let prediction = if errors[i] {
            other_class(&mut rng, &label)
        } else {
            label.clone()
        };
        let embedding = spec.embedding_dim.map(|d| {
            let center = if planted[i] { 3.0 } else { 0.0 };
            (0..d).map(|_| center + rng.random_range(-1.0..1.0)).collect()
        });
        records.push(DocumentRecord {
            id: format!("test-{i:05}"),
            attributions: attributions_for(&mut rng, &ws),
            text_parts: alloc::vec![ws.join(" ")],
            label,
            prediction: Some(prediction),
            split: Split::Test,
            embedding,
            extra_features: BTreeMap::new(),
            projection: None,
        });
    }
    for i in 0..spec.n_train {
        let ws = words(&mut rng, spec, i < spec.planted_train_docs);
        let label: String = CLASSES[rng.random_range(0..CLASSES.len())].into();
        records.push(DocumentRecord {
            id: format!("train-{i:05}"),
            text_parts: alloc::vec![ws.join(" ")],
            label,
            prediction: None,
            split: Split::Train,
            attributions: BTreeMap::new(),
            embedding: None,
            extra_features: BTreeMap::new(),
            projection: None,
        });
    }
    records
}

#[derive(Debug, Clone)]
pub struct RandomSpec {
    pub n_test: usize,
    pub n_train: usize,
    pub vocab: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub error_rate: f64,
    /// Two text parts per document.
    pub pairs: bool,
    /// Ingested numeric feature name, if any.
    pub extra_feature: Option<&'static str>,
    pub seed: u64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self {
            n_test: 200,
            n_train: 50,
            vocab: 30,
            min_words: 3,
            max_words: 12,
            error_rate: 0.3,
            pairs: false,
            extra_feature: None,
            seed: 1,
        }
    }
}

/// Random corpus with Zipf-ish word frequencies and error probability that
/// depends on a couple of words, so rules exist but are not planted exactly.
pub fn random_corpus(spec: &RandomSpec) -> Vec<DocumentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sentence = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.random_range(spec.min_words..=spec.max_words);
        let ws: Vec<String> = (0..len)
            .map(|_| {
                let u: f64 = rng.random_range(0.0..1.0);
                filler(((u * u) * spec.vocab as f64) as usize % spec.vocab)
            })
            .collect();
        let mut s = ws.join(" ");
        if rng.random_bool(0.3) {
            s.push('.');
        }
        s
    };
    let mut records = Vec::new();
    for i in 0..spec.n_test + spec.n_train {
        let test = i < spec.n_test;
        let mut parts = alloc::vec![sentence(&mut rng)];
        if spec.pairs {
            parts.push(sentence(&mut rng));
        }
        let joined = parts.join(" ");
        let toks = text::token_texts(&joined);
        let boost = if toks.iter().any(|t| t == "w003") { 0.3 } else { 0.0 };
        let is_error = rng.random_bool((spec.error_rate + boost).min(1.0));
        let label: String = CLASSES[rng.random_range(0..CLASSES.len())].into();
        let prediction = if is_error {
            other_class(&mut rng, &label)
        } else {
            label.clone()
        };
        let mut extra_features = BTreeMap::new();
        if let Some(name) = spec.extra_feature {
            extra_features.insert(name.into(), rng.random_range(0.0..1.0));
        }
        records.push(DocumentRecord {
            id: format!("{}-{i:05}", if test { "test" } else { "train" }),
            attributions: if test { attributions_for(&mut rng, &toks) } else { BTreeMap::new() },
            text_parts: parts,
            label,
            prediction: if test { Some(prediction) } else { None },
            split: if test { Split::Test } else { Split::Train },
            embedding: None,
            extra_features,
            projection: None,
        });
    }
    records
}
