//! Rule matching, subpopulation statistics, concepts and the overview.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bitset::DocSet;
use crate::corpus::{DatasetStore, DocumentRecord};
use crate::discovery::{self, evaluate_counts, evaluate_counts_keyed, DiscoveryConfig, RuleSet};
use crate::error::{Error, Result};
use crate::features::{
    build_feature_matrix, build_vocabulary, compute_high_level_features, default_min_df, doc_contains,
    Bucket, FeatureMatrix, HighLevelFeature, TokenizedCorpus, Vocabulary,
};
use crate::rule::{canonicalize, conditions_key, Condition, Rule, RuleMetrics};
use crate::text::{self, Ngram, MAX_NGRAM};

/// A user-named set of token tuples. A document belongs to the concept's
/// subpopulation if it contains any of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: u32,
    pub name: String,
    pub tokens: Vec<Ngram>,
}

impl Concept {
    /// Seed key: identical to a token rule's key for one-token concepts.
    fn key(&self) -> Vec<u8> {
        let conds: Vec<Condition> = self
            .tokens
            .iter()
            .map(|t| Condition::Token { tokens: t.clone() })
            .collect();
        conditions_key(&conds)
    }
}

/// Single-writer registry of concepts, keyed by id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConceptRegistry {
    concepts: BTreeMap<u32, Concept>,
    next_id: u32,
}

fn parse_concept_tokens(tokens: &[String]) -> Result<Vec<Ngram>> {
    let mut set = BTreeSet::new();
    for raw in tokens {
        let g = Ngram::parse(raw);
        if g.is_empty() || g.len() > MAX_NGRAM {
            return Err(Error::InvalidConcept(alloc::format!(
                "{raw:?} must contain 1 to {MAX_NGRAM} tokens"
            )));
        }
        set.insert(g);
    }
    if set.is_empty() {
        return Err(Error::InvalidConcept("token list is empty".into()));
    }
    Ok(set.into_iter().collect())
}

impl ConceptRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&mut self, name: &str, tokens: &[String]) -> Result<&Concept> {
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::InvalidConcept("name is empty".into()));
        }
        if self.concepts.values().any(|c| c.name == name) {
            return Err(Error::DuplicateConcept(name.into()));
        }
        let tokens = parse_concept_tokens(tokens)?;
        let id = self.next_id;
        self.next_id += 1;
        self.concepts.insert(
            id,
            Concept {
                id,
                name: name.into(),
                tokens,
            },
        );
        Ok(&self.concepts[&id])
    }

    pub fn update(&mut self, id: u32, name: &str, tokens: &[String]) -> Result<&Concept> {
        let name = name.trim();
        if !self.concepts.contains_key(&id) {
            return Err(Error::UnknownConcept(id));
        }
        if name.is_empty() {
            return Err(Error::InvalidConcept("name is empty".into()));
        }
        if self.concepts.values().any(|c| c.name == name && c.id != id) {
            return Err(Error::DuplicateConcept(name.into()));
        }
        let tokens = parse_concept_tokens(tokens)?;
        let c = self.concepts.get_mut(&id).ok_or(Error::UnknownConcept(id))?;
        c.name = name.into();
        c.tokens = tokens;
        Ok(c)
    }

    pub fn get(&self, id: u32) -> Result<&Concept> {
        self.concepts.get(&id).ok_or(Error::UnknownConcept(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

/// Metrics of a concept's subpopulation; metric fields are `None` when it is
/// empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSummary {
    pub concept_id: u32,
    pub name: String,
    pub tokens: Vec<Ngram>,
    pub subpop_size: usize,
    pub error_count: usize,
    pub error_rate: Option<f64>,
    pub p_value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub low: usize,
    pub medium: usize,
    pub high: usize,
}

impl BucketCounts {
    fn add(&mut self, b: Bucket) {
        match b {
            Bucket::Low => self.low += 1,
            Bucket::Medium => self.medium += 1,
            Bucket::High => self.high += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.low + self.medium + self.high
    }
}

/// Training-split document counts per label for one rule condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainFrequency {
    pub condition: Condition,
    pub total: usize,
    pub by_label: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopulationStats {
    pub size: usize,
    pub error_count: usize,
    pub error_rate: Option<f64>,
    pub size_by_label: BTreeMap<String, usize>,
    pub errors_by_label: BTreeMap<String, usize>,
    pub errors_by_prediction: BTreeMap<String, usize>,
    pub errors_by_bucket: BTreeMap<String, BucketCounts>,
    pub train_token_frequency: Vec<TrainFrequency>,
    /// Training documents matching the rule.
    pub train_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverviewReport {
    pub n_test: usize,
    pub n_train: usize,
    pub error_count: usize,
    pub accuracy: f64,
    pub baseline_error_rate: f64,
    pub top_tokens: Vec<Rule>,
    pub top_high_level: Vec<Rule>,
}

pub const TOP_TOKENS: usize = 10;
pub const TOP_HIGH_LEVEL: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiOverlap {
    pub a: u32,
    pub b: u32,
    /// `None` when either interval is undefined.
    pub overlap: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptComparison {
    pub concepts: Vec<ConceptSummary>,
    pub overlaps: Vec<CiOverlap>,
}

/// Closed-interval intersection test.
pub fn ci_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0.max(b.0) <= a.1.min(b.1)
}

pub fn compare_concepts(summaries: Vec<ConceptSummary>) -> Result<ConceptComparison> {
    if summaries.len() < 2 {
        return Err(Error::InvalidArgument("comparison needs at least two concepts".into()));
    }
    let ci = |s: &ConceptSummary| s.ci_low.zip(s.ci_high);
    let mut overlaps = Vec::new();
    for (i, a) in summaries.iter().enumerate() {
        for b in &summaries[i + 1..] {
            overlaps.push(CiOverlap {
                a: a.concept_id,
                b: b.concept_id,
                overlap: ci(a).zip(ci(b)).map(|(x, y)| ci_overlap(x, y)),
            });
        }
    }
    Ok(ConceptComparison {
        concepts: summaries,
        overlaps,
    })
}

/// A highlighted token occurrence: char offsets into `texts[part]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Highlight {
    pub part: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentView {
    pub id: String,
    pub texts: Vec<String>,
    pub label: String,
    pub prediction: String,
    pub is_error: bool,
    pub highlights: Vec<Highlight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentPage {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub documents: Vec<DocumentView>,
}

/// Which split a document lives in, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocRef {
    Test(usize),
    Train(usize),
}

/// Everything derived from the store that analysis and discovery read.
#[derive(Debug, Clone)]
pub struct AnalysisContext {
    pub store: DatasetStore,
    pub corpus: TokenizedCorpus,
    pub vocab: Vocabulary,
    pub matrix: FeatureMatrix,
    pub high_level: Vec<HighLevelFeature>,
    pub error_set: DocSet,
}

impl AnalysisContext {
    /// `min_df` defaults to [`default_min_df`].
    pub fn build(store: DatasetStore, min_df: Option<usize>) -> Result<Self> {
        let corpus = TokenizedCorpus::new(&store);
        let min_df = min_df.unwrap_or_else(|| default_min_df(store.n_test()));
        let vocab = build_vocabulary(&store, &corpus, min_df)?;
        let matrix = build_feature_matrix(&corpus, &vocab);
        let high_level = compute_high_level_features(&store, &corpus)?;
        let error_set = DocSet::from_bools(&store.error_labels);
        Ok(Self {
            store,
            corpus,
            vocab,
            matrix,
            high_level,
            error_set,
        })
    }

    pub fn n_test(&self) -> usize {
        self.store.n_test()
    }

    pub fn discover(&self, config: &DiscoveryConfig) -> Result<RuleSet> {
        discovery::discover(&self.store, &self.vocab, &self.matrix, &self.high_level, config)
    }

    pub fn high_level_feature(&self, name: &str) -> Result<&HighLevelFeature> {
        self.high_level
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.into()))
    }

    /// Canonicalizes a draft and checks every reference resolves.
    pub fn validate_conditions(
        &self,
        conditions: Vec<Condition>,
        concepts: &ConceptRegistry,
        max_conditions: usize,
    ) -> Result<Vec<Condition>> {
        let conditions = canonicalize(conditions, max_conditions)?;
        for c in &conditions {
            match c {
                Condition::Concept { id } => {
                    concepts.get(*id)?;
                }
                Condition::HighLevel { feature, .. } => {
                    self.high_level_feature(feature)?;
                }
                Condition::Token { .. } => {}
            }
        }
        Ok(conditions)
    }

    fn ngram_set(&self, g: &Ngram) -> DocSet {
        match self.vocab.id_of(g) {
            Some(id) => self.matrix.column_set(id),
            None => DocSet::from_indices(
                self.n_test(),
                self.corpus
                    .test
                    .iter()
                    .enumerate()
                    .filter(|(_, parts)| doc_contains(parts, g))
                    .map(|(i, _)| i),
            ),
        }
    }

    pub fn condition_set(&self, condition: &Condition, concepts: &ConceptRegistry) -> Result<DocSet> {
        Ok(match condition {
            Condition::Token { tokens } => self.ngram_set(tokens),
            Condition::Concept { id } => self.concept_set(concepts.get(*id)?),
            Condition::HighLevel { feature, bucket } => self.high_level_feature(feature)?.bucket_set(*bucket),
        })
    }

    pub fn concept_set(&self, concept: &Concept) -> DocSet {
        let mut set = DocSet::empty(self.n_test());
        for g in &concept.tokens {
            set.union_with(&self.ngram_set(g));
        }
        set
    }

    /// Test documents satisfying every condition; all test documents when
    /// `conditions` is empty.
    pub fn subpopulation(&self, conditions: &[Condition], concepts: &ConceptRegistry) -> Result<DocSet> {
        let mut set = DocSet::full(self.n_test());
        for c in conditions {
            set.intersect_with(&self.condition_set(c, concepts)?);
        }
        Ok(set)
    }

    fn record(&self, doc: DocRef) -> (&DocumentRecord, &[Vec<String>]) {
        match doc {
            DocRef::Test(i) => (&self.store.test[i], &self.corpus.test[i]),
            DocRef::Train(i) => (&self.store.train[i], &self.corpus.train[i]),
        }
    }

    /// Direct evaluation of one condition on one document by scanning its
    /// tokens. Train documents are bucketed with the test-split thresholds.
    pub fn condition_holds(&self, condition: &Condition, doc: DocRef, concepts: &ConceptRegistry) -> Result<bool> {
        let (record, parts) = self.record(doc);
        Ok(match condition {
            Condition::Token { tokens } => doc_contains(parts, tokens),
            Condition::Concept { id } => concepts.get(*id)?.tokens.iter().any(|g| doc_contains(parts, g)),
            Condition::HighLevel { feature, bucket } => {
                let f = self.high_level_feature(feature)?;
                match doc {
                    DocRef::Test(i) => f.buckets[i] == *bucket,
                    DocRef::Train(_) => f
                        .value_of(record, parts)
                        .is_some_and(|v| f.thresholds.bucket(v) == *bucket),
                }
            }
        })
    }

    pub fn match_rule(&self, conditions: &[Condition], doc: DocRef, concepts: &ConceptRegistry) -> Result<bool> {
        for c in conditions {
            if !self.condition_holds(c, doc, concepts)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn metrics(
        &self,
        conditions: &[Condition],
        set: &DocSet,
        config: &DiscoveryConfig,
    ) -> Option<RuleMetrics> {
        evaluate_counts(
            set.count(),
            set.intersection_count(&self.error_set),
            self.n_test(),
            self.store.baseline_error_rate,
            config,
            conditions,
        )
    }

    /// Validates a draft and evaluates it with the discovery metric
    /// definitions. Returns the canonical conditions, the matching test
    /// documents and the metrics (`None` if nothing matches).
    pub fn evaluate_rule(
        &self,
        conditions: Vec<Condition>,
        concepts: &ConceptRegistry,
        config: &DiscoveryConfig,
    ) -> Result<(Vec<Condition>, DocSet, Option<RuleMetrics>)> {
        let conditions = self.validate_conditions(conditions, concepts, config.max_conditions.max(3))?;
        let set = self.subpopulation(&conditions, concepts)?;
        let metrics = self.metrics(&conditions, &set, config);
        Ok((conditions, set, metrics))
    }

    pub fn subpopulation_stats(
        &self,
        conditions: &[Condition],
        concepts: &ConceptRegistry,
    ) -> Result<SubpopulationStats> {
        let set = self.subpopulation(conditions, concepts)?;
        let mut stats = SubpopulationStats {
            size: 0,
            error_count: 0,
            error_rate: None,
            size_by_label: BTreeMap::new(),
            errors_by_label: BTreeMap::new(),
            errors_by_prediction: BTreeMap::new(),
            errors_by_bucket: BTreeMap::new(),
            train_token_frequency: Vec::new(),
            train_size: 0,
        };
        for d in set.iter() {
            let r = &self.store.test[d];
            stats.size += 1;
            *stats.size_by_label.entry(r.label.clone()).or_default() += 1;
            if self.store.error_labels[d] {
                stats.error_count += 1;
                *stats.errors_by_label.entry(r.label.clone()).or_default() += 1;
                let pred = r.prediction.clone().unwrap_or_default();
                *stats.errors_by_prediction.entry(pred).or_default() += 1;
                for f in &self.high_level {
                    stats.errors_by_bucket.entry(f.name.clone()).or_default().add(f.buckets[d]);
                }
            }
        }
        if stats.size > 0 {
            stats.error_rate = Some(stats.error_count as f64 / stats.size as f64);
        }

        for c in conditions {
            if matches!(c, Condition::HighLevel { .. }) {
                continue;
            }
            let mut freq = TrainFrequency {
                condition: c.clone(),
                total: 0,
                by_label: BTreeMap::new(),
            };
            for (i, r) in self.store.train.iter().enumerate() {
                if self.condition_holds(c, DocRef::Train(i), concepts)? {
                    freq.total += 1;
                    *freq.by_label.entry(r.label.clone()).or_default() += 1;
                }
            }
            stats.train_token_frequency.push(freq);
        }
        for i in 0..self.store.train.len() {
            if self.match_rule(conditions, DocRef::Train(i), concepts)? {
                stats.train_size += 1;
            }
        }
        Ok(stats)
    }

    pub fn evaluate_concept(&self, concept: &Concept, config: &DiscoveryConfig) -> ConceptSummary {
        let set = self.concept_set(concept);
        let errors = set.intersection_count(&self.error_set);
        let metrics = evaluate_counts_keyed(
            set.count(),
            errors,
            self.n_test(),
            self.store.baseline_error_rate,
            config,
            &concept.key(),
        );
        ConceptSummary {
            concept_id: concept.id,
            name: concept.name.clone(),
            tokens: concept.tokens.clone(),
            subpop_size: set.count(),
            error_count: errors,
            error_rate: metrics.as_ref().map(|m| m.error_rate),
            p_value: metrics.as_ref().map(|m| m.p_value),
            ci_low: metrics.as_ref().map(|m| m.ci_low),
            ci_high: metrics.as_ref().map(|m| m.ci_high),
        }
    }

    pub fn compare_concepts(
        &self,
        ids: &[u32],
        concepts: &ConceptRegistry,
        config: &DiscoveryConfig,
    ) -> Result<ConceptComparison> {
        let summaries = ids
            .iter()
            .map(|id| Ok(self.evaluate_concept(concepts.get(*id)?, config)))
            .collect::<Result<Vec<_>>>()?;
        compare_concepts(summaries)
    }

    pub fn overview(&self, ruleset: &RuleSet) -> OverviewReport {
        let singles = || ruleset.rules.iter().filter(|r| r.conditions.len() == 1);
        let pick = |token: bool, n: usize| -> Vec<Rule> {
            let mut rules: Vec<Rule> = singles()
                .filter(|r| matches!(r.conditions[0], Condition::Token { .. }) == token)
                .cloned()
                .collect();
            discovery::sort_rules(&mut rules);
            rules.truncate(n);
            rules
        };
        OverviewReport {
            n_test: self.n_test(),
            n_train: self.store.train.len(),
            error_count: self.store.error_count,
            accuracy: self.store.accuracy(),
            baseline_error_rate: self.store.baseline_error_rate,
            top_tokens: pick(true, TOP_TOKENS),
            top_high_level: pick(false, TOP_HIGH_LEVEL),
        }
    }

    /// Char spans of every token tuple referenced by the rule (directly or
    /// through a concept) in test document `doc`.
    pub fn highlights(&self, conditions: &[Condition], doc: usize, concepts: &ConceptRegistry) -> Result<Vec<Highlight>> {
        let mut grams: BTreeSet<&Ngram> = BTreeSet::new();
        for c in conditions {
            match c {
                Condition::Token { tokens } => {
                    grams.insert(tokens);
                }
                Condition::Concept { id } => grams.extend(concepts.get(*id)?.tokens.iter()),
                Condition::HighLevel { .. } => {}
            }
        }
        let mut out = Vec::new();
        for (part, raw) in self.store.test[doc].text_parts.iter().enumerate() {
            let toks = text::tokenize(raw);
            for g in &grams {
                let n = g.len();
                for (start, w) in toks.windows(n).enumerate() {
                    if w.iter().zip(g.tokens()).all(|(t, s)| &t.text == s) {
                        out.push(Highlight {
                            part,
                            start: toks[start].start,
                            end: toks[start + n - 1].end,
                        });
                    }
                }
            }
        }
        out.sort_by_key(|h| (h.part, h.start, h.end));
        out.dedup();
        Ok(out)
    }

    /// Matching test documents, mispredicted first, by id within each group.
    /// `page` is 1-based; out-of-range pages are empty.
    pub fn document_page(
        &self,
        conditions: &[Condition],
        concepts: &ConceptRegistry,
        page: usize,
        page_size: usize,
    ) -> Result<DocumentPage> {
        let set = self.subpopulation(conditions, concepts)?;
        let mut docs: Vec<usize> = set.iter().collect();
        docs.sort_by(|&a, &b| {
            self.store.error_labels[b]
                .cmp(&self.store.error_labels[a])
                .then_with(|| self.store.test[a].id.cmp(&self.store.test[b].id))
        });
        let total = docs.len();
        let start = page.saturating_sub(1).saturating_mul(page_size);
        let documents = if page == 0 || page_size == 0 || start >= total {
            Vec::new()
        } else {
            docs[start..(start + page_size).min(total)]
                .iter()
                .map(|&d| {
                    let r = &self.store.test[d];
                    Ok(DocumentView {
                        id: r.id.clone(),
                        texts: r.text_parts.clone(),
                        label: r.label.clone(),
                        prediction: r.prediction.clone().unwrap_or_default(),
                        is_error: self.store.error_labels[d],
                        highlights: self.highlights(conditions, d, concepts)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        Ok(DocumentPage {
            total,
            page,
            page_size,
            documents,
        })
    }
}
