//! Shared server state: the immutable analysis context plus the mutable
//! concept registry and discovery job.

use std::sync::{Arc, RwLock};
use std::thread;

use serde::{Deserialize, Serialize};
use slicelens_core::analysis::{
    AnalysisContext, ConceptComparison, ConceptRegistry, ConceptSummary, DocumentPage, OverviewReport, SubpopulationStats,
};
use slicelens_core::attribution::{aggregate_counts, chart_order, AggregatedAttribution};
use slicelens_core::features::{HighLevelKind, Thresholds};
use slicelens_core::projection::{filter_projection, ProjectedPoint, Projection2D, ProjectionMethod};
use slicelens_core::{Condition, DiscoveryConfig, Rule, RuleMetrics, RuleSet};

use crate::cache::{DataDir, Manifest};
use crate::report;

/// Number of error-rate histogram bins over [0, 1].
pub const HISTOGRAM_BINS: usize = 20;
pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    NotReady(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl From<slicelens_core::Error> for ApiError {
    fn from(e: slicelens_core::Error) -> Self {
        use slicelens_core::Error as E;
        match e {
            E::UnknownConcept(_) => ApiError::NotFound(e.to_string()),
            E::DuplicateConcept(_) => ApiError::Conflict(e.to_string()),
            _ => ApiError::Validation(e.to_string()),
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum DiscoveryStatus {
    Idle,
    Running { config: DiscoveryConfig },
    Ready { config: DiscoveryConfig, rule_count: usize },
    Failed { config: DiscoveryConfig, message: String },
}

#[derive(Debug, Clone)]
enum DiscoveryState {
    Idle,
    Running(DiscoveryConfig),
    Ready(Arc<RuleSet>),
    Failed(DiscoveryConfig, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub name: String,
    pub kind: HighLevelKind,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub corpus_sha256: String,
    pub n_test: usize,
    pub n_train: usize,
    pub classes: Vec<String>,
    pub error_count: usize,
    pub accuracy: f64,
    pub baseline_error_rate: f64,
    pub vocabulary_size: usize,
    pub high_level_features: Vec<FeatureInfo>,
    pub projection: Option<ProjectionMethod>,
    pub discovery: DiscoveryStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleSort {
    #[default]
    ErrorRate,
    Support,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleFilter {
    pub min_error_rate: Option<f64>,
    pub max_conditions: Option<usize>,
    pub sort: Option<RuleSort>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleView {
    /// Position in the discovered rule set; stable until discovery reruns.
    pub id: usize,
    pub text: String,
    pub conditions: Vec<Condition>,
    pub metrics: RuleMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin `i` covers `[edges[i], edges[i + 1])`; the last bin includes 1.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulePage {
    pub total_rules: usize,
    pub matching: usize,
    pub page: usize,
    pub page_size: usize,
    pub rules: Vec<RuleView>,
    /// Over all discovered rules, regardless of filters.
    pub histogram: Histogram,
    pub baseline_error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub token: String,
    pub cnt_pos: usize,
    pub cnt_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionChart {
    pub class: String,
    pub subpop_size: usize,
    /// `cnt_pos` or `cnt_neg`: the count the columns are sorted by.
    pub sorted_by: String,
    /// Chart column order.
    pub tokens: Vec<TokenCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDraft {
    pub conditions: Vec<Condition>,
    /// Attribution classes to include; all classes when absent.
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    #[serde(default)]
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBundle {
    pub conditions: Vec<Condition>,
    pub text: String,
    /// `None` when no test document matches.
    pub metrics: Option<RuleMetrics>,
    pub stats: SubpopulationStats,
    pub attributions: Vec<AttributionChart>,
    /// `None` when the corpus has no projection.
    pub projection: Option<Vec<ProjectedPoint>>,
    pub documents: DocumentPage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpopulationReport {
    pub conditions: Vec<Condition>,
    pub metrics: Option<RuleMetrics>,
    pub stats: SubpopulationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallStats {
    pub stats: SubpopulationStats,
    /// `None` until discovery has finished.
    pub overview: Option<OverviewReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionView {
    pub method: ProjectionMethod,
    pub initial_kl: Option<f64>,
    pub final_kl: Option<f64>,
    pub perplexity: Option<f64>,
    pub warnings: Vec<String>,
    pub points: Vec<ProjectedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptDraft {
    pub name: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub ids: Vec<u32>,
}

fn rule_text(conditions: &[Condition]) -> String {
    conditions.iter().map(report::condition_text).collect::<Vec<_>>().join(" AND ")
}

pub fn histogram(rules: &[Rule]) -> Histogram {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for r in rules {
        let bin = ((r.metrics.error_rate * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    Histogram {
        edges: (0..=HISTOGRAM_BINS).map(|i| i as f64 / HISTOGRAM_BINS as f64).collect(),
        counts,
    }
}

pub fn attribution_chart(agg: &AggregatedAttribution) -> AttributionChart {
    let pos: usize = agg.counts.values().map(|c| c.cnt_pos).sum();
    let neg: usize = agg.counts.values().map(|c| c.cnt_neg).sum();
    AttributionChart {
        class: agg.class.clone(),
        subpop_size: agg.subpop_size,
        sorted_by: if pos >= neg { "cnt_pos" } else { "cnt_neg" }.into(),
        tokens: chart_order(agg)
            .into_iter()
            .map(|t| {
                let c = agg.get(&t);
                TokenCounts {
                    token: t,
                    cnt_pos: c.cnt_pos,
                    cnt_neg: c.cnt_neg,
                }
            })
            .collect(),
    }
}

pub struct Engine {
    pub ctx: AnalysisContext,
    pub projection: Option<Projection2D>,
    pub corpus_sha256: String,
    concepts: RwLock<ConceptRegistry>,
    discovery: RwLock<DiscoveryState>,
    /// Where finished discovery results are written, if anywhere.
    cache: Option<(DataDir, Manifest)>,
}

impl Engine {
    pub fn new(ctx: AnalysisContext, projection: Option<Projection2D>, corpus_sha256: String) -> Self {
        Self {
            ctx,
            projection,
            corpus_sha256,
            concepts: RwLock::new(ConceptRegistry::new()),
            discovery: RwLock::new(DiscoveryState::Idle),
            cache: None,
        }
    }

    /// Loads a data directory, including cached projection and rules.
    pub fn open(dir: DataDir) -> crate::Result<Self> {
        let (manifest, store) = dir.load_store()?;
        let ctx = AnalysisContext::build(store, manifest.min_df)?;
        let projection = dir.read_projection(&manifest)?;
        let rules = dir.read_rules(&manifest)?;
        let mut engine = Self::new(ctx, projection, manifest.corpus_sha256.clone());
        if let Some(r) = rules {
            engine.set_rules(r);
        }
        engine.cache = Some((dir, manifest));
        Ok(engine)
    }

    pub fn set_rules(&self, rules: RuleSet) {
        *self.discovery.write().unwrap() = DiscoveryState::Ready(Arc::new(rules));
    }

    pub fn ruleset(&self) -> Option<Arc<RuleSet>> {
        match &*self.discovery.read().unwrap() {
            DiscoveryState::Ready(r) => Some(r.clone()),
            _ => None,
        }
    }

    fn require_rules(&self) -> ApiResult<Arc<RuleSet>> {
        self.ruleset()
            .ok_or_else(|| ApiError::NotReady("rule discovery has not finished".into()))
    }

    /// Metric settings for drafts and concepts: those of the current or
    /// running discovery, else the defaults.
    pub fn config(&self) -> DiscoveryConfig {
        match &*self.discovery.read().unwrap() {
            DiscoveryState::Ready(r) => r.config.clone(),
            DiscoveryState::Running(c) | DiscoveryState::Failed(c, _) => c.clone(),
            DiscoveryState::Idle => DiscoveryConfig::default(),
        }
    }

    pub fn discovery_status(&self) -> DiscoveryStatus {
        match &*self.discovery.read().unwrap() {
            DiscoveryState::Idle => DiscoveryStatus::Idle,
            DiscoveryState::Running(c) => DiscoveryStatus::Running { config: c.clone() },
            DiscoveryState::Ready(r) => DiscoveryStatus::Ready {
                config: r.config.clone(),
                rule_count: r.rules.len(),
            },
            DiscoveryState::Failed(c, m) => DiscoveryStatus::Failed {
                config: c.clone(),
                message: m.clone(),
            },
        }
    }

    /// Runs discovery on the calling thread and stores the result.
    pub fn run_discovery(&self, config: DiscoveryConfig) -> ApiResult<Arc<RuleSet>> {
        config.validate()?;
        *self.discovery.write().unwrap() = DiscoveryState::Running(config.clone());
        match self.ctx.discover(&config) {
            Ok(rules) => {
                if let Some((dir, manifest)) = &self.cache {
                    if let Err(e) = dir.write_rules(manifest, &rules) {
                        tracing::warn!("could not cache rules: {e}");
                    }
                }
                let rules = Arc::new(rules);
                *self.discovery.write().unwrap() = DiscoveryState::Ready(rules.clone());
                Ok(rules)
            }
            Err(e) => {
                *self.discovery.write().unwrap() = DiscoveryState::Failed(config, e.to_string());
                Err(e.into())
            }
        }
    }

    /// Starts discovery on a background thread. Rejected while another run
    /// is in progress.
    pub fn start_discovery(self: &Arc<Self>, config: DiscoveryConfig) -> ApiResult<thread::JoinHandle<()>> {
        config.validate()?;
        {
            let mut state = self.discovery.write().unwrap();
            if matches!(*state, DiscoveryState::Running(_)) {
                return Err(ApiError::Conflict("discovery is already running".into()));
            }
            *state = DiscoveryState::Running(config.clone());
        }
        let engine = Arc::clone(self);
        Ok(thread::spawn(move || {
            if let Err(e) = engine.run_discovery(config) {
                tracing::warn!("discovery failed: {e}");
            }
        }))
    }

    pub fn summary(&self) -> Summary {
        let store = &self.ctx.store;
        Summary {
            corpus_sha256: self.corpus_sha256.clone(),
            n_test: store.n_test(),
            n_train: store.train.len(),
            classes: store.classes.clone(),
            error_count: store.error_count,
            accuracy: store.accuracy(),
            baseline_error_rate: store.baseline_error_rate,
            vocabulary_size: self.ctx.vocab.len(),
            high_level_features: self
                .ctx
                .high_level
                .iter()
                .map(|f| FeatureInfo {
                    name: f.name.clone(),
                    kind: f.kind.clone(),
                    thresholds: f.thresholds,
                })
                .collect(),
            projection: self.projection.as_ref().map(|p| p.method),
            discovery: self.discovery_status(),
        }
    }

    pub fn rules(&self, filter: &RuleFilter) -> ApiResult<RulePage> {
        let ruleset = self.require_rules()?;
        if let Some(r) = filter.min_error_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(ApiError::Validation("min_error_rate must lie in [0, 1]".into()));
            }
        }
        let page = filter.page.unwrap_or(1);
        let page_size = filter.page_size.unwrap_or(usize::MAX).min(MAX_PAGE_SIZE);
        if page == 0 || page_size == 0 {
            return Err(ApiError::Validation("page and page_size start at 1".into()));
        }
        let mut views: Vec<RuleView> = ruleset
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| filter.min_error_rate.is_none_or(|m| r.metrics.error_rate >= m))
            .filter(|(_, r)| filter.max_conditions.is_none_or(|m| r.conditions.len() <= m))
            .map(|(id, r)| RuleView {
                id,
                text: rule_text(&r.conditions),
                conditions: r.conditions.clone(),
                metrics: r.metrics.clone(),
            })
            .collect();
        // The rule set is already in error-rate order.
        if filter.sort.unwrap_or_default() == RuleSort::Support {
            views.sort_by(|a, b| {
                b.metrics
                    .support_count
                    .cmp(&a.metrics.support_count)
                    .then(b.metrics.error_rate.total_cmp(&a.metrics.error_rate))
                    .then(a.id.cmp(&b.id))
            });
        }
        let matching = views.len();
        let start = (page - 1).saturating_mul(page_size).min(matching);
        let end = start.saturating_add(page_size).min(matching);
        Ok(RulePage {
            total_rules: ruleset.rules.len(),
            matching,
            page,
            page_size,
            rules: views.drain(start..end).collect(),
            histogram: histogram(&ruleset.rules),
            baseline_error_rate: ruleset.baseline_error_rate,
        })
    }

    fn attribution_charts(&self, docs: &[usize], classes: Option<&[String]>) -> ApiResult<Vec<AttributionChart>> {
        let all = &self.ctx.store.classes;
        let classes = classes.unwrap_or(all);
        classes
            .iter()
            .map(|c| Ok(attribution_chart(&aggregate_counts(docs, c, &self.ctx.store)?)))
            .collect()
    }

    pub fn evaluate(&self, draft: &RuleDraft) -> ApiResult<EvaluationBundle> {
        let config = self.config();
        let concepts = self.concepts.read().unwrap();
        let (conditions, set, metrics) = self.ctx.evaluate_rule(draft.conditions.clone(), &concepts, &config)?;
        let stats = self.ctx.subpopulation_stats(&conditions, &concepts)?;
        let docs: Vec<usize> = set.iter().collect();
        let attributions = self.attribution_charts(&docs, draft.classes.as_deref())?;
        let projection = self
            .projection
            .as_ref()
            .map(|p| filter_projection(p, &set, &self.ctx.store));
        let page_size = draft.page_size.unwrap_or(DEFAULT_PAGE_SIZE).clamp(1, MAX_PAGE_SIZE);
        let documents = self.ctx.document_page(&conditions, &concepts, 1, page_size)?;
        Ok(EvaluationBundle {
            text: rule_text(&conditions),
            conditions,
            metrics,
            stats,
            attributions,
            projection,
            documents,
        })
    }

    /// Canonical conditions of a query draft; an empty list selects every
    /// test document.
    fn query_conditions(&self, conditions: Vec<Condition>, concepts: &ConceptRegistry) -> ApiResult<Vec<Condition>> {
        if conditions.is_empty() {
            return Ok(conditions);
        }
        let max = self.config().max_conditions.max(3);
        Ok(self.ctx.validate_conditions(conditions, concepts, max)?)
    }

    pub fn documents(&self, conditions: Vec<Condition>, page: usize, page_size: usize) -> ApiResult<DocumentPage> {
        if page_size == 0 || page_size > MAX_PAGE_SIZE {
            return Err(ApiError::Validation(format!("page_size must lie in 1..={MAX_PAGE_SIZE}")));
        }
        if page == 0 {
            return Err(ApiError::Validation("pages are numbered from 1".into()));
        }
        let concepts = self.concepts.read().unwrap();
        let conditions = self.query_conditions(conditions, &concepts)?;
        Ok(self.ctx.document_page(&conditions, &concepts, page, page_size)?)
    }

    pub fn subpopulation(&self, conditions: Vec<Condition>) -> ApiResult<SubpopulationReport> {
        let config = self.config();
        let concepts = self.concepts.read().unwrap();
        let conditions = self.query_conditions(conditions, &concepts)?;
        let set = self.ctx.subpopulation(&conditions, &concepts)?;
        let metrics = self.ctx.metrics(&conditions, &set, &config);
        let stats = self.ctx.subpopulation_stats(&conditions, &concepts)?;
        Ok(SubpopulationReport {
            conditions,
            metrics,
            stats,
        })
    }

    pub fn overall(&self) -> ApiResult<OverallStats> {
        let stats = self.ctx.subpopulation_stats(&[], &ConceptRegistry::new())?;
        Ok(OverallStats {
            stats,
            overview: self.ruleset().map(|r| self.ctx.overview(&r)),
        })
    }

    pub fn projection(&self, conditions: Vec<Condition>) -> ApiResult<ProjectionView> {
        let p = self
            .projection
            .as_ref()
            .ok_or_else(|| ApiError::NotFound("this corpus has no embeddings or coordinates".into()))?;
        let concepts = self.concepts.read().unwrap();
        let conditions = self.query_conditions(conditions, &concepts)?;
        let set = self.ctx.subpopulation(&conditions, &concepts)?;
        Ok(ProjectionView {
            method: p.method,
            initial_kl: p.initial_kl,
            final_kl: p.final_kl,
            perplexity: p.perplexity,
            warnings: p.warnings.clone(),
            points: filter_projection(p, &set, &self.ctx.store),
        })
    }

    pub fn create_concept(&self, draft: &ConceptDraft) -> ApiResult<ConceptSummary> {
        let config = self.config();
        let mut concepts = self.concepts.write().unwrap();
        let concept = concepts.create(&draft.name, &draft.tokens)?;
        Ok(self.ctx.evaluate_concept(concept, &config))
    }

    pub fn update_concept(&self, id: u32, draft: &ConceptDraft) -> ApiResult<ConceptSummary> {
        let config = self.config();
        let mut concepts = self.concepts.write().unwrap();
        let concept = concepts.update(id, &draft.name, &draft.tokens)?;
        Ok(self.ctx.evaluate_concept(concept, &config))
    }

    pub fn concepts(&self) -> Vec<ConceptSummary> {
        let config = self.config();
        let concepts = self.concepts.read().unwrap();
        concepts.iter().map(|c| self.ctx.evaluate_concept(c, &config)).collect()
    }

    pub fn compare_concepts(&self, ids: &[u32]) -> ApiResult<ConceptComparison> {
        let config = self.config();
        let concepts = self.concepts.read().unwrap();
        Ok(self.ctx.compare_concepts(ids, &concepts, &config)?)
    }
}
