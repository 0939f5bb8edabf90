//! Error-prone subpopulation discovery.
//!
//! 1. Train a shallow random forest on the token matrix against the error
//!    labels.
//! 2. Keep token features with nonzero importance (at most `candidate_cap`).
//!    High-level buckets skip steps 1–2.
//! 3. Evaluate every rule of up to `max_conditions` conditions over the
//!    candidates and buckets; keep those meeting the support and error-rate
//!    floors.
//! 4. Attach a one-sided binomial p-value against the baseline and a
//!    bootstrap confidence interval to each kept rule.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bitset::DocSet;
use crate::corpus::DatasetStore;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, HighLevelFeature, Vocabulary};
use crate::forest::{select_candidates, train_filter_forest, ForestConfig};
use crate::rule::{conditions_key, Condition, Rule, RuleMetrics};
use crate::stats::{binomial_p_value, bootstrap_ci_counts, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinErrorRate {
    /// The error rate over the entire test split.
    Baseline,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub max_conditions: usize,
    pub min_support_fraction: f64,
    pub min_error_rate: MinErrorRate,
    pub n_trees: usize,
    pub max_depth: usize,
    pub candidate_cap: usize,
    pub bootstrap_resamples: usize,
    pub alpha: f64,
    pub seed: u64,
    /// When false every vocabulary feature is a candidate (exhaustive search).
    pub use_forest: bool,
    /// Drop conjunctions that do not strictly beat all of their sub-rules.
    pub prune_redundant: bool,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            max_conditions: 2,
            min_support_fraction: 0.05,
            min_error_rate: MinErrorRate::Baseline,
            n_trees: 100,
            max_depth: 3,
            candidate_cap: 500,
            bootstrap_resamples: 1000,
            alpha: 0.05,
            seed: 0,
            use_forest: true,
            prune_redundant: true,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.min_support_fraction > 0.0 && self.min_support_fraction < 1.0) {
            return bad("min_support_fraction must lie in (0, 1)");
        }
        if !(1..=3).contains(&self.max_conditions) {
            return bad("max_conditions must be 1, 2 or 3");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if let MinErrorRate::Fixed(r) = self.min_error_rate {
            if !(0.0..=1.0).contains(&r) {
                return bad("min_error_rate must lie in [0, 1]");
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || self.bootstrap_resamples == 0 {
            return bad("bootstrap needs alpha in (0, 1) and at least one resample");
        }
        Ok(())
    }

    /// Effective error-rate floor. A fixed threshold can only raise it: a
    /// rule below the baseline never describes an error-prone slice.
    pub fn min_error_rate_for(&self, baseline: f64) -> f64 {
        match self.min_error_rate {
            MinErrorRate::Baseline => baseline,
            MinErrorRate::Fixed(r) => r.max(baseline),
        }
    }

    /// Smallest count `c` with `c / n >= min_support_fraction`.
    pub fn min_support_count(&self, n: usize) -> usize {
        let nf = n as f64;
        let mut c = libm::ceil(self.min_support_fraction * nf) as usize;
        while c > 0 && (c - 1) as f64 / nf >= self.min_support_fraction {
            c -= 1;
        }
        while (c as f64 / nf) < self.min_support_fraction {
            c += 1;
        }
        c.max(1)
    }

    fn forest(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            max_features: None,
            seed: self.seed,
        }
    }
}

/// Metrics shared by discovered rules, drafts and concepts. `None` for an
/// empty subpopulation.
pub fn evaluate_counts(
    support: usize,
    errors: usize,
    n_test: usize,
    baseline: f64,
    config: &DiscoveryConfig,
    conditions: &[Condition],
) -> Option<RuleMetrics> {
    evaluate_counts_keyed(support, errors, n_test, baseline, config, &conditions_key(conditions))
}

pub fn evaluate_counts_keyed(
    support: usize,
    errors: usize,
    n_test: usize,
    baseline: f64,
    config: &DiscoveryConfig,
    key: &[u8],
) -> Option<RuleMetrics> {
    if support == 0 {
        return None;
    }
    let (n, k) = (support as u64, errors as u64);
    let p_value = binomial_p_value(k, n, baseline).ok()?;
    let seed = derive_seed(config.seed, key);
    let (ci_low, ci_high) = bootstrap_ci_counts(k, n, config.bootstrap_resamples, config.alpha, seed).ok()?;
    Some(RuleMetrics {
        support_count: support,
        support_fraction: support as f64 / n_test as f64,
        error_count: errors,
        error_rate: errors as f64 / support as f64,
        p_value,
        ci_low,
        ci_high,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub n_test: usize,
    pub baseline_error_rate: f64,
    pub config: DiscoveryConfig,
}

/// Orders rules by error rate descending, then support descending, then
/// canonical conditions.
pub fn sort_rules(rules: &mut [Rule]) {
    rules.sort_by(|a, b| {
        b.metrics
            .error_rate
            .total_cmp(&a.metrics.error_rate)
            .then(b.metrics.support_count.cmp(&a.metrics.support_count))
            .then_with(|| a.conditions.cmp(&b.conditions))
    });
}

struct Item {
    condition: Condition,
    set: DocSet,
    /// High-level feature index; buckets of one feature are disjoint.
    group: Option<usize>,
    support: usize,
    errors: usize,
}

impl Item {
    fn rate(&self) -> f64 {
        self.errors as f64 / self.support as f64
    }
}

/// Steps 3–4 over the given token candidates and every high-level bucket.
pub fn enumerate_and_evaluate(
    candidates: &[u32],
    high_level: &[HighLevelFeature],
    vocab: &Vocabulary,
    matrix: &FeatureMatrix,
    errors: &[bool],
    config: &DiscoveryConfig,
) -> Vec<Rule> {
    let n = errors.len();
    if n == 0 {
        return Vec::new();
    }
    let error_set = DocSet::from_bools(errors);
    let total_errors = error_set.count();
    let baseline = total_errors as f64 / n as f64;
    let min_rate = config.min_error_rate_for(baseline);
    let min_count = config.min_support_count(n);

    let mut items: Vec<Item> = Vec::new();
    for &f in candidates {
        let Some(feature) = vocab.get(f) else { continue };
        items.push(Item {
            condition: Condition::Token {
                tokens: feature.tokens.clone(),
            },
            set: matrix.column_set(f),
            group: None,
            support: 0,
            errors: 0,
        });
    }
    for (g, hl) in high_level.iter().enumerate() {
        for bucket in crate::features::Bucket::ALL {
            items.push(Item {
                condition: Condition::high_level(&hl.name, bucket),
                set: hl.bucket_set(bucket),
                group: Some(g),
                support: 0,
                errors: 0,
            });
        }
    }
    items.sort_by(|a, b| a.condition.cmp(&b.condition));
    items.dedup_by(|a, b| a.condition == b.condition);
    for it in &mut items {
        it.support = it.set.count();
        it.errors = it.set.intersection_count(&error_set);
    }

    let passes = |support: usize, errs: usize| {
        support >= min_count && errs > 0 && errs as f64 / support as f64 >= min_rate
    };
    let mut found: Vec<(Vec<usize>, usize, usize)> = Vec::new();

    let frequent: Vec<usize> = (0..items.len()).filter(|&i| items[i].support >= min_count).collect();
    for &i in &frequent {
        if passes(items[i].support, items[i].errors) {
            found.push((alloc::vec![i], items[i].support, items[i].errors));
        }
    }

    let compatible = |a: &Item, b: &Item| a.group.is_none() || a.group != b.group;

    if config.max_conditions >= 2 {
        for (pi, &i) in frequent.iter().enumerate() {
            for &j in &frequent[pi + 1..] {
                let (a, b) = (&items[i], &items[j]);
                if !compatible(a, b) {
                    continue;
                }
                let support = a.set.intersection_count(&b.set);
                if support < min_count {
                    continue;
                }
                let errs = a.set.intersection_count3(&b.set, &error_set);
                if !passes(support, errs) {
                    continue;
                }
                let rate = errs as f64 / support as f64;
                if config.prune_redundant && rate <= a.rate().max(b.rate()) {
                    continue;
                }
                found.push((alloc::vec![i, j], support, errs));
            }
        }
    }

    if config.max_conditions >= 3 {
        for (pi, &i) in frequent.iter().enumerate() {
            for (pj, &j) in frequent.iter().enumerate().skip(pi + 1) {
                if !compatible(&items[i], &items[j]) {
                    continue;
                }
                let ij = items[i].set.intersection(&items[j].set);
                if ij.count() < min_count {
                    continue;
                }
                let ij_rate = ij.intersection_count(&error_set) as f64 / ij.count() as f64;
                for &k in &frequent[pj + 1..] {
                    let c = &items[k];
                    if !compatible(&items[i], c) || !compatible(&items[j], c) {
                        continue;
                    }
                    let support = ij.intersection_count(&c.set);
                    if support < min_count {
                        continue;
                    }
                    let errs = ij.intersection_count3(&c.set, &error_set);
                    if !passes(support, errs) {
                        continue;
                    }
                    let rate = errs as f64 / support as f64;
                    if config.prune_redundant {
                        let pair_rate = |x: &Item, y: &Item| {
                            x.set.intersection_count3(&y.set, &error_set) as f64
                                / x.set.intersection_count(&y.set) as f64
                        };
                        let best_sub = [
                            items[i].rate(),
                            items[j].rate(),
                            c.rate(),
                            ij_rate,
                            pair_rate(&items[i], c),
                            pair_rate(&items[j], c),
                        ]
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max);
                        if rate <= best_sub {
                            continue;
                        }
                    }
                    found.push((alloc::vec![i, j, k], support, errs));
                }
            }
        }
    }

    let mut rules: Vec<Rule> = found
        .into_iter()
        .filter_map(|(idx, support, errs)| {
            let conditions: Vec<Condition> = idx.iter().map(|&i| items[i].condition.clone()).collect();
            let metrics = evaluate_counts(support, errs, n, baseline, config, &conditions)?;
            Some(Rule { conditions, metrics })
        })
        .collect();
    sort_rules(&mut rules);
    rules
}

/// Runs all four steps. Deterministic given `config.seed`.
pub fn discover(
    store: &DatasetStore,
    vocab: &Vocabulary,
    matrix: &FeatureMatrix,
    high_level: &[HighLevelFeature],
    config: &DiscoveryConfig,
) -> Result<RuleSet> {
    config.validate()?;
    let errors = &store.error_labels;
    let mut ruleset = RuleSet {
        rules: Vec::new(),
        n_test: store.n_test(),
        baseline_error_rate: store.baseline_error_rate,
        config: config.clone(),
    };
    if store.error_count == 0 {
        return Ok(ruleset);
    }
    let candidates: Vec<u32> = if config.use_forest {
        let forest = train_filter_forest(matrix, errors, &config.forest());
        select_candidates(&forest, config.candidate_cap)
    } else {
        (0..matrix.n_features() as u32).collect()
    };
    ruleset.rules = enumerate_and_evaluate(&candidates, high_level, vocab, matrix, errors, config);
    Ok(ruleset)
}
