use std::collections::{BTreeMap, BTreeSet};

use slicelens_core::analysis::AnalysisContext;
use slicelens_core::corpus::{DatasetStore, DocumentRecord, Split};
use slicelens_core::discovery::{enumerate_and_evaluate, DiscoveryConfig, MinErrorRate};
use slicelens_core::features::{nearest_rank, Bucket, FeatureMatrix, DOC_LENGTH};
use slicelens_core::forest::{select_candidates, train_filter_forest, ForestConfig};
use slicelens_core::stats::binomial_p_value;
use slicelens_core::testkit::{planted_corpus, random_corpus, PlantedSpec, RandomSpec};
use slicelens_core::text::{token_texts, Ngram};
use slicelens_core::{Condition, Rule};

fn doc(id: usize, text: &str, error: bool) -> DocumentRecord {
    DocumentRecord {
        id: format!("d{id:04}"),
        text_parts: vec![text.to_string()],
        label: "a".into(),
        prediction: Some(if error { "b" } else { "a" }.into()),
        split: Split::Test,
        attributions: BTreeMap::new(),
        embedding: None,
        extra_features: BTreeMap::new(),
        projection: None,
    }
}

fn context(records: Vec<DocumentRecord>, min_df: usize) -> AnalysisContext {
    AnalysisContext::build(DatasetStore::build(records).unwrap(), Some(min_df)).unwrap()
}

fn find<'a>(rules: &'a [Rule], conditions: &[Condition]) -> Option<&'a Rule> {
    rules.iter().find(|r| r.conditions == conditions)
}

/// 400 docs, baseline 0.25; "island" in 40 docs with 24 errors.
fn island_corpus() -> Vec<DocumentRecord> {
    let mut records = Vec::new();
    let mut island_errors = 0;
    let mut other_errors = 0;
    for i in 0..400 {
        let island = i % 10 == 0;
        let error = if island {
            island_errors += 1;
            island_errors <= 24
        } else {
            other_errors += 1;
            other_errors % 9 < 2 && (other_errors / 9) * 2 + 2 <= 76 + 1
        };
        let filler = format!("f{} g{}", i % 7, i % 11);
        let text = if island {
            format!("the island {filler} x")
        } else {
            format!("the lake {filler} x")
        };
        records.push(doc(i, &text, error));
    }
    // Top up the non-island errors to exactly 76 so the baseline is 100/400.
    let mut errors: usize = records.iter().filter(|r| r.is_error()).count();
    for r in records.iter_mut() {
        if errors >= 100 {
            break;
        }
        if !r.is_error() && !r.text_parts[0].contains("island") {
            r.prediction = Some("b".into());
            errors += 1;
        }
    }
    records
}

#[test]
fn planted_island_rule_is_kept_with_brute_force_counts() {
    let records = island_corpus();
    let island_docs: Vec<&DocumentRecord> = records
        .iter()
        .filter(|r| token_texts(&r.text_parts[0]).iter().any(|t| t == "island"))
        .collect();
    let island_errors = island_docs.iter().filter(|r| r.is_error()).count();
    assert_eq!((island_docs.len(), island_errors), (40, 24));

    let ctx = context(records, 2);
    assert_eq!(ctx.store.baseline_error_rate, 0.25);
    let rs = ctx.discover(&DiscoveryConfig::default()).unwrap();
    let rule = find(&rs.rules, &[Condition::token("island")]).expect("island rule");
    assert_eq!(rule.metrics.support_count, 40);
    assert_eq!(rule.metrics.support_fraction, 0.10);
    assert_eq!(rule.metrics.error_rate, 0.60);
    assert_eq!(rs.rules[0].conditions, vec![Condition::token("island")]);
}

#[test]
fn low_support_rules_are_dropped() {
    // "rare" covers 4% of 100 docs, all errors.
    let records: Vec<_> = (0..100)
        .map(|i| {
            let rare = i < 4;
            let text = if rare { "rare common word" } else { "common word" };
            doc(i, text, rare || i % 5 == 0)
        })
        .collect();
    let ctx = context(records, 2);
    let cfg = DiscoveryConfig {
        use_forest: false,
        ..DiscoveryConfig::default()
    };
    let rs = ctx.discover(&cfg).unwrap();
    assert!(find(&rs.rules, &[Condition::token("rare")]).is_none());
    let loosened = DiscoveryConfig {
        min_support_fraction: 0.03,
        ..cfg
    };
    assert!(find(&ctx.discover(&loosened).unwrap().rules, &[Condition::token("rare")]).is_some());
}

#[test]
fn non_improving_conjunction_is_pruned() {
    // a: 50 docs, 30 errors (0.6). a ∧ b: 20 docs, 10 errors (0.5).
    let mut records = Vec::new();
    for i in 0..50 {
        let with_b = i < 20;
        let error = if with_b { i < 10 } else { i < 40 };
        records.push(doc(i, if with_b { "a b" } else { "a" }, error));
    }
    for i in 50..200 {
        records.push(doc(i, if i < 80 { "b" } else { "c" }, i % 10 == 0));
    }
    let ctx = context(records, 2);
    let base = DiscoveryConfig {
        use_forest: false,
        min_error_rate: MinErrorRate::Fixed(0.0),
        ..DiscoveryConfig::default()
    };
    let pair = [Condition::token("a"), Condition::token("b")];
    assert!(find(&ctx.discover(&base).unwrap().rules, &pair).is_none());
    let unpruned = DiscoveryConfig {
        prune_redundant: false,
        ..base
    };
    let rule = find(&ctx.discover(&unpruned).unwrap().rules, &pair).cloned().unwrap();
    assert_eq!((rule.metrics.support_count, rule.metrics.error_count), (20, 10));
}

#[test]
fn perfect_model_yields_no_rules() {
    let records: Vec<_> = (0..50).map(|i| doc(i, &format!("w{} common", i % 4), false)).collect();
    let ctx = context(records, 2);
    assert!(ctx.discover(&DiscoveryConfig::default()).unwrap().rules.is_empty());
}

#[test]
fn three_condition_rules_only_when_configured() {
    let ctx = context(random_corpus(&RandomSpec { n_test: 300, ..RandomSpec::default() }), 3);
    let two = ctx.discover(&DiscoveryConfig { use_forest: false, ..DiscoveryConfig::default() }).unwrap();
    assert!(two.rules.iter().all(|r| r.conditions.len() <= 2));
    let three = ctx
        .discover(&DiscoveryConfig {
            use_forest: false,
            max_conditions: 3,
            min_support_fraction: 0.02,
            ..DiscoveryConfig::default()
        })
        .unwrap();
    assert!(three.rules.iter().all(|r| r.conditions.len() <= 3));
}

/// Exhaustive oracle over all 1- and 2-subsets, computed by scanning the raw
/// records. Returns (conditions, support, errors).
fn brute_force(records: &[DocumentRecord], min_df: usize, cfg: &DiscoveryConfig) -> BTreeSet<(Vec<Condition>, usize, usize)> {
    let test: Vec<&DocumentRecord> = records.iter().filter(|r| r.split == Split::Test).collect();
    let n = test.len();
    let tokens: Vec<Vec<Vec<String>>> = test.iter().map(|r| r.text_parts.iter().map(|t| token_texts(t)).collect()).collect();
    let errors: Vec<bool> = test.iter().map(|r| r.is_error()).collect();
    let total_errors = errors.iter().filter(|e| **e).count();
    let baseline = total_errors as f64 / n as f64;

    let mut grams: BTreeMap<Ngram, usize> = BTreeMap::new();
    for parts in &tokens {
        let mut seen = BTreeSet::new();
        for p in parts {
            for len in 1..=3 {
                for w in p.windows(len) {
                    seen.insert(Ngram(w.to_vec()));
                }
            }
        }
        for g in seen {
            *grams.entry(g).or_default() += 1;
        }
    }
    let mut items: Vec<(Condition, Vec<bool>)> = grams
        .into_iter()
        .filter(|(_, df)| *df >= min_df)
        .map(|(g, _)| {
            let member = tokens
                .iter()
                .map(|parts| parts.iter().any(|p| p.windows(g.len()).any(|w| w == g.0.as_slice())))
                .collect();
            (Condition::Token { tokens: g }, member)
        })
        .collect();
    let lengths: Vec<f64> = tokens.iter().map(|parts| parts.iter().map(Vec::len).sum::<usize>() as f64).collect();
    let mut sorted = lengths.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (nearest_rank(&sorted, 10), nearest_rank(&sorted, 90));
    for bucket in Bucket::ALL {
        let member = lengths
            .iter()
            .map(|&v| match bucket {
                Bucket::Low => v < lo,
                Bucket::High => v > hi,
                Bucket::Medium => v >= lo && v <= hi,
            })
            .collect();
        items.push((Condition::high_level(DOC_LENGTH, bucket), member));
    }

    let count = |members: &[&Vec<bool>]| {
        let mut s = 0;
        let mut e = 0;
        for d in 0..n {
            if members.iter().all(|m| m[d]) {
                s += 1;
                e += usize::from(errors[d]);
            }
        }
        (s, e)
    };
    let passes = |s: usize, e: usize| s as f64 / n as f64 >= cfg.min_support_fraction && e > 0 && e as f64 / s as f64 >= baseline;
    let rate = |(s, e): (usize, usize)| if s == 0 { 0.0 } else { e as f64 / s as f64 };

    let mut out = BTreeSet::new();
    for (i, (ci, mi)) in items.iter().enumerate() {
        let (s, e) = count(&[mi]);
        if passes(s, e) {
            out.insert((vec![ci.clone()], s, e));
        }
        for (cj, mj) in &items[i + 1..] {
            let (s, e) = count(&[mi, mj]);
            if !passes(s, e) {
                continue;
            }
            let best_sub = rate(count(&[mi])).max(rate(count(&[mj])));
            if e as f64 / s as f64 > best_sub {
                let mut conds = vec![ci.clone(), cj.clone()];
                conds.sort();
                out.insert((conds, s, e));
            }
        }
    }
    out
}

#[test]
fn exhaustive_search_matches_brute_force_and_forest_is_a_subset() {
    for seed in 0..6 {
        let records = random_corpus(&RandomSpec {
            n_test: 240,
            n_train: 0,
            vocab: 14,
            min_words: 2,
            max_words: 5,
            seed,
            ..RandomSpec::default()
        });
        let min_df = 12;
        let ctx = context(records.clone(), min_df);
        assert!(ctx.vocab.len() <= 30, "seed {seed}: {} features", ctx.vocab.len());

        let exhaustive_cfg = DiscoveryConfig {
            use_forest: false,
            seed,
            ..DiscoveryConfig::default()
        };
        let oracle = brute_force(&records, min_df, &exhaustive_cfg);
        let exhaustive = ctx.discover(&exhaustive_cfg).unwrap();
        let got: BTreeSet<_> = exhaustive
            .rules
            .iter()
            .map(|r| (r.conditions.clone(), r.metrics.support_count, r.metrics.error_count))
            .collect();
        assert_eq!(got, oracle, "seed {seed}");
        for r in &exhaustive.rules {
            let p = binomial_p_value(r.metrics.error_count as u64, r.metrics.support_count as u64, ctx.store.baseline_error_rate).unwrap();
            assert_eq!(r.metrics.p_value, p);
            assert_eq!(r.metrics.error_rate, r.metrics.error_count as f64 / r.metrics.support_count as f64);
        }

        let filtered = ctx.discover(&DiscoveryConfig { seed, ..DiscoveryConfig::default() }).unwrap();
        for r in &filtered.rules {
            let twin = find(&exhaustive.rules, &r.conditions).expect("filtered rule in exhaustive set");
            assert_eq!(twin, r);
        }
    }
}

#[test]
fn same_seed_gives_identical_rulesets() {
    let ctx = context(random_corpus(&RandomSpec { n_test: 300, vocab: 40, ..RandomSpec::default() }), 3);
    let cfg = DiscoveryConfig { seed: 11, ..DiscoveryConfig::default() };
    assert_eq!(ctx.discover(&cfg).unwrap(), ctx.discover(&cfg).unwrap());
}

#[test]
fn perfectly_predictive_feature_tops_importance() {
    let records: Vec<_> = (0..300)
        .map(|i| {
            let bad = i % 4 == 0;
            let text = format!("{} w{} w{}", if bad { "trap" } else { "safe" }, i % 13, i % 17);
            doc(i, &text, bad)
        })
        .collect();
    let ctx = context(records, 2);
    let forest = train_filter_forest(&ctx.matrix, &ctx.store.error_labels, &ForestConfig::default());
    let imp = forest.importances();
    let trap = ctx.vocab.id_of(&Ngram::parse("trap")).unwrap() as usize;
    let safe = ctx.vocab.id_of(&Ngram::parse("safe")).unwrap() as usize;
    let top = (0..imp.len()).max_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
    // "trap" and "safe" are complements, so either gives the pure split.
    assert!(top == trap || top == safe, "top feature {top}");
    assert!(imp[trap] + imp[safe] > imp.iter().sum::<f64>() * 0.5);
}

#[test]
fn independent_errors_spread_importance() {
    // Empirical null: 500 docs, 20 Bernoulli(0.3) features, errors drawn
    // independently of all of them. Importances are pooled over 20 reruns.
    use rand::{Rng, SeedableRng};
    let mut pooled = [0.0; 20];
    for seed in 0..20u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + seed);
        let rows: Vec<Vec<u32>> = (0..500).map(|_| (0..20).filter(|_| rng.random_bool(0.3)).collect()).collect();
        let errors: Vec<bool> = (0..500).map(|_| rng.random_bool(0.25)).collect();
        let matrix = FeatureMatrix::from_rows(20, rows);
        let forest = train_filter_forest(&matrix, &errors, &ForestConfig { seed, ..ForestConfig::default() });
        for (p, i) in pooled.iter_mut().zip(forest.importances()) {
            *p += i / 20.0;
        }
    }
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let max = pooled.iter().cloned().fold(0.0, f64::max);
    assert!(mean > 0.0);
    assert!(max <= 3.0 * mean, "max {max} mean {mean}");
}

#[test]
fn candidates_follow_recomputed_split_gains() {
    let ctx = context(random_corpus(&RandomSpec { n_test: 400, vocab: 60, ..RandomSpec::default() }), 3);
    let forest = train_filter_forest(&ctx.matrix, &ctx.store.error_labels, &ForestConfig::default());
    let mut recomputed = vec![0.0; ctx.vocab.len()];
    for tree in &forest.trees {
        for s in &tree.splits {
            assert!(s.gain > 0.0);
            recomputed[s.feature as usize] += s.gain / forest.trees.len() as f64;
        }
    }
    let candidates = select_candidates(&forest, 500);
    let mut expected: Vec<u32> = (0..recomputed.len() as u32).filter(|&f| recomputed[f as usize] > 0.0).collect();
    expected.sort_by(|&a, &b| recomputed[b as usize].total_cmp(&recomputed[a as usize]).then(a.cmp(&b)));
    assert_eq!(candidates, expected);
    // Features the forest never split on are excluded.
    let used: BTreeSet<u32> = forest.trees.iter().flat_map(|t| t.splits.iter().map(|s| s.feature)).collect();
    assert!(candidates.iter().all(|f| used.contains(f)));
}

#[test]
fn candidate_cap_truncates() {
    let ctx = context(random_corpus(&RandomSpec { n_test: 400, vocab: 200, min_words: 8, max_words: 20, ..RandomSpec::default() }), 2);
    let forest = train_filter_forest(&ctx.matrix, &ctx.store.error_labels, &ForestConfig { n_trees: 300, ..ForestConfig::default() });
    let all = select_candidates(&forest, usize::MAX);
    assert!(all.len() > 50);
    assert_eq!(select_candidates(&forest, 50), all[..50].to_vec());
}

#[test]
fn enumeration_with_only_high_level_features() {
    let ctx = context(random_corpus(&RandomSpec::default()), 2);
    let rules = enumerate_and_evaluate(&[], &ctx.high_level, &ctx.vocab, &ctx.matrix, &ctx.store.error_labels, &DiscoveryConfig::default());
    assert!(rules.iter().all(|r| r.conditions.iter().all(|c| matches!(c, Condition::HighLevel { .. }))));
}

#[test]
fn planted_default_corpus_ranks_island_first() {
    let ctx = AnalysisContext::build(DatasetStore::build(planted_corpus(&PlantedSpec::default())).unwrap(), None).unwrap();
    assert_eq!(ctx.store.baseline_error_rate, 0.25);
    let rs = ctx.discover(&DiscoveryConfig::default()).unwrap();
    let first = &rs.rules[0];
    assert_eq!(first.conditions, vec![Condition::token("island")]);
    assert_eq!((first.metrics.support_count, first.metrics.error_count), (200, 120));
    assert!(first.metrics.ci_low <= 0.6 && 0.6 <= first.metrics.ci_high);
    assert!(first.metrics.p_value < 1e-20);
}

#[test]
fn fixed_threshold_below_baseline_still_floors_at_baseline() {
    let ctx = context(random_corpus(&RandomSpec { n_test: 300, error_rate: 0.45, seed: 3, ..RandomSpec::default() }), 3);
    let baseline = ctx.store.baseline_error_rate;
    let cfg = DiscoveryConfig { min_error_rate: MinErrorRate::Fixed(0.05), use_forest: false, ..DiscoveryConfig::default() };
    assert_eq!(cfg.min_error_rate_for(baseline), baseline);
    let rules = ctx.discover(&cfg).unwrap();
    assert!(!rules.rules.is_empty());
    assert!(rules.rules.iter().all(|r| r.metrics.error_rate >= baseline));
    let strict = DiscoveryConfig { min_error_rate: MinErrorRate::Fixed(0.9), ..cfg };
    assert_eq!(strict.min_error_rate_for(baseline), 0.9);
}
