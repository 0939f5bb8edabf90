use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use slicelens_core::corpus::{DatasetStore, DocumentRecord, Split};
use slicelens_core::features::{
    build_feature_matrix, build_vocabulary, bucketize, compute_high_level_features, Bucket, TokenizedCorpus, DOC_LENGTH,
    OVERLAP,
};
use slicelens_core::testkit::{random_corpus, RandomSpec};
use slicelens_core::text::{extract_ngrams, Ngram};
use slicelens_core::Error;

fn record(id: usize, parts: &[&str], split: Split) -> DocumentRecord {
    DocumentRecord {
        id: format!("r{id}"),
        text_parts: parts.iter().map(|s| s.to_string()).collect(),
        label: "x".into(),
        prediction: (split == Split::Test).then(|| "x".into()),
        split,
        attributions: BTreeMap::new(),
        embedding: None,
        extra_features: BTreeMap::new(),
        projection: None,
    }
}

/// Lowercased, edge-punctuation-stripped whitespace tokens, written without
/// the library tokenizer.
fn naive_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn contains_run(tokens: &[String], gram: &[String]) -> bool {
    tokens.windows(gram.len()).any(|w| w == gram)
}

#[test]
fn vocabulary_document_frequencies_match_a_recount() {
    let records = random_corpus(&RandomSpec { n_test: 50, n_train: 30, pairs: true, ..RandomSpec::default() });
    let store = DatasetStore::build(records.clone()).unwrap();
    let corpus = TokenizedCorpus::new(&store);
    let vocab = build_vocabulary(&store, &corpus, 2).unwrap();

    let test: Vec<Vec<Vec<String>>> = records
        .iter()
        .filter(|r| r.split == Split::Test)
        .map(|r| r.text_parts.iter().map(|t| naive_tokens(t)).collect())
        .collect();
    let mut all: BTreeSet<Vec<String>> = BTreeSet::new();
    for parts in &test {
        for p in parts {
            for n in 1..=3 {
                for w in p.windows(n) {
                    all.insert(w.to_vec());
                }
            }
        }
    }
    let expected: Vec<(Vec<String>, usize)> = all
        .into_iter()
        .map(|g| {
            let df = test.iter().filter(|parts| parts.iter().any(|p| contains_run(p, &g))).count();
            (g, df)
        })
        .filter(|(_, df)| *df >= 2)
        .collect();
    let got: Vec<(Vec<String>, usize)> =
        vocab.features().iter().map(|f| (f.tokens.0.clone(), f.doc_frequency_test)).collect();
    assert_eq!(got, expected);
    for (i, f) in vocab.features().iter().enumerate() {
        assert_eq!(f.id as usize, i);
    }

    // Train frequencies by label, recounted.
    for f in vocab.features() {
        let mut by_label: BTreeMap<String, usize> = BTreeMap::new();
        for r in records.iter().filter(|r| r.split == Split::Train) {
            if r.text_parts.iter().any(|t| contains_run(&naive_tokens(t), &f.tokens.0)) {
                *by_label.entry(r.label.clone()).or_default() += 1;
            }
        }
        assert_eq!(f.doc_frequency_train_by_label, by_label, "{}", f.tokens);
    }
}

#[test]
fn vocabulary_is_deterministic() {
    let store = DatasetStore::build(random_corpus(&RandomSpec::default())).unwrap();
    let a = build_vocabulary(&store, &TokenizedCorpus::new(&store), 3).unwrap();
    let b = build_vocabulary(&store, &TokenizedCorpus::new(&store), 3).unwrap();
    assert_eq!(a.features(), b.features());
}

#[test]
fn min_df_too_high_is_an_error() {
    let store = DatasetStore::build(random_corpus(&RandomSpec::default())).unwrap();
    let corpus = TokenizedCorpus::new(&store);
    assert_eq!(build_vocabulary(&store, &corpus, 10_000).unwrap_err(), Error::EmptyVocabulary);
}

#[test]
fn matrix_matches_brute_force_scan() {
    for (seed, pairs) in [(3, false), (4, true)] {
        let records = random_corpus(&RandomSpec { n_test: 50, n_train: 0, pairs, seed, ..RandomSpec::default() });
        let store = DatasetStore::build(records.clone()).unwrap();
        let corpus = TokenizedCorpus::new(&store);
        let vocab = build_vocabulary(&store, &corpus, 2).unwrap();
        let matrix = build_feature_matrix(&corpus, &vocab);
        assert_eq!((matrix.n_docs(), matrix.n_features()), (50, vocab.len()));
        for (d, r) in records.iter().enumerate() {
            let parts: Vec<Vec<String>> = r.text_parts.iter().map(|t| naive_tokens(t)).collect();
            for f in vocab.features() {
                let want = parts.iter().any(|p| contains_run(p, &f.tokens.0));
                assert_eq!(matrix.get(d, f.id), want, "doc {d} feature {}", f.tokens);
            }
            let row: Vec<u32> = matrix.row(d).to_vec();
            assert!(row.windows(2).all(|w| w[0] < w[1]));
        }
        for f in vocab.features() {
            let col = matrix.column(f.id);
            assert_eq!(col.len(), f.doc_frequency_test);
            assert_eq!(matrix.column_set(f.id).iter().map(|d| d as u32).collect::<Vec<_>>(), col);
        }
    }
}

#[test]
fn a_b_document_sets_all_three_cells() {
    let store = DatasetStore::build(vec![
        record(0, &["a b"], Split::Test),
        record(1, &["a b"], Split::Test),
        record(2, &["c"], Split::Test),
    ])
    .unwrap();
    let corpus = TokenizedCorpus::new(&store);
    let vocab = build_vocabulary(&store, &corpus, 2).unwrap();
    let names: Vec<String> = vocab.features().iter().map(|f| f.tokens.to_string()).collect();
    assert_eq!(names, ["a", "a b", "b"]);
    let m = build_feature_matrix(&corpus, &vocab);
    assert_eq!(m.row(0), &[0, 1, 2]);
    assert!(m.row(2).is_empty());
}

#[test]
fn ngrams_do_not_cross_parts() {
    let store = DatasetStore::build(vec![
        record(0, &["x a", "b y"], Split::Test),
        record(1, &["x a", "b y"], Split::Test),
    ])
    .unwrap();
    let corpus = TokenizedCorpus::new(&store);
    let vocab = build_vocabulary(&store, &corpus, 1).unwrap();
    assert!(vocab.id_of(&Ngram::parse("a b")).is_none());
    assert!(vocab.id_of(&Ngram::parse("x a")).is_some());
}

#[test]
fn extract_ngrams_examples() {
    let got: BTreeSet<String> = extract_ngrams("Want to be", 3).iter().map(ToString::to_string).collect();
    let want: BTreeSet<String> = ["want", "to", "be", "want to", "to be", "want to be"].iter().map(|s| s.to_string()).collect();
    assert_eq!(got, want);
}

#[test]
fn high_level_examples() {
    let mut records: Vec<DocumentRecord> = (0..10).map(|i| record(i, &["a b c", "b c"], Split::Test)).collect();
    records[1].text_parts = vec!["a b".into(), "c d".into()];
    records[2].text_parts = vec!["w1 w2 w3 w4 w5".into(), "w1".into()];
    let store = DatasetStore::build(records).unwrap();
    let hl = compute_high_level_features(&store, &TokenizedCorpus::new(&store)).unwrap();
    let by_name: BTreeMap<&str, &_> = hl.iter().map(|f| (f.name.as_str(), f)).collect();
    assert_eq!(by_name[OVERLAP].values[0], 1.0);
    assert_eq!(by_name[OVERLAP].values[1], 0.0);
    assert_eq!(by_name[DOC_LENGTH].values[2], 6.0);
    assert_eq!(by_name[DOC_LENGTH].values[0], 5.0);
}

#[test]
fn single_text_doc_length_and_no_overlap() {
    let store = DatasetStore::build((0..10).map(|i| record(i, &["w1 w2 w3 w4 w5"], Split::Test)).collect()).unwrap();
    let hl = compute_high_level_features(&store, &TokenizedCorpus::new(&store)).unwrap();
    assert_eq!(hl.len(), 1);
    assert_eq!(hl[0].values, vec![5.0; 10]);
    assert!(hl[0].buckets.iter().all(|b| *b == Bucket::Medium));
}

#[test]
fn ingested_feature_missing_somewhere_names_it() {
    let mut records: Vec<DocumentRecord> = (0..12).map(|i| record(i, &["a"], Split::Test)).collect();
    for r in records.iter_mut().skip(1) {
        r.extra_features.insert("pos_nouns".into(), 1.0);
    }
    let store = DatasetStore::build(records).unwrap();
    let err = compute_high_level_features(&store, &TokenizedCorpus::new(&store)).unwrap_err();
    assert_eq!(err, Error::MissingFeature("pos_nouns".into()));
    assert!(err.to_string().contains("pos_nouns"));
}

#[test]
fn one_to_hundred_thresholds() {
    let values: Vec<f64> = (1..=100).map(f64::from).collect();
    let (t, b) = bucketize(&values, 10, 90).unwrap();
    assert_eq!((t.low, t.high), (10.0, 90.0));
    assert_eq!(b[4], Bucket::Low);
    assert_eq!(b[94], Bucket::High);
    assert_eq!(t.bucket(95.0), Bucket::High);
}

#[test]
fn fewer_than_ten_values_is_an_error() {
    assert_eq!(bucketize(&[1.0; 9], 10, 90).unwrap_err(), Error::InsufficientData(9));
    assert!(Error::InsufficientData(9).to_string().contains("insufficient data for bucketing"));
}

/// Nearest-rank threshold: the smallest value whose rank reaches p% of n,
/// written as a count search instead of an index formula.
fn oracle_threshold(values: &[f64], p: u32) -> f64 {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    for (i, v) in sorted.iter().enumerate() {
        if 100 * (i + 1) >= p as usize * n {
            return *v;
        }
    }
    unreachable!()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bucketize_matches_nearest_rank_oracle(values in prop::collection::vec(prop_oneof![
        (-1000i32..1000).prop_map(f64::from),
        -1e6f64..1e6,
    ], 10..300)) {
        let (t, buckets) = bucketize(&values, 10, 90).unwrap();
        let low = oracle_threshold(&values, 10);
        let high = oracle_threshold(&values, 90);
        prop_assert_eq!((t.low, t.high), (low, high));
        let n = values.len();
        for (v, b) in values.iter().zip(&buckets) {
            let want = if *v < low { Bucket::Low } else if *v > high { Bucket::High } else { Bucket::Medium };
            prop_assert_eq!(*b, want);
        }
        let lows = buckets.iter().filter(|b| **b == Bucket::Low).count();
        let highs = buckets.iter().filter(|b| **b == Bucket::High).count();
        prop_assert!(lows < (n * 10).div_ceil(100));
        prop_assert!(highs <= n - (n * 90).div_ceil(100));
    }
}
