//! Document records and the validated, immutable dataset store.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// Attribution entries kept per document and class.
pub const TOP_ATTRIBUTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One attribution score for a token occurrence. `pos` indexes the
/// normalized token sequence of all text parts concatenated in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attribution {
    pub token: String,
    pub pos: usize,
    pub score: f64,
}

/// One input document, in the ingest line format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub id: String,
    #[serde(rename = "texts")]
    pub text_parts: Vec<String>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    pub split: Split,
    #[serde(default)]
    pub attributions: BTreeMap<String, Vec<Attribution>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, rename = "features", skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_features: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<[f64; 2]>,
}

impl DocumentRecord {
    /// Normalized tokens of each text part.
    pub fn part_tokens(&self) -> Vec<Vec<String>> {
        self.text_parts.iter().map(|t| text::token_texts(t)).collect()
    }

    pub fn token_count(&self) -> usize {
        self.text_parts.iter().map(|t| text::tokenize(t).len()).sum()
    }

    pub fn is_error(&self) -> bool {
        self.prediction.as_deref().is_some_and(|p| p != self.label)
    }
}

/// Keeps the `k` entries per class with the largest `|score|`, ties broken
/// by smaller position.
pub fn truncate_attributions(mut record: DocumentRecord, k: usize) -> DocumentRecord {
    let k = k.max(1);
    for entries in record.attributions.values_mut() {
        entries.sort_by(|a, b| {
            libm::fabs(b.score)
                .total_cmp(&libm::fabs(a.score))
                .then(a.pos.cmp(&b.pos))
        });
        entries.truncate(k);
    }
    record
}

/// Bit `i` is set iff test record `i` is mispredicted.
pub fn compute_error_labels(store: &DatasetStore) -> Vec<bool> {
    store.test.iter().map(DocumentRecord::is_error).collect()
}

#[derive(Debug, Clone, Default)]
pub struct StoreOptions {
    /// Declared class set. When absent the class set is the union of all
    /// labels and predictions.
    pub classes: Option<Vec<String>>,
    /// Attribution entries kept per class; defaults to [`TOP_ATTRIBUTIONS`].
    pub top_k: Option<usize>,
}

/// Validated corpus. Test records are indexed by their position in `test`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStore {
    pub train: Vec<DocumentRecord>,
    pub test: Vec<DocumentRecord>,
    pub classes: Vec<String>,
    pub error_labels: Vec<bool>,
    pub error_count: usize,
    pub baseline_error_rate: f64,
}

impl DatasetStore {
    pub fn build(records: Vec<DocumentRecord>) -> Result<Self> {
        Self::build_with(records, &StoreOptions::default())
    }

    pub fn build_with(records: Vec<DocumentRecord>, options: &StoreOptions) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for r in &records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }

        let classes: BTreeSet<String> = match &options.classes {
            Some(declared) => declared.iter().cloned().collect(),
            None => records
                .iter()
                .flat_map(|r| core::iter::once(&r.label).chain(r.prediction.as_ref()))
                .cloned()
                .collect(),
        };

        let mut embedding_dim: Option<usize> = None;
        for r in &records {
            validate_record(r, &classes)?;
            if let Some(e) = &r.embedding {
                match embedding_dim {
                    None => embedding_dim = Some(e.len()),
                    Some(d) if d != e.len() => {
                        return Err(Error::EmbeddingDimension {
                            id: r.id.clone(),
                            expected: d,
                            found: e.len(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }

        let k = options.top_k.unwrap_or(TOP_ATTRIBUTIONS);
        let (test, train): (Vec<_>, Vec<_>) = records
            .into_iter()
            .map(|r| truncate_attributions(r, k))
            .partition(|r| r.split == Split::Test);
        if test.is_empty() {
            return Err(Error::NoTestRecords);
        }
        let with_embedding = test.iter().filter(|r| r.embedding.is_some()).count();
        if with_embedding != 0 && with_embedding != test.len() {
            return Err(Error::PartialEmbeddings);
        }
        let with_projection = test.iter().filter(|r| r.projection.is_some()).count();
        if with_projection != 0 && with_projection != test.len() {
            return Err(Error::InvalidRecord {
                id: String::from("<corpus>"),
                reason: String::from("projection must be present on all test records or on none"),
            });
        }

        let mut store = DatasetStore {
            train,
            test,
            classes: classes.into_iter().collect(),
            error_labels: Vec::new(),
            error_count: 0,
            baseline_error_rate: 0.0,
        };
        store.error_labels = compute_error_labels(&store);
        store.error_count = store.error_labels.iter().filter(|e| **e).count();
        store.baseline_error_rate = store.error_count as f64 / store.test.len() as f64;
        Ok(store)
    }

    pub fn n_test(&self) -> usize {
        self.test.len()
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.baseline_error_rate
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.classes.binary_search_by(|c| c.as_str().cmp(class)).is_ok()
    }

    pub fn has_embeddings(&self) -> bool {
        self.test.first().is_some_and(|r| r.embedding.is_some())
    }

    pub fn test_index(&self, id: &str) -> Option<usize> {
        self.test.iter().position(|r| r.id == id)
    }
}

fn invalid(r: &DocumentRecord, reason: impl Into<String>) -> Error {
    Error::InvalidRecord {
        id: r.id.clone(),
        reason: reason.into(),
    }
}

fn validate_record(r: &DocumentRecord, classes: &BTreeSet<String>) -> Result<()> {
    if r.id.is_empty() {
        return Err(invalid(r, "empty id"));
    }
    if !(1..=2).contains(&r.text_parts.len()) {
        return Err(invalid(
            r,
            format!("expected 1 or 2 text parts, found {}", r.text_parts.len()),
        ));
    }
    let unknown = |class: &str| Error::UnknownClass {
        id: r.id.clone(),
        class: class.to_string(),
    };
    if !classes.contains(&r.label) {
        return Err(unknown(&r.label));
    }
    match &r.prediction {
        Some(p) if !classes.contains(p) => return Err(unknown(p)),
        None if r.split == Split::Test => return Err(invalid(r, "test record without prediction")),
        _ => {}
    }
    let n_tokens = r.token_count();
    for (class, entries) in &r.attributions {
        if !classes.contains(class) {
            return Err(unknown(class));
        }
        for a in entries {
            if a.pos >= n_tokens {
                return Err(invalid(
                    r,
                    format!(
                        "attribution position {} out of range ({} tokens)",
                        a.pos, n_tokens
                    ),
                ));
            }
            if !a.score.is_finite() {
                return Err(invalid(r, "non-finite attribution score"));
            }
        }
    }
    if let Some(e) = &r.embedding {
        if e.is_empty() || e.iter().any(|v| !v.is_finite()) {
            return Err(invalid(r, "embedding must be a nonempty finite vector"));
        }
    }
    if let Some(p) = &r.projection {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(invalid(r, "non-finite projection coordinate"));
        }
    }
    for (name, v) in &r.extra_features {
        if !v.is_finite() {
            return Err(invalid(r, format!("feature {name:?} is not finite")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(id: &str, label: &str, pred: &str) -> DocumentRecord {
        DocumentRecord {
            id: id.into(),
            text_parts: vec!["a b c d e".into()],
            label: label.into(),
            prediction: Some(pred.into()),
            split: Split::Test,
            attributions: BTreeMap::new(),
            embedding: None,
            extra_features: BTreeMap::new(),
            projection: None,
        }
    }

    fn attr(token: &str, pos: usize, score: f64) -> Attribution {
        Attribution {
            token: token.into(),
            pos,
            score,
        }
    }

    #[test]
    fn baseline_counts_mispredictions() {
        let store = DatasetStore::build(vec![
            rec("1", "pos", "pos"),
            rec("2", "pos", "neg"),
            rec("3", "neg", "neg"),
            rec("4", "neg", "neg"),
        ])
        .unwrap();
        assert_eq!(store.baseline_error_rate, 0.25);
        assert_eq!(store.error_labels, vec![false, true, false, false]);
    }

    #[test]
    fn all_correct_corpus() {
        let store = DatasetStore::build(vec![rec("1", "pos", "pos"), rec("2", "neg", "neg")]).unwrap();
        assert!(store.error_labels.iter().all(|e| !e));
        assert_eq!(store.baseline_error_rate, 0.0);
    }

    #[test]
    fn empty_test_split_is_rejected() {
        let mut r = rec("1", "pos", "pos");
        r.split = Split::Train;
        assert_eq!(DatasetStore::build(vec![r]), Err(Error::NoTestRecords));
    }

    #[test]
    fn five_attributions_truncate_to_three() {
        let mut r = rec("1", "pos", "pos");
        r.attributions.insert(
            "pos".into(),
            vec![
                attr("a", 0, 0.1),
                attr("b", 1, -0.9),
                attr("c", 2, 0.3),
                attr("d", 3, 0.05),
                attr("e", 4, -0.4),
            ],
        );
        let store = DatasetStore::build(vec![r]).unwrap();
        let kept: Vec<_> = store.test[0].attributions["pos"]
            .iter()
            .map(|a| a.token.as_str())
            .collect();
        assert_eq!(kept, vec!["b", "e", "c"]);
    }

    #[test]
    fn truncation_orders_by_magnitude() {
        let mut r = rec("1", "pos", "pos");
        r.attributions.insert(
            "pos".into(),
            vec![
                attr("d", 3, -0.05),
                attr("c", 2, 0.1),
                attr("b", 1, -0.4),
                attr("a", 0, 0.5),
            ],
        );
        let r = truncate_attributions(r, 3);
        let kept: Vec<_> = r.attributions["pos"].iter().map(|a| a.token.as_str()).collect();
        assert_eq!(kept, vec!["a", "b", "c"]);
    }

    #[test]
    fn truncation_ties_prefer_earlier_positions() {
        let mut r = rec("1", "pos", "pos");
        r.attributions.insert(
            "pos".into(),
            vec![attr("a", 1, 0.2), attr("b", 7, -0.2), attr("c", 3, 0.2)],
        );
        // Oracle: stable sort on (-|score|, pos).
        let mut oracle = r.attributions["pos"].clone();
        oracle.sort_by(|x, y| {
            (-x.score.abs(), x.pos)
                .partial_cmp(&(-y.score.abs(), y.pos))
                .unwrap()
        });
        let r = truncate_attributions(r, 2);
        let kept: Vec<_> = r.attributions["pos"].iter().map(|a| a.token.clone()).collect();
        assert_eq!(kept, vec!["a", "c"]);
        assert_eq!(kept, oracle[..2].iter().map(|a| a.token.clone()).collect::<Vec<_>>());
    }

    #[test]
    fn short_lists_are_unchanged() {
        let mut r = rec("1", "pos", "pos");
        r.attributions
            .insert("pos".into(), vec![attr("a", 0, 0.2), attr("b", 1, 0.1)]);
        let before = r.clone();
        assert_eq!(truncate_attributions(r, 3), before);
    }

    #[test]
    fn declared_classes_reject_unknown_prediction() {
        let opts = StoreOptions {
            classes: Some(vec!["pos".into(), "neg".into()]),
            top_k: None,
        };
        let err = DatasetStore::build_with(vec![rec("1", "pos", "neutral")], &opts).unwrap_err();
        assert!(matches!(err, Error::UnknownClass { class, .. } if class == "neutral"));
    }

    #[test]
    fn attribution_class_must_be_known() {
        let mut r = rec("1", "pos", "pos");
        r.attributions.insert("other".into(), vec![attr("a", 0, 0.1)]);
        assert!(matches!(
            DatasetStore::build(vec![r]),
            Err(Error::UnknownClass { .. })
        ));
    }

    #[test]
    fn attribution_position_must_index_a_token() {
        let mut r = rec("1", "pos", "pos");
        r.attributions.insert("pos".into(), vec![attr("a", 5, 0.1)]);
        assert!(matches!(
            DatasetStore::build(vec![r]),
            Err(Error::InvalidRecord { .. })
        ));
    }

    #[test]
    fn mixed_embedding_dimensions_are_rejected() {
        let mut a = rec("1", "pos", "pos");
        a.embedding = Some(vec![0.0, 1.0]);
        let mut b = rec("2", "pos", "pos");
        b.embedding = Some(vec![0.0, 1.0, 2.0]);
        assert!(matches!(
            DatasetStore::build(vec![a, b]),
            Err(Error::EmbeddingDimension { expected: 2, found: 3, .. })
        ));
    }

    #[test]
    fn partial_test_embeddings_are_rejected() {
        let mut a = rec("1", "pos", "pos");
        a.embedding = Some(vec![0.0, 1.0]);
        let b = rec("2", "pos", "pos");
        assert_eq!(DatasetStore::build(vec![a, b]), Err(Error::PartialEmbeddings));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        assert_eq!(
            DatasetStore::build(vec![rec("1", "a", "a"), rec("1", "a", "a")]),
            Err(Error::DuplicateId("1".into()))
        );
    }
}
