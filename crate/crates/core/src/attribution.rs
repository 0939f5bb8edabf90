//! Subpopulation-level aggregation of per-token attribution scores.
//!
//! For a class `C` and subpopulation `X*`, `cnt_pos(t)` counts documents in
//! `X*` whose retained attribution list for `C` gives `t` a positive score,
//! `cnt_neg(t)` a negative one. Only the top entries kept at ingest are
//! considered. A token listed several times in one document is counted once,
//! by the sign of its summed score; a zero score counts in neither.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::DatasetStore;
use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignCounts {
    pub cnt_pos: usize,
    pub cnt_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedAttribution {
    pub class: String,
    pub subpop_size: usize,
    pub counts: BTreeMap<String, SignCounts>,
}

impl AggregatedAttribution {
    pub fn empty(class: &str) -> Self {
        Self {
            class: class.into(),
            subpop_size: 0,
            counts: BTreeMap::new(),
        }
    }

    pub fn get(&self, token: &str) -> SignCounts {
        self.counts.get(token).copied().unwrap_or_default()
    }

    /// Elementwise sum; valid for disjoint subpopulations of the same class.
    pub fn merge(&mut self, other: &AggregatedAttribution) {
        debug_assert_eq!(self.class, other.class);
        self.subpop_size += other.subpop_size;
        for (t, c) in &other.counts {
            let e = self.counts.entry(t.clone()).or_default();
            e.cnt_pos += c.cnt_pos;
            e.cnt_neg += c.cnt_neg;
        }
    }
}

/// Aggregation key of an attribution token: normalized like document text,
/// or the raw string when normalization leaves nothing (e.g. `"."`).
pub fn attribution_key(token: &str) -> String {
    let n = text::normalize(token);
    if n.is_empty() {
        token.into()
    } else {
        n
    }
}

/// Counts over the test records at indices `subpop`.
pub fn aggregate_counts(subpop: &[usize], class: &str, store: &DatasetStore) -> Result<AggregatedAttribution> {
    if !store.has_class(class) {
        return Err(Error::UnknownClassName(class.into()));
    }
    let mut agg = AggregatedAttribution::empty(class);
    for &d in subpop {
        let record = store
            .test
            .get(d)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("test index {d} out of range")))?;
        agg.subpop_size += 1;
        let Some(entries) = record.attributions.get(class) else {
            continue;
        };
        let mut per_token: BTreeMap<String, f64> = BTreeMap::new();
        for a in entries {
            *per_token.entry(attribution_key(&a.token)).or_default() += a.score;
        }
        for (token, score) in per_token {
            let c = agg.counts.entry(token).or_default();
            if score > 0.0 {
                c.cnt_pos += 1;
            } else if score < 0.0 {
                c.cnt_neg += 1;
            }
        }
    }
    agg.counts.retain(|_, c| c.cnt_pos + c.cnt_neg > 0);
    Ok(agg)
}

/// Tokens for the bar chart: by `cnt_pos` descending when positive counts
/// dominate overall (ties count as positive), else by `cnt_neg` descending;
/// equal counts fall back to token order.
pub fn chart_order(agg: &AggregatedAttribution) -> Vec<String> {
    let total_pos: usize = agg.counts.values().map(|c| c.cnt_pos).sum();
    let total_neg: usize = agg.counts.values().map(|c| c.cnt_neg).sum();
    let by_pos = total_pos >= total_neg;
    let mut tokens: Vec<(&String, &SignCounts)> = agg.counts.iter().collect();
    tokens.sort_by(|(ta, a), (tb, b)| {
        let (ka, kb) = if by_pos {
            (a.cnt_pos, b.cnt_pos)
        } else {
            (a.cnt_neg, b.cnt_neg)
        };
        kb.cmp(&ka).then(ta.cmp(tb))
    });
    tokens.into_iter().map(|(t, _)| t.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Attribution, DocumentRecord, Split};
    use alloc::vec;

    fn doc(id: usize, entries: &[(&str, f64)]) -> DocumentRecord {
        let mut attributions = BTreeMap::new();
        attributions.insert(
            "pos".into(),
            entries
                .iter()
                .enumerate()
                .map(|(i, (t, s))| Attribution {
                    token: (*t).into(),
                    pos: i,
                    score: *s,
                })
                .collect(),
        );
        DocumentRecord {
            id: alloc::format!("{id}"),
            text_parts: vec!["w0 w1 w2 w3".into()],
            label: "pos".into(),
            prediction: Some("neg".into()),
            split: Split::Test,
            attributions,
            embedding: None,
            extra_features: BTreeMap::new(),
            projection: None,
        }
    }

    fn counts(pairs: &[(&str, usize, usize)]) -> AggregatedAttribution {
        AggregatedAttribution {
            class: "pos".into(),
            subpop_size: 0,
            counts: pairs
                .iter()
                .map(|(t, p, n)| {
                    (
                        (*t).into(),
                        SignCounts {
                            cnt_pos: *p,
                            cnt_neg: *n,
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn direct_count() {
        let store = DatasetStore::build(vec![
            doc(0, &[("t", 0.1)]),
            doc(1, &[("t", -0.2)]),
            doc(2, &[("t", 0.3), ("u", 0.0)]),
        ])
        .unwrap();
        let agg = aggregate_counts(&[0, 1, 2], "pos", &store).unwrap();
        assert_eq!(agg.get("t"), SignCounts { cnt_pos: 2, cnt_neg: 1 });
        assert_eq!(agg.get("u"), SignCounts::default());
        assert_eq!(agg.get("absent"), SignCounts::default());
        assert_eq!(agg.subpop_size, 3);
    }

    #[test]
    fn unknown_class_is_an_error() {
        let store = DatasetStore::build(vec![doc(0, &[("t", 0.1)])]).unwrap();
        assert_eq!(
            aggregate_counts(&[0], "nope", &store),
            Err(Error::UnknownClassName("nope".into()))
        );
    }

    #[test]
    fn positive_dominance_sorts_by_cnt_pos() {
        assert_eq!(chart_order(&counts(&[("b", 3, 1), ("a", 5, 0)])), vec!["a", "b"]);
    }

    #[test]
    fn negative_dominance_sorts_by_cnt_neg() {
        assert_eq!(chart_order(&counts(&[("a", 0, 2), ("b", 0, 7)])), vec!["b", "a"]);
    }

    #[test]
    fn balanced_totals_use_the_positive_branch() {
        // pos total 4 == neg total 4; by cnt_pos: a(3) before b(1).
        assert_eq!(chart_order(&counts(&[("a", 3, 0), ("b", 1, 4)])), vec!["a", "b"]);
    }

    #[test]
    fn attribution_keys_are_normalized() {
        assert_eq!(attribution_key("Island,"), "island");
        assert_eq!(attribution_key("."), ".");
    }
}
