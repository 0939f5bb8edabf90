//! Rule conditions and rule metrics.
//!
//! Conditions only assert presence (a token tuple, a concept) or membership
//! in a percentile bucket. There is no negated form.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Bucket;
use crate::text::{Ngram, MAX_NGRAM};

/// Variant order is the canonical order of conditions inside a rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    Token { tokens: Ngram },
    Concept { id: u32 },
    HighLevel { feature: String, bucket: Bucket },
}

impl Condition {
    pub fn token(phrase: &str) -> Self {
        Condition::Token {
            tokens: Ngram::parse(phrase),
        }
    }

    pub fn high_level(feature: &str, bucket: Bucket) -> Self {
        Condition::HighLevel {
            feature: feature.into(),
            bucket,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Condition::Token { tokens } if tokens.is_empty() || tokens.len() > MAX_NGRAM => Err(
                Error::InvalidRule(alloc::format!("token condition must hold 1 to {MAX_NGRAM} tokens")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Token { tokens } => write!(f, "contains \"{tokens}\""),
            Condition::Concept { id } => write!(f, "concept #{id}"),
            Condition::HighLevel { feature, bucket } => write!(f, "{feature} = {bucket}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub support_count: usize,
    pub support_fraction: f64,
    pub error_count: usize,
    pub error_rate: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    pub metrics: RuleMetrics,
}

/// Sorts conditions canonically and rejects empty, duplicate or malformed
/// condition lists.
pub fn canonicalize(mut conditions: Vec<Condition>, max_conditions: usize) -> Result<Vec<Condition>> {
    if conditions.is_empty() {
        return Err(Error::InvalidRule("a rule needs at least one condition".into()));
    }
    if conditions.len() > max_conditions {
        return Err(Error::InvalidRule(alloc::format!(
            "{} conditions exceed the maximum of {max_conditions}",
            conditions.len()
        )));
    }
    for c in &conditions {
        c.validate()?;
    }
    conditions.sort();
    if conditions.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidRule("duplicate condition".into()));
    }
    Ok(conditions)
}

/// Stable byte key of a canonical condition list, used to derive per-rule
/// bootstrap seeds.
pub fn conditions_key(conditions: &[Condition]) -> Vec<u8> {
    let mut key = Vec::new();
    for c in conditions {
        key.extend_from_slice(alloc::format!("{c}").as_bytes());
        key.push(0);
    }
    key
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn canonical_order_is_kind_then_value() {
        let c = canonicalize(
            vec![
                Condition::high_level("overlap", Bucket::Low),
                Condition::Concept { id: 2 },
                Condition::token("island"),
            ],
            3,
        )
        .unwrap();
        assert!(matches!(c[0], Condition::Token { .. }));
        assert!(matches!(c[1], Condition::Concept { .. }));
        assert!(matches!(c[2], Condition::HighLevel { .. }));
    }

    #[test]
    fn duplicates_and_overlong_rules_are_rejected() {
        assert!(canonicalize(vec![Condition::token("a"), Condition::token("A")], 2).is_err());
        assert!(canonicalize(
            vec![Condition::token("a"), Condition::token("b"), Condition::token("c")],
            2
        )
        .is_err());
        assert!(canonicalize(vec![], 2).is_err());
        assert!(canonicalize(vec![Condition::token("a b c d")], 2).is_err());
    }
}
