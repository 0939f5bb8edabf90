//! Surface tokenization and n-gram extraction.
//!
//! A token is a whitespace-separated chunk with leading and trailing
//! non-alphanumeric characters stripped, lowercased. Chunks that strip to
//! nothing are dropped. No stemming.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Longest n-gram used anywhere in the engine.
pub const MAX_NGRAM: usize = 3;

/// A normalized token with its character span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Char offset (Unicode scalar values) of the first kept character.
    pub start: usize,
    /// Char offset one past the last kept character.
    pub end: usize,
}

/// An ordered tuple of 1 to 3 normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ngram(pub Vec<String>);

impl Ngram {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Ngram(tokens.into_iter().map(Into::into).collect())
    }

    /// Parses a phrase with the same normalization as document text.
    pub fn parse(phrase: &str) -> Self {
        Ngram(tokenize(phrase).into_iter().map(|t| t.text).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    /// True if this tuple occurs contiguously in `tokens`.
    pub fn occurs_in(&self, tokens: &[String]) -> bool {
        !self.0.is_empty() && tokens.windows(self.0.len()).any(|w| w == self.0.as_slice())
    }
}

impl fmt::Display for Ngram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(t)?;
        }
        Ok(())
    }
}

/// Normalizes a single chunk: strip non-alphanumeric ends, lowercase.
pub fn normalize(chunk: &str) -> String {
    let trimmed = chunk.trim_matches(|c: char| !c.is_alphanumeric());
    trimmed.to_lowercase()
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chunk_start: Option<usize> = None;
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                push_chunk(&chars[s..i], s, &mut out);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        push_chunk(&chars[s..], s, &mut out);
    }
    out
}

fn push_chunk(chunk: &[char], offset: usize, out: &mut Vec<Token>) {
    let Some(first) = chunk.iter().position(|c| c.is_alphanumeric()) else {
        return;
    };
    let last = chunk.iter().rposition(|c| c.is_alphanumeric()).unwrap_or(first);
    let kept: String = chunk[first..=last].iter().collect();
    out.push(Token {
        text: kept.to_lowercase(),
        start: offset + first,
        end: offset + last + 1,
    });
}

pub fn token_texts(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

/// All contiguous 1..=`n_max` grams of an already tokenized sequence.
pub fn ngrams_of(tokens: &[String], n_max: usize, out: &mut BTreeSet<Ngram>) {
    for n in 1..=n_max.min(MAX_NGRAM) {
        for w in tokens.windows(n) {
            out.insert(Ngram(w.to_vec()));
        }
    }
}

/// All contiguous 1..=`n_max` grams of `text` (n_max clamped to 1..=3).
pub fn extract_ngrams(text: &str, n_max: usize) -> BTreeSet<Ngram> {
    let mut out = BTreeSet::new();
    ngrams_of(&token_texts(text), n_max.max(1), &mut out);
    out
}
