//! Fixed-universe bit sets over test-document indices.

use alloc::vec;
use alloc::vec::Vec;

/// A set of document indices in `0..len`, stored as packed 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DocSet {
    words: Vec<u64>,
    len: usize,
}

impl DocSet {
    pub fn empty(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut set = Self {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        set.clear_tail();
        set
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(len: usize, indices: I) -> Self {
        let mut set = Self::empty(len);
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn from_bools(flags: &[bool]) -> Self {
        Self::from_indices(
            flags.len(),
            flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i),
        )
    }

    /// Size of the universe, not the number of members.
    pub fn universe(&self) -> usize {
        self.len
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "index {i} outside universe {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn intersect_with(&mut self, other: &DocSet) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= *b;
        }
    }

    pub fn union_with(&mut self, other: &DocSet) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    pub fn intersection(&self, other: &DocSet) -> DocSet {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    /// `|self ∩ other|` without allocating.
    pub fn intersection_count(&self, other: &DocSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// `|self ∩ a ∩ b|` without allocating.
    pub fn intersection_count3(&self, a: &DocSet, b: &DocSet) -> usize {
        self.words
            .iter()
            .zip(&a.words)
            .zip(&b.words)
            .map(|((x, y), z)| (x & y & z).count_ones() as usize)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            core::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_set_respects_universe() {
        let s = DocSet::full(130);
        assert_eq!(s.count(), 130);
        assert!(!s.contains(130));
        assert_eq!(s.iter().last(), Some(129));
    }

    #[test]
    fn intersection_counts_agree() {
        let a = DocSet::from_indices(200, (0..200).filter(|i| i % 2 == 0));
        let b = DocSet::from_indices(200, (0..200).filter(|i| i % 3 == 0));
        let c = DocSet::from_indices(200, (0..200).filter(|i| i % 5 == 0));
        assert_eq!(a.intersection_count(&b), 34);
        assert_eq!(a.intersection(&b).count(), 34);
        assert_eq!(a.intersection_count3(&b, &c), 7);
    }

    #[test]
    fn iter_yields_sorted_members() {
        let s = DocSet::from_indices(100, [63, 0, 64, 99]);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 63, 64, 99]);
    }
}
