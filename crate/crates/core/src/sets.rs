//! Fixed-universe bit-vector sets.
//!
//! [`BitSet`] backs both state sets (bit per grid cell) and input sets (bit
//! per joint input index). All algebra is word-parallel and exact.

use serde::{Deserialize, Serialize};

/// A set over a fixed universe `{0, 1, ..., len-1}`, one bit per element.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitSet {
    len: usize,
    words: Vec<u64>,
}

/// Set of abstract states, indexed by grid cell.
pub type StateSet = BitSet;

/// Set of joint inputs, indexed by the mixed-radix joint codec.
pub type InputSet = BitSet;

#[inline]
fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitSet {
    pub fn empty(len: usize) -> Self {
        Self {
            len,
            words: vec![0; word_count(len)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut s = Self {
            len,
            words: vec![!0u64; word_count(len)],
        };
        s.mask_tail();
        s
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(len);
        for i in indices {
            s.insert(i);
        }
        s
    }

    /// Membership by predicate over element indices.
    pub fn from_fn(len: usize, mut pred: impl FnMut(usize) -> bool) -> Self {
        let mut s = Self::empty(len);
        for i in 0..len {
            if pred(i) {
                s.insert(i);
            }
        }
        s
    }

    fn mask_tail(&mut self) {
        let used = self.len % 64;
        if used != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << used) - 1;
            }
        }
    }

    /// Universe size (not the cardinality).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Number of members.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] & (1u64 << (i % 64)) != 0
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "index {i} out of range for universe {}", self.len);
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] &= !(1u64 << (i % 64));
    }

    pub fn union(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn union_with(&mut self, other: &Self) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn intersect_with(&mut self, other: &Self) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn difference(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
        out
    }

    pub fn complement(&self) -> Self {
        let mut out = Self {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        out.mask_tail();
        out
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let bit = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    Some(wi * 64 + bit)
                }
            })
        })
    }

    /// The `k`-th member in ascending order (0-based), if any.
    pub fn nth(&self, mut k: usize) -> Option<usize> {
        for (wi, &w) in self.words.iter().enumerate() {
            let ones = w.count_ones() as usize;
            if k < ones {
                let mut rest = w;
                for _ in 0..k {
                    rest &= rest - 1;
                }
                return Some(wi * 64 + rest.trailing_zeros() as usize);
            }
            k -= ones;
        }
        None
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn from_words(len: usize, words: Vec<u64>) -> Self {
        assert_eq!(words.len(), word_count(len));
        let mut s = Self { len, words };
        s.mask_tail();
        s
    }
}

impl std::fmt::Debug for BitSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitSet({}/{}; ", self.count(), self.len)?;
        let mut it = self.iter().take(16).peekable();
        while let Some(i) = it.next() {
            write!(f, "{i}")?;
            if it.peek().is_some() {
                write!(f, ",")?;
            }
        }
        if self.count() > 16 {
            write!(f, ",...")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algebra_matches_elementwise_membership() {
        let a = BitSet::from_indices(130, [0, 5, 64, 127, 129]);
        let b = BitSet::from_indices(130, [5, 63, 64, 128]);
        let union = a.union(&b);
        let inter = a.intersection(&b);
        let diff = a.difference(&b);
        for i in 0..130 {
            assert_eq!(union.contains(i), a.contains(i) || b.contains(i));
            assert_eq!(inter.contains(i), a.contains(i) && b.contains(i));
            assert_eq!(diff.contains(i), a.contains(i) && !b.contains(i));
        }
        assert!(inter.is_subset_of(&a) && inter.is_subset_of(&b));
        assert!(a.is_subset_of(&union));
    }

    #[test]
    fn complement_is_involutive_and_tail_masked() {
        let a = BitSet::from_indices(100, [0, 42, 99]);
        let c = a.complement();
        assert_eq!(c.count(), 97);
        assert_eq!(c.complement(), a);
        assert_eq!(a.union(&c), BitSet::full(100));
        assert!(a.intersection(&c).is_empty());
    }

    #[test]
    fn count_equals_set_bits() {
        let full = BitSet::full(77);
        assert_eq!(full.count(), 77);
        assert_eq!(BitSet::empty(77).count(), 0);
        let s = BitSet::from_indices(77, [1, 1, 2]);
        assert_eq!(s.count(), 2);
    }

    #[test]
    fn iter_and_nth_agree() {
        let s = BitSet::from_indices(200, [3, 64, 65, 130, 199]);
        let via_iter: Vec<usize> = s.iter().collect();
        assert_eq!(via_iter, vec![3, 64, 65, 130, 199]);
        for (k, &i) in via_iter.iter().enumerate() {
            assert_eq!(s.nth(k), Some(i));
        }
        assert_eq!(s.nth(5), None);
    }
}
