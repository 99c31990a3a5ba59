//! Fixed-length bitsets over sample indices.

use std::fmt;

const WORD: usize = 64;

/// The set of training samples that reach a subproblem.
///
/// Bits past `len` are always zero, so two sets over the same dataset can be
/// compared, hashed and counted word by word.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SupportSet {
    words: Box<[u64]>,
    len: usize,
}

impl SupportSet {
    pub fn empty(len: usize) -> Self {
        SupportSet {
            words: vec![0; len.div_ceil(WORD)].into_boxed_slice(),
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut s = Self::empty(len);
        for w in s.words.iter_mut() {
            *w = u64::MAX;
        }
        s.clear_tail();
        s
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(len: usize, indices: I) -> Self {
        let mut s = Self::empty(len);
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self::from_indices(bits.len(), bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Number of samples the set ranges over (not its cardinality).
    pub fn universe(&self) -> usize {
        self.len
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "sample index {i} out of range {}", self.len);
        self.words[i / WORD] |= 1 << (i % WORD);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.len, "sample index {i} out of range {}", self.len);
        self.words[i / WORD] &= !(1 << (i % WORD));
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// `|self ∩ other|` without materializing the intersection.
    pub fn intersection_count(&self, other: &SupportSet) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(other.words.iter())
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn intersection(&self, other: &SupportSet) -> SupportSet {
        debug_assert_eq!(self.len, other.len);
        SupportSet {
            words: self.words.iter().zip(other.words.iter()).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    /// `self ∩ other^c`.
    pub fn difference(&self, other: &SupportSet) -> SupportSet {
        debug_assert_eq!(self.len, other.len);
        SupportSet {
            words: self.words.iter().zip(other.words.iter()).map(|(a, b)| a & !b).collect(),
            len: self.len,
        }
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        debug_assert_eq!(self.len, other.len);
        SupportSet {
            words: self.words.iter().zip(other.words.iter()).map(|(a, b)| a | b).collect(),
            len: self.len,
        }
    }

    pub fn complement(&self) -> SupportSet {
        let mut s = SupportSet {
            words: self.words.iter().map(|w| !w).collect(),
            len: self.len,
        };
        s.clear_tail();
        s
    }

    pub fn is_subset(&self, other: &SupportSet) -> bool {
        self.words.iter().zip(other.words.iter()).all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> Ones<'_> {
        Ones {
            words: &self.words,
            index: 0,
            current: self.words.first().copied().unwrap_or(0),
        }
    }
}

impl fmt::Debug for SupportSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Iterator over the set bits of a [`SupportSet`], in increasing order.
pub struct Ones<'a> {
    words: &'a [u64],
    index: usize,
    current: u64,
}

impl Iterator for Ones<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(self.index * WORD + bit);
            }
            self.index += 1;
            if self.index >= self.words.len() {
                return None;
            }
            self.current = self.words[self.index];
        }
    }
}
