//! Multisets with explicit counts and the four bag operators.

use std::collections::HashMap;
use std::hash::Hash;

/// Largest representable multiplicity. Counts are 63-bit; exceeding this is a
/// hard error rather than a wraparound.
pub const MAX_COUNT: u64 = i64::MAX as u64;

/// Bag operator over multisets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsOp {
    /// max of counts
    Union,
    /// min of counts
    Intersect,
    /// truncated subtraction of counts
    Difference,
    /// sum of counts
    Concat,
}

/// A multiset: every stored element has count >= 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multiset<T: Eq + Hash> {
    counts: HashMap<T, u64>,
}

impl<T: Eq + Hash> Default for Multiset<T> {
    fn default() -> Self {
        Multiset { counts: HashMap::new() }
    }
}

impl<T: Eq + Hash + Clone> Multiset<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, elem: T) {
        self.insert_n(elem, 1);
    }

    pub fn insert_n(&mut self, elem: T, n: u64) {
        if n == 0 {
            return;
        }
        let slot = self.counts.entry(elem).or_insert(0);
        *slot = slot
            .checked_add(n)
            .filter(|&c| c <= MAX_COUNT)
            .expect("multiset count overflow");
    }

    pub fn count(&self, elem: &T) -> u64 {
        self.counts.get(elem).copied().unwrap_or(0)
    }

    /// Total number of element occurrences.
    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of distinct elements.
    pub fn support_len(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, u64)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    pub fn into_iter_counts(self) -> impl Iterator<Item = (T, u64)> {
        self.counts.into_iter()
    }

    /// Every occurrence, with elements of count k appearing k times.
    pub fn expand(&self) -> impl Iterator<Item = &T> {
        self.counts
            .iter()
            .flat_map(|(k, &v)| std::iter::repeat(k).take(v as usize))
    }

    pub fn binop(op: MsOp, a: &Multiset<T>, b: &Multiset<T>) -> Multiset<T> {
        let mut out = Multiset::new();
        for (elem, ca) in a.iter() {
            let cb = b.count(elem);
            let c = match op {
                MsOp::Union => ca.max(cb),
                MsOp::Intersect => ca.min(cb),
                MsOp::Difference => ca.saturating_sub(cb),
                MsOp::Concat => ca.checked_add(cb).expect("multiset count overflow"),
            };
            out.insert_n(elem.clone(), c);
        }
        // Elements only present in b.
        match op {
            MsOp::Intersect | MsOp::Difference => {}
            MsOp::Union | MsOp::Concat => {
                for (elem, cb) in b.iter() {
                    if a.count(elem) == 0 {
                        out.insert_n(elem.clone(), cb);
                    }
                }
            }
        }
        out
    }
}

impl<T: Eq + Hash + Clone> FromIterator<T> for Multiset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut ms = Multiset::new();
        for elem in iter {
            ms.insert(elem);
        }
        ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(elems: &[i64]) -> Multiset<i64> {
        elems.iter().copied().collect()
    }

    #[test]
    fn intersect_takes_min_counts() {
        let out = Multiset::binop(MsOp::Intersect, &ms(&[1, 1]), &ms(&[1]));
        assert_eq!(out, ms(&[1]));
    }

    #[test]
    fn difference_truncates() {
        let out = Multiset::binop(MsOp::Difference, &ms(&[1, 1]), &ms(&[1]));
        assert_eq!(out, ms(&[1]));
        let out = Multiset::binop(MsOp::Difference, &ms(&[1]), &ms(&[1, 1]));
        assert!(out.is_empty());
    }

    #[test]
    fn union_of_empties_is_empty() {
        let out = Multiset::binop(MsOp::Union, &ms(&[]), &ms(&[]));
        assert!(out.is_empty());
    }

    #[test]
    fn concat_adds_counts() {
        let out = Multiset::binop(MsOp::Concat, &ms(&[1]), &ms(&[1, 2]));
        assert_eq!(out.count(&1), 2);
        assert_eq!(out.count(&2), 1);
        assert_eq!(out.len(), 3);
    }
}
