//! Unions of at most `k` closed intervals, the carrier of all range analysis.
//!
//! Pieces are kept sorted and pairwise disjoint. When an operation would
//! produce more than `k` pieces, the two pieces separated by the smallest gap
//! are merged first, so the result is always a superset of the exact value.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Engine-wide default capacity; covers typical IN-lists.
pub const DEFAULT_K: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KInterval {
    pieces: Vec<(f64, f64)>,
    k: usize,
}

fn piece_is_valid(lo: f64, hi: f64) -> bool {
    // A piece must be a non-empty closed interval; [+inf, +inf] and
    // [-inf, -inf] contain no reals and are dropped.
    !lo.is_nan() && !hi.is_nan() && lo <= hi && lo < f64::INFINITY && hi > f64::NEG_INFINITY
}

impl KInterval {
    pub fn empty(k: usize) -> KInterval {
        KInterval { pieces: vec![], k: k.max(1) }
    }

    pub fn unbounded(k: usize) -> KInterval {
        KInterval::closed(f64::NEG_INFINITY, f64::INFINITY, k)
    }

    pub fn closed(lo: f64, hi: f64, k: usize) -> KInterval {
        let k = k.max(1);
        if piece_is_valid(lo, hi) {
            KInterval { pieces: vec![(lo, hi)], k }
        } else {
            KInterval::empty(k)
        }
    }

    pub fn point(value: f64, k: usize) -> KInterval {
        KInterval::closed(value, value, k)
    }

    pub fn from_pieces(pieces: impl IntoIterator<Item = (f64, f64)>, k: usize) -> KInterval {
        let k = k.max(1);
        let mut ps: Vec<(f64, f64)> = pieces
            .into_iter()
            .filter(|&(lo, hi)| piece_is_valid(lo, hi))
            .collect();
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(ps.len());
        for (lo, hi) in ps {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        let mut out = KInterval { pieces: merged, k };
        out.reduce_to_k();
        out
    }

    /// Merge the two pieces with the smallest gap until at most `k` remain.
    fn reduce_to_k(&mut self) {
        while self.pieces.len() > self.k {
            let mut best = 0usize;
            let mut best_gap = f64::INFINITY;
            for i in 0..self.pieces.len() - 1 {
                let gap = self.pieces[i + 1].0 - self.pieces[i].1;
                if gap < best_gap {
                    best_gap = gap;
                    best = i;
                }
            }
            let (_, hi) = self.pieces.remove(best + 1);
            self.pieces[best].1 = self.pieces[best].1.max(hi);
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn min(&self) -> Option<f64> {
        self.pieces.first().map(|p| p.0)
    }

    pub fn max(&self) -> Option<f64> {
        self.pieces.last().map(|p| p.1)
    }

    /// Both endpoints finite (and non-empty).
    pub fn is_bounded(&self) -> bool {
        match (self.min(), self.max()) {
            (Some(lo), Some(hi)) => lo.is_finite() && hi.is_finite(),
            _ => false,
        }
    }

    pub fn max_abs(&self) -> Option<f64> {
        match (self.min(), self.max()) {
            (Some(lo), Some(hi)) => Some(lo.abs().max(hi.abs())),
            _ => None,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.pieces.iter().any(|&(lo, hi)| lo <= value && value <= hi)
    }

    pub fn union(&self, other: &KInterval) -> KInterval {
        let k = self.k.max(other.k);
        KInterval::from_pieces(
            self.pieces.iter().chain(other.pieces.iter()).copied(),
            k,
        )
    }

    pub fn intersect(&self, other: &KInterval) -> KInterval {
        let k = self.k.max(other.k);
        let mut out = Vec::new();
        for &(a, b) in &self.pieces {
            for &(c, d) in &other.pieces {
                let lo = a.max(c);
                let hi = b.min(d);
                if lo <= hi {
                    out.push((lo, hi));
                }
            }
        }
        KInterval::from_pieces(out, k)
    }

    /// Convex envelope: the single interval spanning all pieces.
    pub fn hull(&self) -> KInterval {
        match (self.min(), self.max()) {
            (Some(lo), Some(hi)) => KInterval::closed(lo, hi, self.k),
            _ => KInterval::empty(self.k),
        }
    }

    /// Every piece of `other` is covered by a piece of `self`.
    pub fn is_superset_of(&self, other: &KInterval) -> bool {
        other
            .pieces
            .iter()
            .all(|&(lo, hi)| self.pieces.iter().any(|&(a, b)| a <= lo && hi <= b))
    }

    /// Tighten each piece inward to integer endpoints; pieces containing no
    /// integer are dropped.
    pub fn round_integer(&self) -> KInterval {
        let pieces = self.pieces.iter().filter_map(|&(lo, hi)| {
            let lo = if lo.is_finite() { lo.ceil() } else { lo };
            let hi = if hi.is_finite() { hi.floor() } else { hi };
            (lo <= hi).then_some((lo, hi))
        });
        KInterval::from_pieces(pieces, self.k)
    }

    /// When every piece is a single point, the finite set of values.
    pub fn singletons(&self) -> Option<Vec<f64>> {
        if self.pieces.is_empty() {
            return None;
        }
        self.pieces
            .iter()
            .map(|&(lo, hi)| (lo == hi).then_some(lo))
            .collect()
    }

    /// Integer values when the interval is a small finite set of integers.
    pub fn integer_values(&self, cap: usize) -> Option<Vec<i64>> {
        if self.pieces.is_empty() || !self.is_bounded() {
            return None;
        }
        let mut out = Vec::new();
        for &(lo, hi) in &self.pieces {
            let lo = lo.ceil() as i64;
            let hi = hi.floor() as i64;
            for v in lo..=hi {
                out.push(v);
                if out.len() > cap {
                    return None;
                }
            }
        }
        Some(out)
    }

    pub fn with_k(&self, k: usize) -> KInterval {
        KInterval::from_pieces(self.pieces.iter().copied(), k)
    }
}

fn fmt_endpoint(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

impl fmt::Display for KInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pieces.is_empty() {
            return write!(f, "{{}}");
        }
        if let Some(values) = self.singletons() {
            let parts: Vec<String> = values.iter().map(|&v| fmt_endpoint(v)).collect();
            return write!(f, "{{{}}}", parts.join(", "));
        }
        let parts: Vec<String> = self
            .pieces
            .iter()
            .map(|&(lo, hi)| format!("[{}, {}]", fmt_endpoint(lo), fmt_endpoint(hi)))
            .collect();
        write!(f, "{}", parts.join(" u "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn union_keeps_disjoint_points() {
        let a = KInterval::point(1.0, 3);
        let b = KInterval::point(2.0, 3);
        let u = a.union(&b);
        assert_eq!(u.pieces(), &[(1.0, 1.0), (2.0, 2.0)]);
    }

    #[test]
    fn union_overflow_merges_closest_gap() {
        let a = KInterval::from_pieces([(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)], 3);
        let b = KInterval::point(4.0, 3);
        let u = a.union(&b);
        assert!(u.pieces().len() <= 3);
        assert!(u.is_superset_of(&a));
        assert!(u.is_superset_of(&b));
        assert_eq!(u.min(), Some(1.0));
        assert_eq!(u.max(), Some(4.0));
    }

    #[test]
    fn union_with_empty_is_identity() {
        let a = KInterval::from_pieces([(0.0, 1.0), (5.0, 6.0)], 8);
        assert_eq!(a.union(&KInterval::empty(8)), a);
    }

    #[test]
    fn intersect_examples() {
        let a = KInterval::closed(0.0, 2.0, 8);
        let b = KInterval::closed(1.0, 3.0, 8);
        assert_eq!(a.intersect(&b).pieces(), &[(1.0, 2.0)]);

        let pts = KInterval::from_pieces([(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)], 8);
        let win = KInterval::closed(1.5, 3.5, 8);
        assert_eq!(pts.intersect(&win).pieces(), &[(2.0, 2.0), (3.0, 3.0)]);

        let c = KInterval::closed(0.0, 1.0, 8);
        let d = KInterval::closed(2.0, 3.0, 8);
        assert!(c.intersect(&d).is_empty());
    }

    #[test]
    fn touching_pieces_merge() {
        let a = KInterval::from_pieces([(0.0, 1.0), (1.0, 2.0)], 8);
        assert_eq!(a.pieces(), &[(0.0, 2.0)]);
    }

    #[test]
    fn round_integer_tightens_inward() {
        let a = KInterval::closed(0.2, 2.9, 8);
        assert_eq!(a.round_integer().pieces(), &[(1.0, 2.0)]);
        let b = KInterval::closed(0.2, 0.9, 8);
        assert!(b.round_integer().is_empty());
    }

    #[test]
    fn degenerate_infinite_points_dropped() {
        let a = KInterval::closed(f64::INFINITY, f64::INFINITY, 8);
        assert!(a.is_empty());
        let b = KInterval::closed(f64::NEG_INFINITY, 3.0, 8);
        assert!(!b.is_empty());
        assert!(!b.is_bounded());
    }

    fn arb_kinterval() -> impl Strategy<Value = KInterval> {
        proptest::collection::vec((-50i32..50, 0i32..8), 0..6).prop_map(|raw| {
            KInterval::from_pieces(
                raw.into_iter()
                    .map(|(lo, w)| (lo as f64, (lo + w) as f64)),
                4,
            )
        })
    }

    proptest! {
        #[test]
        fn union_is_superset_and_commutes(a in arb_kinterval(), b in arb_kinterval()) {
            let u = a.union(&b);
            prop_assert!(u.is_superset_of(&a));
            prop_assert!(u.is_superset_of(&b));
            prop_assert_eq!(u, b.union(&a));
            prop_assert!(a.pieces().len() <= a.k());
        }

        #[test]
        fn intersect_is_subset_and_commutes(a in arb_kinterval(), b in arb_kinterval()) {
            let i = a.intersect(&b);
            prop_assert!(a.is_superset_of(&i));
            prop_assert!(b.is_superset_of(&i));
            prop_assert_eq!(i.clone(), b.intersect(&a));
            prop_assert!(i.pieces().len() <= i.k());
        }

        #[test]
        fn membership_preserved_by_union(a in arb_kinterval(), b in arb_kinterval(), x in -60.0f64..60.0) {
            if a.contains(x) || b.contains(x) {
                prop_assert!(a.union(&b).contains(x));
            }
        }
    }
}
