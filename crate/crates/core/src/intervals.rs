//! Sorted sets of `u64` stored as maximal inclusive runs.
//!
//! Observed ID spaces are dense with occasional holes, plus the odd hole
//! that spans billions of values. Runs make both cheap. A prefix-count
//! table alongside the runs gives `rank`/`select` in `O(log runs)`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Inclusive range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interval {
    pub lo: u64,
    pub hi: u64,
}

impl Interval {
    pub fn new(lo: u64, hi: u64) -> Self {
        assert!(lo <= hi, "interval lower bound {lo} exceeds upper bound {hi}");
        Self { lo, hi }
    }

    pub fn point(v: u64) -> Self {
        Self { lo: v, hi: v }
    }

    // An interval always holds at least one ID.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u64 {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, v: u64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.lo, self.hi].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [lo, hi] = <[u64; 2]>::deserialize(d)?;
        if lo > hi {
            return Err(serde::de::Error::custom(format!("interval [{lo}, {hi}] is reversed")));
        }
        Ok(Interval { lo, hi })
    }
}

/// A set of `u64` values as sorted, disjoint, non-adjacent inclusive runs.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct IdIntervalSet {
    runs: Vec<Interval>,
    /// `cum[i]` = number of elements in `runs[..i]`; `cum.len() == runs.len() + 1`.
    cum: Vec<u64>,
}

impl fmt::Debug for IdIntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.runs.iter().map(|r| (r.lo, r.hi))).finish()
    }
}

impl IdIntervalSet {
    pub fn new() -> Self {
        Self { runs: Vec::new(), cum: vec![0] }
    }

    /// Build from runs that may overlap, touch, or arrive unsorted.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(intervals: I) -> Self {
        let mut v: Vec<Interval> = intervals.into_iter().collect();
        v.sort_unstable();
        Self::from_sorted_unchecked(coalesce(v))
    }

    pub fn from_range(lo: u64, hi: u64) -> Self {
        Self::from_sorted_unchecked(vec![Interval::new(lo, hi)])
    }

    /// Build from individual values; duplicates are ignored.
    pub fn from_ids<I: IntoIterator<Item = u64>>(ids: I) -> Self {
        let mut b = IdSetBuilder::new();
        b.extend(ids);
        b.finish().0
    }

    fn from_sorted_unchecked(runs: Vec<Interval>) -> Self {
        let mut cum = Vec::with_capacity(runs.len() + 1);
        let mut acc = 0u64;
        cum.push(0);
        for r in &runs {
            acc += r.len();
            cum.push(acc);
        }
        Self { runs, cum }
    }

    pub fn runs(&self) -> &[Interval] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Number of elements.
    pub fn len(&self) -> u64 {
        *self.cum.last().unwrap_or(&0)
    }

    pub fn min(&self) -> Option<u64> {
        self.runs.first().map(|r| r.lo)
    }

    pub fn max(&self) -> Option<u64> {
        self.runs.last().map(|r| r.hi)
    }

    pub fn hull(&self) -> Option<Interval> {
        Some(Interval { lo: self.min()?, hi: self.max()? })
    }

    /// Index of the first run whose `hi >= v`.
    fn run_at_or_after(&self, v: u64) -> usize {
        self.runs.partition_point(|r| r.hi < v)
    }

    pub fn contains(&self, v: u64) -> bool {
        let i = self.run_at_or_after(v);
        i < self.runs.len() && self.runs[i].lo <= v
    }

    /// Insert one value. Returns `false` if it was already present.
    pub fn insert(&mut self, v: u64) -> bool {
        let i = self.run_at_or_after(v);
        if i < self.runs.len() && self.runs[i].lo <= v {
            return false;
        }
        let joins_left = i > 0 && self.runs[i - 1].hi.checked_add(1) == Some(v);
        let joins_right = i < self.runs.len() && v.checked_add(1) == Some(self.runs[i].lo);
        match (joins_left, joins_right) {
            (true, true) => {
                self.runs[i - 1].hi = self.runs[i].hi;
                self.runs.remove(i);
            }
            (true, false) => self.runs[i - 1].hi = v,
            (false, true) => self.runs[i].lo = v,
            (false, false) => self.runs.insert(i, Interval::point(v)),
        }
        let runs = std::mem::take(&mut self.runs);
        *self = Self::from_sorted_unchecked(runs);
        true
    }

    /// Number of elements `<= v`.
    pub fn rank(&self, v: u64) -> u64 {
        let i = self.run_at_or_after(v);
        if i < self.runs.len() && self.runs[i].lo <= v {
            self.cum[i] + (v - self.runs[i].lo + 1)
        } else {
            self.cum[i]
        }
    }

    /// The `k`-th smallest element, zero based.
    pub fn select(&self, k: u64) -> Option<u64> {
        if k >= self.len() {
            return None;
        }
        // Largest i with cum[i] <= k.
        let i = self.cum.partition_point(|&c| c <= k) - 1;
        Some(self.runs[i].lo + (k - self.cum[i]))
    }

    /// Number of elements in `[lo, hi]`.
    pub fn count_in(&self, range: Interval) -> u64 {
        let below = if range.lo == 0 { 0 } else { self.rank(range.lo - 1) };
        self.rank(range.hi) - below
    }

    /// Largest element `<= v`.
    pub fn predecessor(&self, v: u64) -> Option<u64> {
        let i = self.run_at_or_after(v);
        if i < self.runs.len() && self.runs[i].lo <= v {
            Some(v)
        } else if i > 0 {
            Some(self.runs[i - 1].hi)
        } else {
            None
        }
    }

    /// Smallest element `>= v`.
    pub fn successor(&self, v: u64) -> Option<u64> {
        let i = self.run_at_or_after(v);
        self.runs.get(i).map(|r| r.lo.max(v))
    }

    /// Set union.
    pub fn union(&self, other: &IdIntervalSet) -> IdIntervalSet {
        let mut merged = Vec::with_capacity(self.runs.len() + other.runs.len());
        let (mut a, mut b) = (self.runs.iter().peekable(), other.runs.iter().peekable());
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => {
                    if x <= y {
                        a.next()
                    } else {
                        b.next()
                    }
                }
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (None, None) => break,
            };
            merged.push(*next.unwrap());
        }
        Self::from_sorted_unchecked(coalesce(merged))
    }

    /// Values in `range` that are not in the set.
    pub fn complement_within(&self, range: Interval) -> IdIntervalSet {
        let mut out = Vec::new();
        let mut cursor = range.lo;
        let mut exhausted = false;
        let start = self.run_at_or_after(range.lo);
        for r in &self.runs[start..] {
            if r.lo > range.hi {
                break;
            }
            if r.lo > cursor {
                out.push(Interval { lo: cursor, hi: r.lo - 1 });
            }
            match r.hi.checked_add(1) {
                Some(n) if n <= range.hi => cursor = cursor.max(n),
                _ => {
                    exhausted = true;
                    break;
                }
            }
        }
        if !exhausted && cursor <= range.hi {
            out.push(Interval { lo: cursor, hi: range.hi });
        }
        Self::from_sorted_unchecked(out)
    }

    /// Values in `self` that are not in `other`.
    pub fn difference(&self, other: &IdIntervalSet) -> IdIntervalSet {
        let mut out = Vec::new();
        for r in &self.runs {
            out.extend_from_slice(other.complement_within(*r).runs());
        }
        Self::from_sorted_unchecked(out)
    }

    pub fn intersection(&self, other: &IdIntervalSet) -> IdIntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.runs.len() && j < other.runs.len() {
            if let Some(x) = self.runs[i].intersect(&other.runs[j]) {
                out.push(x);
            }
            if self.runs[i].hi < other.runs[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_sorted_unchecked(out)
    }

    /// Restrict the set to `range`.
    pub fn clip(&self, range: Interval) -> IdIntervalSet {
        let start = self.run_at_or_after(range.lo);
        let out = self.runs[start..].iter().take_while(|r| r.lo <= range.hi).filter_map(|r| r.intersect(&range)).collect();
        Self::from_sorted_unchecked(out)
    }

    pub fn is_subset(&self, other: &IdIntervalSet) -> bool {
        self.runs.iter().all(|r| other.count_in(*r) == r.len())
    }

    /// Iterate over every element. Only sensible for small sets.
    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.runs.iter().flat_map(|r| r.lo..=r.hi)
    }
}

impl Serialize for IdIntervalSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.runs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IdIntervalSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Self::from_intervals(Vec::<Interval>::deserialize(d)?))
    }
}

impl FromIterator<u64> for IdIntervalSet {
    fn from_iter<T: IntoIterator<Item = u64>>(iter: T) -> Self {
        Self::from_ids(iter)
    }
}

/// Merge a sorted run list into maximal runs.
fn coalesce(sorted: Vec<Interval>) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::with_capacity(sorted.len());
    for r in sorted {
        match out.last_mut() {
            Some(last) if last.hi == u64::MAX || r.lo <= last.hi + 1 => last.hi = last.hi.max(r.hi),
            _ => out.push(r),
        }
    }
    out
}

/// Streaming constructor that also counts duplicate values.
///
/// In-order input (the common case for dump files) extends the last run in
/// place; out-of-order values are buffered and folded in by `finish`.
#[derive(Debug, Default)]
pub struct IdSetBuilder {
    runs: Vec<Interval>,
    stray: Vec<u64>,
    duplicates: u64,
}

impl IdSetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: u64) {
        match self.runs.last_mut() {
            None => self.runs.push(Interval::point(v)),
            Some(last) if last.hi.checked_add(1) == Some(v) => last.hi = v,
            Some(last) if v > last.hi => self.runs.push(Interval::point(v)),
            Some(last) if v >= last.lo => self.duplicates += 1,
            Some(_) => self.stray.push(v),
        }
    }

    /// Returns the set and the number of duplicate values seen.
    pub fn finish(mut self) -> (IdIntervalSet, u64) {
        let ordered = IdIntervalSet::from_sorted_unchecked(self.runs);
        if self.stray.is_empty() {
            return (ordered, self.duplicates);
        }
        self.stray.sort_unstable();
        let before = self.stray.len();
        self.stray.dedup();
        self.duplicates += (before - self.stray.len()) as u64;
        let mut fresh = IdSetBuilder::new();
        for v in self.stray {
            if ordered.contains(v) {
                self.duplicates += 1;
            } else {
                fresh.push(v);
            }
        }
        let fresh = IdIntervalSet::from_sorted_unchecked(fresh.runs);
        (ordered.union(&fresh), self.duplicates)
    }
}

impl Extend<u64> for IdSetBuilder {
    fn extend<T: IntoIterator<Item = u64>>(&mut self, iter: T) {
        for v in iter {
            self.push(v);
        }
    }
}
