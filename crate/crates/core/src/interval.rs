//! The temporal site: closed integer intervals ordered by inclusion, and the
//! covering families that make the inclusion poset into a site.
//!
//! Time is discrete. An [`Interval`] `[a, b]` is the set of ticks
//! `{a, a+1, ..., b}`; a single tick `[t, t]` is a legal object and is where
//! stalks live. A [`Cover`] of `I` is a finite family of subintervals whose
//! union, as a set of ticks, is exactly `I`. Parts may overlap.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A discrete, non-negative tick.
pub type TimePoint = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntervalError {
    #[error("interval start {start} exceeds end {end}")]
    Reversed { start: TimePoint, end: TimePoint },
}

/// A closed interval of ticks. Serializes as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[TimePoint; 2]", into = "[TimePoint; 2]")]
pub struct Interval {
    start: TimePoint,
    end: TimePoint,
}

impl Interval {
    pub fn new(start: TimePoint, end: TimePoint) -> Result<Self, IntervalError> {
        if start > end {
            return Err(IntervalError::Reversed { start, end });
        }
        Ok(Self { start, end })
    }

    /// The single-tick interval `[t, t]`.
    pub fn point(t: TimePoint) -> Self {
        Self { start: t, end: t }
    }

    pub fn start(&self) -> TimePoint {
        self.start
    }

    pub fn end(&self) -> TimePoint {
        self.end
    }

    /// Number of ticks in the interval (always at least one).
    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: TimePoint) -> bool {
        self.start <= t && t <= self.end
    }

    /// Ticks strictly between the endpoints.
    pub fn interior_len(&self) -> usize {
        (self.end - self.start).saturating_sub(1) as usize
    }

    pub fn is_subinterval_of(&self, outer: &Interval) -> bool {
        is_subinterval(self, outer)
    }

    pub fn overlap(&self, other: &Interval) -> Option<Interval> {
        overlap(self, other)
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }

    pub fn ticks(&self) -> impl Iterator<Item = TimePoint> {
        self.start..=self.end
    }

    /// Offset of `t` from the start, for indexing per-tick storage.
    pub(crate) fn offset(&self, t: TimePoint) -> usize {
        debug_assert!(self.contains(t));
        (t - self.start) as usize
    }
}

impl TryFrom<[TimePoint; 2]> for Interval {
    type Error = IntervalError;

    fn try_from([start, end]: [TimePoint; 2]) -> Result<Self, Self::Error> {
        Interval::new(start, end)
    }
}

impl From<Interval> for [TimePoint; 2] {
    fn from(i: Interval) -> Self {
        [i.start, i.end]
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// The inclusion morphism test: `inner ⊆ outer`.
pub fn is_subinterval(inner: &Interval, outer: &Interval) -> bool {
    outer.start <= inner.start && inner.end <= outer.end
}

pub fn overlap(a: &Interval, b: &Interval) -> Option<Interval> {
    let start = a.start.max(b.start);
    let end = a.end.min(b.end);
    (start <= end).then_some(Interval { start, end })
}

/// A covering family of `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cover {
    pub target: Interval,
    pub parts: BTreeSet<Interval>,
}

impl Cover {
    pub fn new(target: Interval, parts: impl IntoIterator<Item = Interval>) -> Self {
        Self {
            target,
            parts: parts.into_iter().collect(),
        }
    }

    /// The trivial cover `{target}`.
    pub fn trivial(target: Interval) -> Self {
        Self::new(target, [target])
    }

    pub fn is_valid(&self) -> bool {
        validate_cover(self)
    }

    /// Replace `part` by the parts of `refinement`, which must cover it.
    /// Returns `None` when `part` is not in this cover or `refinement` does
    /// not target it.
    pub fn refine(&self, part: &Interval, refinement: &Cover) -> Option<Cover> {
        if !self.parts.contains(part) || refinement.target != *part {
            return None;
        }
        let mut parts = self.parts.clone();
        parts.remove(part);
        parts.extend(refinement.parts.iter().copied());
        Some(Cover {
            target: self.target,
            parts,
        })
    }
}

/// True iff `c` is non-empty, every part lies inside the target, and the
/// parts jointly hit every tick of the target.
pub fn validate_cover(c: &Cover) -> bool {
    if c.parts.is_empty() || !c.parts.iter().all(|p| p.is_subinterval_of(&c.target)) {
        return false;
    }
    // Parts are sorted by (start, end); sweep for the furthest covered tick.
    let mut next = c.target.start;
    for p in &c.parts {
        if p.start > next {
            return false;
        }
        if p.end >= next {
            if p.end == c.target.end {
                return true;
            }
            next = p.end + 1;
        }
    }
    false
}

/// Maximal runs of consecutive ticks covered by `intervals`.
pub fn connected_hulls(intervals: impl IntoIterator<Item = Interval>) -> Vec<Interval> {
    let mut sorted: Vec<Interval> = intervals.into_iter().collect();
    sorted.sort();
    let mut out: Vec<Interval> = Vec::new();
    for i in sorted {
        match out.last_mut() {
            Some(last) if i.start <= last.end.saturating_add(1) => {
                last.end = last.end.max(i.end);
            }
            _ => out.push(i),
        }
    }
    out
}
