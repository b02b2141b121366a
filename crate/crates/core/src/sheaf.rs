//! Sections of a history sheaf over the interval site.
//!
//! A [`Section`] is a total boolean valuation of a fixed fluent set over
//! every tick of its domain. Restriction is projection to a subinterval,
//! a stalk is the valuation at a single tick, and [`glue`] assembles
//! pairwise-compatible sections whose domains cover their hull into the
//! unique section that restricts back to each of them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{overlap, validate_cover, Cover, Interval, TimePoint};

/// A fluent valuation at one tick, keyed by fluent name.
pub type State = BTreeMap<String, bool>;

/// Which sheaf a knowledge container belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SheafRole {
    World,
    Mem,
    Goal,
    Know,
}

/// A pointwise disagreement between two sections.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Conflict {
    pub time: TimePoint,
    pub fluent: String,
    pub a: bool,
    pub b: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SheafError {
    #[error("{sub} is not a subinterval of {domain}")]
    NotSubinterval { sub: Interval, domain: Interval },
    #[error("tick {t} is outside {domain}")]
    OutOfDomain { t: TimePoint, domain: Interval },
    #[error("fluent `{fluent}` has {found} values, domain {domain} needs {expected}")]
    LengthMismatch {
        fluent: String,
        domain: Interval,
        expected: usize,
        found: usize,
    },
    #[error("sections are over different fluent sets")]
    FluentMismatch,
    #[error("cover is invalid or does not target the section domain")]
    InvalidCover,
    #[error("part domains do not cover the hull {hull}")]
    NotACover { hull: Interval },
    #[error("cannot glue an empty family")]
    EmptyFamily,
    #[error("sections disagree on `{}` at tick {}: {} vs {}", .0.fluent, .0.time, .0.a, .0.b)]
    IncompatibleSections(Conflict),
}

#[derive(Deserialize)]
struct RawSection {
    domain: Interval,
    valuation: BTreeMap<String, Vec<bool>>,
}

impl TryFrom<RawSection> for Section {
    type Error = SheafError;

    fn try_from(raw: RawSection) -> Result<Self, Self::Error> {
        Section::new(raw.domain, raw.valuation)
    }
}

/// A history: one boolean per (tick, fluent) over `domain`.
///
/// In `valuation`, index 0 of each vector is `domain.start()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSection")]
pub struct Section {
    domain: Interval,
    valuation: BTreeMap<String, Vec<bool>>,
}

impl Section {
    pub fn new(
        domain: Interval,
        valuation: BTreeMap<String, Vec<bool>>,
    ) -> Result<Self, SheafError> {
        for (fluent, values) in &valuation {
            if values.len() != domain.len() {
                return Err(SheafError::LengthMismatch {
                    fluent: fluent.clone(),
                    domain,
                    expected: domain.len(),
                    found: values.len(),
                });
            }
        }
        Ok(Self { domain, valuation })
    }

    /// The section that holds `state` at every tick of `domain`.
    pub fn constant(domain: Interval, state: &State) -> Self {
        let valuation = state
            .iter()
            .map(|(f, &v)| (f.clone(), vec![v; domain.len()]))
            .collect();
        Self { domain, valuation }
    }

    /// Build from consecutive stalks starting at `start`. All stalks must
    /// share the fluent set of the first.
    pub fn from_stalks(start: TimePoint, stalks: &[State]) -> Result<Self, SheafError> {
        let first = stalks.first().ok_or(SheafError::EmptyFamily)?;
        let domain = Interval::point(start).hull(&Interval::point(start + stalks.len() as u64 - 1));
        let mut valuation: BTreeMap<String, Vec<bool>> = first
            .keys()
            .map(|f| (f.clone(), Vec::with_capacity(stalks.len())))
            .collect();
        for stalk in stalks {
            if stalk.len() != valuation.len() {
                return Err(SheafError::FluentMismatch);
            }
            for (f, &v) in stalk {
                valuation
                    .get_mut(f)
                    .ok_or(SheafError::FluentMismatch)?
                    .push(v);
            }
        }
        Ok(Self { domain, valuation })
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn fluents(&self) -> impl Iterator<Item = &str> {
        self.valuation.keys().map(String::as_str)
    }

    pub fn valuation(&self) -> &BTreeMap<String, Vec<bool>> {
        &self.valuation
    }

    pub(crate) fn values_mut(&mut self, fluent: &str) -> Option<&mut Vec<bool>> {
        self.valuation.get_mut(fluent)
    }

    fn same_fluents(&self, other: &Section) -> bool {
        self.valuation.len() == other.valuation.len()
            && self
                .valuation
                .keys()
                .zip(other.valuation.keys())
                .all(|(a, b)| a == b)
    }

    /// Value of `fluent` at `t`, if both are in range.
    pub fn value(&self, fluent: &str, t: TimePoint) -> Option<bool> {
        if !self.domain.contains(t) {
            return None;
        }
        self.valuation.get(fluent).map(|v| v[self.domain.offset(t)])
    }

    pub fn restrict(&self, sub: Interval) -> Result<Section, SheafError> {
        if !sub.is_subinterval_of(&self.domain) {
            return Err(SheafError::NotSubinterval {
                sub,
                domain: self.domain,
            });
        }
        let lo = self.domain.offset(sub.start());
        let hi = self.domain.offset(sub.end());
        let valuation = self
            .valuation
            .iter()
            .map(|(f, v)| (f.clone(), v[lo..=hi].to_vec()))
            .collect();
        Ok(Section {
            domain: sub,
            valuation,
        })
    }

    pub fn stalk_at(&self, t: TimePoint) -> Result<State, SheafError> {
        if !self.domain.contains(t) {
            return Err(SheafError::OutOfDomain {
                t,
                domain: self.domain,
            });
        }
        let i = self.domain.offset(t);
        Ok(self
            .valuation
            .iter()
            .map(|(f, v)| (f.clone(), v[i]))
            .collect())
    }

    /// Append one tick at the end of the domain.
    pub fn push_stalk(&mut self, stalk: &State) -> Result<(), SheafError> {
        if stalk.len() != self.valuation.len()
            || !stalk.keys().all(|f| self.valuation.contains_key(f))
        {
            return Err(SheafError::FluentMismatch);
        }
        for (f, &v) in stalk {
            self.valuation.get_mut(f).expect("checked above").push(v);
        }
        self.domain = Interval::new(self.domain.start(), self.domain.end() + 1)
            .expect("end grows monotonically");
        Ok(())
    }

    /// Extend to `end` by repeating the last stalk. No-op if already there.
    pub fn extend_by_inertia(&mut self, end: TimePoint) {
        if end <= self.domain.end() {
            return;
        }
        let extra = (end - self.domain.end()) as usize;
        for v in self.valuation.values_mut() {
            let last = *v.last().expect("sections are never empty");
            v.extend(std::iter::repeat_n(last, extra));
        }
        self.domain = Interval::new(self.domain.start(), end).expect("end only grows");
    }

    /// Every pointwise disagreement on the overlap of two domains, ordered by
    /// tick then fluent. Fluents missing from either side are ignored.
    pub fn conflicts_with(&self, other: &Section) -> Vec<Conflict> {
        let Some(common) = overlap(&self.domain, &other.domain) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for t in common.ticks() {
            for (f, va) in &self.valuation {
                if let Some(vb) = other.valuation.get(f) {
                    let a = va[self.domain.offset(t)];
                    let b = vb[other.domain.offset(t)];
                    if a != b {
                        out.push(Conflict {
                            time: t,
                            fluent: f.clone(),
                            a,
                            b,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn is_compatible_with(&self, other: &Section) -> bool {
        self.conflicts_with(other).is_empty()
    }
}

/// Whether a pair of sections over `cover.target` witnesses no locality
/// violation: restrictions to every part agree exactly when the sections
/// are equal.
pub fn check_locality(sections: (&Section, &Section), cover: &Cover) -> Result<bool, SheafError> {
    let (a, b) = sections;
    if !validate_cover(cover) || a.domain != cover.target || b.domain != cover.target {
        return Err(SheafError::InvalidCover);
    }
    let mut agree_on_parts = true;
    for part in &cover.parts {
        if a.restrict(*part)? != b.restrict(*part)? {
            agree_on_parts = false;
            break;
        }
    }
    Ok(agree_on_parts == (a == b))
}

/// Glue a family of sections into the unique section over their hull.
///
/// Fails with [`SheafError::NotACover`] if the part domains leave a gap, and
/// with [`SheafError::IncompatibleSections`] naming the earliest conflict if
/// two parts disagree on an overlap. The result does not depend on the order
/// of `parts`.
pub fn glue<'a>(parts: impl IntoIterator<Item = &'a Section>) -> Result<Section, SheafError> {
    let mut parts: Vec<&Section> = parts.into_iter().collect();
    let first = *parts.first().ok_or(SheafError::EmptyFamily)?;
    if parts.iter().any(|p| !p.same_fluents(first)) {
        return Err(SheafError::FluentMismatch);
    }
    parts.sort_by(|a, b| (a.domain, &a.valuation).cmp(&(b.domain, &b.valuation)));

    let hull = parts.iter().fold(first.domain, |h, p| h.hull(&p.domain));
    let cover = Cover::new(hull, parts.iter().map(|p| p.domain));
    if !validate_cover(&cover) {
        return Err(SheafError::NotACover { hull });
    }

    let earliest = parts
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            parts[i + 1..]
                .iter()
                .filter_map(move |b| a.conflicts_with(b).into_iter().next())
        })
        .min();
    if let Some(c) = earliest {
        return Err(SheafError::IncompatibleSections(c));
    }

    let mut valuation: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for f in first.valuation.keys() {
        let mut values = vec![false; hull.len()];
        for p in &parts {
            let base = hull.offset(p.domain.start());
            values[base..base + p.domain.len()].copy_from_slice(&p.valuation[f]);
        }
        valuation.insert(f.clone(), values);
    }
    Ok(Section {
        domain: hull,
        valuation,
    })
}
