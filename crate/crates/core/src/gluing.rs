//! Knowledge bases as families of sections, and peer-to-peer merging.
//!
//! A [`KnowledgeBase`] keeps its family normalised: sections whose domains
//! touch or overlap are glued eagerly, so the family is a list of sections
//! over pairwise disjoint, non-adjacent intervals. Merging two bases either
//! glues everything into a larger family or fails with the complete list of
//! pointwise conflicts, leaving both inputs untouched. A failed merge can be
//! turned into an abduction query that asks what happened while the first
//! agent was not looking.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abduction::DiscrepancyQuery;
use crate::interval::{connected_hulls, Interval, TimePoint};
use crate::sheaf::{glue, Conflict, Section, SheafError, SheafRole, State};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GluingError {
    #[error("knowledge bases are over different fluent sets")]
    VocabularyMismatch,
    #[error("section fluents do not match the knowledge base")]
    FluentMismatch,
    #[error("section conflicts with existing knowledge ({} conflicts)", .0.len())]
    Conflicting(Vec<Conflict>),
    #[error("merge was not obstructed")]
    NotObstructed,
    #[error(transparent)]
    Sheaf(#[from] SheafError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MergeOutcome {
    Merged,
    AlreadyConsistent,
    Obstructed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MergeReport {
    pub outcome: MergeOutcome,
    /// Every conflicting (tick, fluent), ordered by tick then fluent.
    pub conflicts: Vec<Conflict>,
    pub result_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KnowledgeBase {
    agent_id: String,
    role: SheafRole,
    fluents: BTreeSet<String>,
    family: Vec<Section>,
    version: u64,
}

fn cross_conflicts(a: &[Section], b: &[Section]) -> Vec<Conflict> {
    let mut out: Vec<Conflict> = a
        .iter()
        .flat_map(|x| b.iter().flat_map(move |y| x.conflicts_with(y)))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Glue each connected group of a compatible family.
fn normalize(family: Vec<Section>) -> Result<Vec<Section>, SheafError> {
    let hulls = connected_hulls(family.iter().map(Section::domain));
    hulls
        .iter()
        .map(|h| glue(family.iter().filter(|s| s.domain().is_subinterval_of(h))))
        .collect()
}

impl KnowledgeBase {
    pub fn new(agent_id: impl Into<String>, fluents: impl IntoIterator<Item = String>) -> Self {
        Self {
            agent_id: agent_id.into(),
            role: SheafRole::Know,
            fluents: fluents.into_iter().collect(),
            family: Vec::new(),
            version: 0,
        }
    }

    pub fn from_sections(
        agent_id: impl Into<String>,
        fluents: impl IntoIterator<Item = String>,
        sections: impl IntoIterator<Item = Section>,
    ) -> Result<Self, GluingError> {
        let mut kb = Self::new(agent_id, fluents);
        for s in sections {
            kb.insert(s)?;
        }
        Ok(kb)
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn role(&self) -> SheafRole {
        self.role
    }

    pub fn family(&self) -> &[Section] {
        &self.family
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// The same knowledge held by another agent.
    pub fn renamed(&self, agent_id: impl Into<String>) -> Self {
        Self {
            agent_id: agent_id.into(),
            ..self.clone()
        }
    }

    fn check_fluents(&self, s: &Section) -> Result<(), GluingError> {
        if s.fluents().eq(self.fluents.iter().map(String::as_str)) {
            Ok(())
        } else {
            Err(GluingError::FluentMismatch)
        }
    }

    /// Add a section. Conflicts leave the base unchanged. Returns whether
    /// the family changed.
    pub fn insert(&mut self, s: Section) -> Result<bool, GluingError> {
        self.check_fluents(&s)?;
        let conflicts = cross_conflicts(&self.family, std::slice::from_ref(&s));
        if !conflicts.is_empty() {
            return Err(GluingError::Conflicting(conflicts));
        }
        let mut family = self.family.clone();
        family.push(s);
        let family = normalize(family)?;
        let changed = family != self.family;
        if changed {
            self.family = family;
            self.version += 1;
        }
        Ok(changed)
    }

    /// Add a section, first discarding whatever existing knowledge it
    /// contradicts. Returns whether the family changed.
    pub fn assimilate(&mut self, s: Section) -> Result<bool, GluingError> {
        self.check_fluents(&s)?;
        let before = self.family.clone();
        let mut kept = Vec::new();
        for old in std::mem::take(&mut self.family) {
            if old.is_compatible_with(&s) {
                kept.push(old);
                continue;
            }
            // keep the parts of `old` outside the new section's domain
            let d = s.domain();
            let od = old.domain();
            if od.start() < d.start() {
                kept.push(
                    old.restrict(Interval::new(od.start(), d.start() - 1).expect("non-empty"))?,
                );
            }
            if od.end() > d.end() {
                kept.push(old.restrict(Interval::new(d.end() + 1, od.end()).expect("non-empty"))?);
            }
        }
        kept.push(s);
        self.family = normalize(kept)?;
        let changed = self.family != before;
        if changed {
            self.version += 1;
        }
        Ok(changed)
    }

    /// The valuation at `t`, if some section covers it.
    pub fn stalk_at(&self, t: TimePoint) -> Option<State> {
        self.family.iter().find_map(|s| s.stalk_at(t).ok())
    }

    pub fn covers(&self, t: TimePoint) -> bool {
        self.family.iter().any(|s| s.domain().contains(t))
    }

    pub fn coverage(&self) -> Vec<Interval> {
        coverage(self)
    }
}

/// Maximal connected hulls of the family domains.
pub fn coverage(kb: &KnowledgeBase) -> Vec<Interval> {
    connected_hulls(kb.family.iter().map(Section::domain))
}

/// Merge `b` into `a`'s view.
///
/// The outcome is `AlreadyConsistent` when both bases already held the
/// merged family, `Merged` when either gains knowledge, and `Obstructed`
/// when some pair of sections disagrees; in that case the returned base is
/// `a` unchanged.
pub fn merge(
    a: &KnowledgeBase,
    b: &KnowledgeBase,
) -> Result<(KnowledgeBase, MergeReport), GluingError> {
    if a.fluents != b.fluents {
        return Err(GluingError::VocabularyMismatch);
    }
    let conflicts = cross_conflicts(&a.family, &b.family);
    if !conflicts.is_empty() {
        let report = MergeReport {
            outcome: MergeOutcome::Obstructed,
            conflicts,
            result_version: a.version,
        };
        return Ok((a.clone(), report));
    }
    let family = normalize(a.family.iter().chain(&b.family).cloned().collect())?;
    let (outcome, version) = if family == a.family && family == b.family {
        (MergeOutcome::AlreadyConsistent, a.version)
    } else {
        (MergeOutcome::Merged, a.version.max(b.version) + 1)
    };
    let merged = KnowledgeBase {
        agent_id: a.agent_id.clone(),
        role: a.role,
        fluents: a.fluents.clone(),
        family,
        version,
    };
    let report = MergeReport {
        outcome,
        conflicts: Vec::new(),
        result_version: version,
    };
    Ok((merged, report))
}

/// Build the abduction query for an obstructed merge.
///
/// The remembered state is `a`'s stalk at the earliest conflict and the
/// observed state is `b`'s. The window runs back from the conflict over the
/// ticks `a` covers but `b` does not; if there are none it is the single
/// conflict tick, which admits no explanation.
pub fn obstruction_to_query(
    report: &MergeReport,
    a: &KnowledgeBase,
    b: &KnowledgeBase,
) -> Result<DiscrepancyQuery, GluingError> {
    if report.outcome != MergeOutcome::Obstructed {
        return Err(GluingError::NotObstructed);
    }
    let t = report
        .conflicts
        .iter()
        .map(|c| c.time)
        .min()
        .ok_or(GluingError::NotObstructed)?;
    let mem = a.stalk_at(t).ok_or(GluingError::NotObstructed)?;
    let obs = b.stalk_at(t).ok_or(GluingError::NotObstructed)?;
    let mut start = t;
    while start > 0 && a.covers(start - 1) && !b.covers(start - 1) {
        start -= 1;
    }
    let window = Interval::new(start, t).expect("start never exceeds t");
    Ok(DiscrepancyQuery::new(mem, obs, window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abduction::{abduce, AbductionError, Mode};
    use crate::vocab::{ActionSchema, Literal, Vocabulary};
    use proptest::prelude::*;

    fn iv(a: TimePoint, b: TimePoint) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn section(domain: Interval, fluents: &[(&str, bool)]) -> Section {
        let state: State = fluents.iter().map(|(f, v)| (f.to_string(), *v)).collect();
        Section::constant(domain, &state)
    }

    fn names(fs: &[&str]) -> Vec<String> {
        fs.iter().map(|f| f.to_string()).collect()
    }

    fn color_vocab() -> Vocabulary {
        Vocabulary::new(
            names(&["red_c1", "blue_c1"]),
            vec![ActionSchema {
                name: "paint".into(),
                parameters: names(&["x", "from", "to"]),
                preconditions: vec![Literal {
                    fluent: "{from}_{x}".into(),
                    value: true,
                }],
                initiates: ["{to}_{x}".to_string()].into(),
                terminates: ["{from}_{x}".to_string()].into(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn cooperative_discovery_merges() {
        let fs = names(&["at_c1_1_1", "at_c2_5_5"]);
        let both = [("at_c1_1_1", true), ("at_c2_5_5", true)];
        let a = KnowledgeBase::from_sections("A", fs.clone(), [section(iv(0, 2), &both)]).unwrap();
        let b = KnowledgeBase::from_sections("B", fs, [section(iv(2, 4), &both)]).unwrap();
        let (m, report) = merge(&a, &b).unwrap();
        assert_eq!(report.outcome, MergeOutcome::Merged);
        assert!(report.conflicts.is_empty());
        assert_eq!(m.family().len(), 1);
        assert_eq!(m.family()[0].domain(), iv(0, 4));
        assert!(m.stalk_at(0).unwrap()["at_c1_1_1"]);
        assert!(m.stalk_at(4).unwrap()["at_c2_5_5"]);
        assert!(m.version() > a.version() && m.version() > b.version());
    }

    #[test]
    fn shared_history_is_already_consistent() {
        let fs = names(&["did_a"]);
        let s = Section::new(
            iv(4, 6),
            [("did_a".to_string(), vec![false, false, true])].into(),
        )
        .unwrap();
        let a = KnowledgeBase::from_sections("A", fs.clone(), [s.clone()]).unwrap();
        let b = KnowledgeBase::from_sections("B", fs, [s]).unwrap();
        let (m, report) = merge(&a, &b).unwrap();
        assert_eq!(report.outcome, MergeOutcome::AlreadyConsistent);
        assert_eq!(m.family(), a.family());
        assert_eq!(m.version(), a.version());
    }

    #[test]
    fn conflicting_perception_is_obstructed() {
        let fs = names(&["red_c1"]);
        let a =
            KnowledgeBase::from_sections("A", fs.clone(), [section(iv(3, 3), &[("red_c1", true)])])
                .unwrap();
        let b = KnowledgeBase::from_sections("B", fs, [section(iv(3, 3), &[("red_c1", false)])])
            .unwrap();
        let (m, report) = merge(&a, &b).unwrap();
        assert_eq!(report.outcome, MergeOutcome::Obstructed);
        assert_eq!(
            report.conflicts,
            vec![Conflict {
                time: 3,
                fluent: "red_c1".into(),
                a: true,
                b: false
            }]
        );
        assert_eq!(m, a);
        assert_eq!(report.result_version, a.version());
    }

    #[test]
    fn vocabulary_mismatch_is_an_error() {
        let a = KnowledgeBase::new("A", names(&["f"]));
        let b = KnowledgeBase::new("B", names(&["g"]));
        assert_eq!(merge(&a, &b).unwrap_err(), GluingError::VocabularyMismatch);
    }

    #[test]
    fn color_conflict_abduces_a_paint() {
        let v = color_vocab();
        let fs = names(&["red_c1", "blue_c1"]);
        let red = [("red_c1", true), ("blue_c1", false)];
        let blue = [("red_c1", false), ("blue_c1", true)];
        // A saw red early and still believes it; B only looked later
        let a = KnowledgeBase::from_sections("A", fs.clone(), [section(iv(0, 6), &red)]).unwrap();
        let b = KnowledgeBase::from_sections("B", fs, [section(iv(4, 6), &blue)]).unwrap();
        let (_, report) = merge(&a, &b).unwrap();
        assert_eq!(report.outcome, MergeOutcome::Obstructed);
        assert_eq!(report.conflicts.len(), 6);
        let q = obstruction_to_query(&report, &a, &b).unwrap();
        assert_eq!(q.window, iv(0, 4));
        let set = abduce(&q, &v, Mode::AllMinimal).unwrap();
        assert_eq!(set.explanations.len(), 1);
        let step = &set.explanations[0].steps.steps()[0];
        assert_eq!(
            (step.action.as_str(), step.args.clone()),
            ("paint", names(&["c1", "red", "blue"]))
        );

        // brute force over every sequence of length <= 2 agrees
        let ground = v.ground_actions();
        let mut hits = vec![];
        for len in 1..=2usize {
            for n in 0..ground.len().pow(len as u32) {
                let mut s = v.encode(&q.mem_state).unwrap();
                let mut ok = true;
                let mut seq = vec![];
                for k in 0..len {
                    let g = &ground[(n / ground.len().pow(k as u32)) % ground.len()];
                    ok &= g.preconditions.iter().all(|&(f, val)| s[f] == val);
                    crate::action::apply_ground(g, &mut s);
                    seq.push(g.args.clone());
                }
                if ok && v.decode(&s) == q.obs_state {
                    hits.push(seq);
                }
            }
        }
        let shortest = hits.iter().map(Vec::len).min().unwrap();
        let minimal: Vec<_> = hits.iter().filter(|h| h.len() == shortest).collect();
        assert_eq!(minimal, vec![&vec![names(&["c1", "red", "blue"])]]);
    }

    #[test]
    fn jointly_observed_conflict_has_empty_window() {
        let v = color_vocab();
        let fs = names(&["red_c1", "blue_c1"]);
        let a = KnowledgeBase::from_sections(
            "A",
            fs.clone(),
            [section(iv(3, 5), &[("red_c1", true), ("blue_c1", false)])],
        )
        .unwrap();
        let b = KnowledgeBase::from_sections(
            "B",
            fs,
            [section(iv(3, 5), &[("red_c1", false), ("blue_c1", true)])],
        )
        .unwrap();
        let (_, report) = merge(&a, &b).unwrap();
        let q = obstruction_to_query(&report, &a, &b).unwrap();
        assert_eq!(q.window, iv(3, 3));
        assert_eq!(
            abduce(&q, &v, Mode::AllMinimal),
            Err(AbductionError::NoExplanationWithinBound { bound: 0 })
        );
    }

    #[test]
    fn merged_report_is_not_an_obstruction() {
        let fs = names(&["f"]);
        let a = KnowledgeBase::from_sections("A", fs.clone(), [section(iv(0, 1), &[("f", true)])])
            .unwrap();
        let b = KnowledgeBase::from_sections("B", fs, [section(iv(1, 2), &[("f", true)])]).unwrap();
        let (_, report) = merge(&a, &b).unwrap();
        assert_eq!(
            obstruction_to_query(&report, &a, &b),
            Err(GluingError::NotObstructed)
        );
    }

    #[test]
    fn coverage_examples() {
        let fs = names(&["f"]);
        assert!(KnowledgeBase::new("A", fs.clone()).coverage().is_empty());
        let kb = KnowledgeBase::from_sections(
            "A",
            fs.clone(),
            [
                section(iv(0, 2), &[("f", true)]),
                section(iv(2, 4), &[("f", true)]),
            ],
        )
        .unwrap();
        assert_eq!(kb.coverage(), vec![iv(0, 4)]);
        let kb = KnowledgeBase::from_sections(
            "A",
            fs,
            [
                section(iv(0, 1), &[("f", true)]),
                section(iv(3, 4), &[("f", false)]),
            ],
        )
        .unwrap();
        assert_eq!(kb.coverage(), vec![iv(0, 1), iv(3, 4)]);
        assert_eq!(kb.family().len(), 2);
    }

    #[test]
    fn insert_and_assimilate() {
        let fs = names(&["f"]);
        let mut kb =
            KnowledgeBase::from_sections("A", fs, [section(iv(0, 4), &[("f", true)])]).unwrap();
        let v0 = kb.version();
        assert!(!kb.insert(section(iv(1, 2), &[("f", true)])).unwrap());
        assert_eq!(kb.version(), v0);
        assert!(matches!(
            kb.insert(section(iv(3, 5), &[("f", false)])),
            Err(GluingError::Conflicting(_))
        ));
        assert_eq!(kb.version(), v0);
        assert!(kb.assimilate(section(iv(3, 5), &[("f", false)])).unwrap());
        assert_eq!(kb.coverage(), vec![iv(0, 5)]);
        assert!(kb.stalk_at(2).unwrap()["f"]);
        assert!(!kb.stalk_at(4).unwrap()["f"]);
        assert!(matches!(
            kb.insert(section(iv(0, 0), &[("g", true)])),
            Err(GluingError::FluentMismatch)
        ));
    }

    /// Every single-section base (or empty base) over subintervals of `hull`.
    fn small_bases(hull: Interval, fluents: &[&str]) -> Vec<KnowledgeBase> {
        let mut out = vec![KnowledgeBase::new("K", names(fluents))];
        for a in hull.ticks() {
            for b in a..=hull.end() {
                let d = iv(a, b);
                let bits = d.len() * fluents.len();
                for mask in 0u32..(1 << bits) {
                    let valuation = fluents
                        .iter()
                        .enumerate()
                        .map(|(fi, f)| {
                            (
                                f.to_string(),
                                (0..d.len())
                                    .map(|t| mask & (1 << (fi * d.len() + t)) != 0)
                                    .collect(),
                            )
                        })
                        .collect();
                    let s = Section::new(d, valuation).unwrap();
                    out.push(KnowledgeBase::from_sections("K", names(fluents), [s]).unwrap());
                }
            }
        }
        out
    }

    fn merged_family(a: &KnowledgeBase, b: &KnowledgeBase) -> Option<KnowledgeBase> {
        let (m, r) = merge(a, b).unwrap();
        (r.outcome != MergeOutcome::Obstructed).then_some(m)
    }

    #[test]
    fn merge_is_associative_on_small_sites() {
        for (hull, fluents) in [(iv(0, 2), &["f"][..]), (iv(0, 1), &["f", "g"][..])] {
            let bases = small_bases(hull, fluents);
            for a in &bases {
                for b in &bases {
                    let Some(ab) = merged_family(a, b) else {
                        continue;
                    };
                    for c in &bases {
                        let Some(abc) = merged_family(&ab, c) else {
                            continue;
                        };
                        let bc = merged_family(b, c).expect("pairwise compatible");
                        let a_bc = merged_family(a, &bc).expect("jointly compatible");
                        assert_eq!(abc.family(), a_bc.family());
                        let ac = merged_family(a, c).expect("pairwise compatible");
                        assert_eq!(merged_family(&ac, b).unwrap().family(), abc.family());
                    }
                }
            }
        }
    }

    fn arb_kb(name: &'static str) -> impl Strategy<Value = KnowledgeBase> {
        prop::collection::vec((0u64..8, 0u64..3, any::<bool>(), any::<bool>()), 0..4).prop_map(
            move |parts| {
                let mut kb = KnowledgeBase::new(name, names(&["f", "g"]));
                for (start, w, f, g) in parts {
                    let _ = kb.insert(section(iv(start, start + w), &[("f", f), ("g", g)]));
                }
                kb
            },
        )
    }

    proptest! {
        #[test]
        fn merge_commutes(a in arb_kb("A"), b in arb_kb("B")) {
            let (ab, rab) = merge(&a, &b).unwrap();
            let (ba, rba) = merge(&b, &a).unwrap();
            prop_assert_eq!(rab.outcome, rba.outcome);
            if rab.outcome == MergeOutcome::Obstructed {
                prop_assert_eq!(&ab, &a);
                prop_assert_eq!(&ba, &b);
                let flipped: Vec<Conflict> = rba.conflicts.iter().map(|c| Conflict { time: c.time, fluent: c.fluent.clone(), a: c.b, b: c.a }).collect();
                prop_assert_eq!(rab.conflicts, flipped);
            } else {
                prop_assert_eq!(ab.family(), ba.family());
            }
        }

        #[test]
        fn merge_is_idempotent(a in arb_kb("A")) {
            let (m, r) = merge(&a, &a).unwrap();
            prop_assert_eq!(r.outcome, MergeOutcome::AlreadyConsistent);
            prop_assert_eq!(m, a);
        }

        #[test]
        fn split_then_reglue_restores(a in arb_kb("A"), cut in 0u64..12) {
            // split each section at `cut` into two bases that evolve separately
            let mut left = KnowledgeBase::new("L", names(&["f", "g"]));
            let mut right = KnowledgeBase::new("R", names(&["f", "g"]));
            for s in a.family() {
                let d = s.domain();
                if d.end() < cut {
                    left.insert(s.clone()).unwrap();
                } else if d.start() >= cut {
                    right.insert(s.clone()).unwrap();
                } else {
                    left.insert(s.restrict(iv(d.start(), cut - 1)).unwrap()).unwrap();
                    right.insert(s.restrict(iv(cut, d.end())).unwrap()).unwrap();
                }
            }
            let (m, r) = merge(&left, &right).unwrap();
            prop_assert_ne!(r.outcome, MergeOutcome::Obstructed);
            prop_assert_eq!(m.family(), a.family());
        }
    }
}
