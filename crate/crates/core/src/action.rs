//! Actions as history transformations, and event-calculus evaluation.
//!
//! An occurrence of an action at tick `t` transforms a section by leaving
//! every tick up to `t` untouched and forcing its initiated fluents true and
//! terminated fluents false from `t + 1` onward, until the history itself
//! shows the fluent changing again. Because the effect only reads ticks at or
//! after `t`, applying then restricting to any subinterval containing `t`
//! equals restricting then applying.
//!
//! [`EventCalculus`] answers `holds_at` queries over a narrative with a
//! per-(fluent, tick) table, and exposes the `clipped` predicate the
//! persistence rule is phrased in.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{Interval, TimePoint};
use crate::sheaf::{Section, SheafError, State};
use crate::vocab::{GroundAction, VocabError, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Sheaf(#[from] SheafError),
    #[error("precondition failed{}: `{fluent}` expected {expected}, found {found}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    PreconditionFailed {
        step: Option<usize>,
        fluent: String,
        expected: bool,
        found: bool,
    },
    #[error("tick {t} is outside {domain}")]
    TimeOutsideDomain { t: TimePoint, domain: Interval },
    #[error("plan steps must occur at strictly increasing ticks (step {0})")]
    NotStrictlyIncreasing(usize),
    #[error("second plan starts at {second} before the first ends at {first}")]
    TemporalOverlap { first: TimePoint, second: TimePoint },
}

/// Whether preconditions are enforced when an action is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditions {
    #[default]
    Checked,
    Unchecked,
}

/// A timed instance of an action schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Occurrence {
    pub action: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub at: TimePoint,
}

impl Occurrence {
    pub fn new(action: &str, args: &[&str], at: TimePoint) -> Self {
        Self {
            action: action.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
            at,
        }
    }

    pub fn ground(&self, vocab: &Vocabulary) -> Result<GroundAction, VocabError> {
        vocab.ground(&self.action, &self.args)
    }
}

impl std::fmt::Display for Occurrence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}({})@{}", self.action, self.args.join(","), self.at)
    }
}

/// A sequence of occurrences at strictly increasing ticks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Occurrence>", into = "Vec<Occurrence>")]
pub struct Plan {
    steps: Vec<Occurrence>,
}

impl Plan {
    pub fn new(steps: Vec<Occurrence>) -> Result<Self, ActionError> {
        if let Some(i) = steps.windows(2).position(|w| w[0].at >= w[1].at) {
            return Err(ActionError::NotStrictlyIncreasing(i + 1));
        }
        Ok(Self { steps })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> &[Occurrence] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl TryFrom<Vec<Occurrence>> for Plan {
    type Error = ActionError;

    fn try_from(steps: Vec<Occurrence>) -> Result<Self, Self::Error> {
        Plan::new(steps)
    }
}

impl From<Plan> for Vec<Occurrence> {
    fn from(p: Plan) -> Self {
        p.steps
    }
}

/// Ground-truth history description: an initial valuation plus occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "RawNarrative")]
pub struct Narrative {
    pub initial: State,
    occurrences: Vec<Occurrence>,
}

#[derive(Deserialize)]
struct RawNarrative {
    #[serde(default)]
    initial: State,
    #[serde(default)]
    occurrences: Vec<Occurrence>,
}

impl From<RawNarrative> for Narrative {
    fn from(raw: RawNarrative) -> Self {
        Narrative::new(raw.initial, raw.occurrences)
    }
}

impl Narrative {
    /// Occurrences are stably sorted by tick; same-tick order is kept.
    pub fn new(initial: State, mut occurrences: Vec<Occurrence>) -> Self {
        occurrences.sort_by_key(|o| o.at);
        Self {
            initial,
            occurrences,
        }
    }

    pub fn occurrences(&self) -> &[Occurrence] {
        &self.occurrences
    }

    pub fn push(&mut self, occ: Occurrence) {
        let pos = self.occurrences.partition_point(|o| o.at <= occ.at);
        self.occurrences.insert(pos, occ);
    }

    /// Ticks at which one occurrence initiates and another terminates the
    /// same fluent.
    pub fn same_tick_conflicts(
        &self,
        vocab: &Vocabulary,
    ) -> Result<Vec<(TimePoint, String)>, VocabError> {
        let mut effects: HashMap<(TimePoint, usize), (bool, bool)> = HashMap::new();
        for o in &self.occurrences {
            let g = o.ground(vocab)?;
            for &f in &g.initiates {
                effects.entry((o.at, f)).or_default().0 = true;
            }
            for &f in &g.terminates {
                effects.entry((o.at, f)).or_default().1 = true;
            }
        }
        let mut out: Vec<(TimePoint, String)> = effects
            .into_iter()
            .filter(|(_, (i, t))| *i && *t)
            .map(|((at, f), _)| (at, vocab.fluents()[f].clone()))
            .collect();
        out.sort();
        Ok(out)
    }
}

fn check_preconditions(
    vocab: &Vocabulary,
    g: &GroundAction,
    state: &[bool],
    step: Option<usize>,
) -> Result<(), ActionError> {
    for &(f, expected) in &g.preconditions {
        if state[f] != expected {
            return Err(ActionError::PreconditionFailed {
                step,
                fluent: vocab.fluents()[f].clone(),
                expected,
                found: state[f],
            });
        }
    }
    Ok(())
}

/// Apply an occurrence to a section.
pub fn apply(
    vocab: &Vocabulary,
    occ: &Occurrence,
    s: &Section,
    policy: Preconditions,
) -> Result<Section, ActionError> {
    let domain = s.domain();
    if !domain.contains(occ.at) {
        return Err(ActionError::TimeOutsideDomain { t: occ.at, domain });
    }
    let g = occ.ground(vocab)?;
    let value = |f: usize| {
        let name = &vocab.fluents()[f];
        s.value(name, occ.at)
            .ok_or_else(|| VocabError::MissingFluent(name.clone()))
    };
    if policy == Preconditions::Checked {
        for &(f, expected) in &g.preconditions {
            let found = value(f)?;
            if found != expected {
                return Err(ActionError::PreconditionFailed {
                    step: None,
                    fluent: vocab.fluents()[f].clone(),
                    expected,
                    found,
                });
            }
        }
    }
    let mut out = s.clone();
    let o = (occ.at - domain.start()) as usize;
    let effects = g
        .initiates
        .iter()
        .map(|&f| (f, true))
        .chain(g.terminates.iter().map(|&f| (f, false)));
    for (f, v) in effects {
        let name = &vocab.fluents()[f];
        let original = &s.valuation()[name];
        let values = out
            .values_mut(name)
            .ok_or_else(|| VocabError::MissingFluent(name.clone()))?;
        for j in o + 1..values.len() {
            // a change in the original history is a later event on this fluent
            if j > o + 1 && original[j] != original[j - 1] {
                break;
            }
            values[j] = v;
        }
    }
    Ok(out)
}

/// Whether applying then restricting to `sub` equals restricting then applying.
pub fn check_naturality(
    vocab: &Vocabulary,
    occ: &Occurrence,
    s: &Section,
    sub: Interval,
    policy: Preconditions,
) -> Result<bool, ActionError> {
    if !sub.contains(occ.at) {
        return Err(ActionError::TimeOutsideDomain {
            t: occ.at,
            domain: sub,
        });
    }
    let applied_then_restricted = apply(vocab, occ, s, policy)?.restrict(sub)?;
    let restricted_then_applied = apply(vocab, occ, &s.restrict(sub)?, policy)?;
    Ok(applied_then_restricted == restricted_then_applied)
}

/// Fold ground steps over a dense state.
pub(crate) fn progress_ground<'a>(
    vocab: &Vocabulary,
    state: &mut [bool],
    steps: impl IntoIterator<Item = &'a GroundAction>,
    policy: Preconditions,
) -> Result<(), ActionError> {
    for (i, g) in steps.into_iter().enumerate() {
        if policy == Preconditions::Checked {
            check_preconditions(vocab, g, state, Some(i))?;
        }
        apply_ground(g, state);
    }
    Ok(())
}

pub(crate) fn apply_ground(g: &GroundAction, state: &mut [bool]) {
    for &f in &g.terminates {
        state[f] = false;
    }
    for &f in &g.initiates {
        state[f] = true;
    }
}

/// The state reached by executing `plan` from `initial`.
pub fn progress(
    vocab: &Vocabulary,
    initial: &State,
    plan: &Plan,
    policy: Preconditions,
) -> Result<State, ActionError> {
    let mut state = vocab.encode(initial)?;
    let ground = plan
        .steps
        .iter()
        .map(|o| o.ground(vocab))
        .collect::<Result<Vec<_>, _>>()?;
    progress_ground(vocab, &mut state, &ground, policy)?;
    Ok(vocab.decode(&state))
}

/// Sequential composition; every step of `q` must follow every step of `p`.
pub fn compose(p: &Plan, q: &Plan) -> Result<Plan, ActionError> {
    if let (Some(last), Some(first)) = (p.steps.last(), q.steps.first()) {
        if first.at <= last.at {
            return Err(ActionError::TemporalOverlap {
                first: last.at,
                second: first.at,
            });
        }
    }
    let mut steps = p.steps.clone();
    steps.extend(q.steps.iter().cloned());
    Ok(Plan { steps })
}

/// Tabled evaluation context for one narrative.
///
/// The table is keyed by (fluent, tick) and dropped whenever the narrative
/// is extended.
#[derive(Debug)]
pub struct EventCalculus<'v> {
    vocab: &'v Vocabulary,
    narrative: Narrative,
    initial: Vec<bool>,
    ground: Vec<GroundAction>,
    // net effect of the occurrences at a tick; initiation wins a tie
    effects: HashMap<(usize, TimePoint), bool>,
    table: HashMap<(usize, TimePoint), bool>,
}

impl<'v> EventCalculus<'v> {
    pub fn new(vocab: &'v Vocabulary, narrative: Narrative) -> Result<Self, ActionError> {
        let initial = vocab.encode(&narrative.initial)?;
        let mut ec = Self {
            vocab,
            narrative: Narrative::new(State::new(), Vec::new()),
            initial,
            ground: Vec::new(),
            effects: HashMap::new(),
            table: HashMap::new(),
        };
        for occ in narrative.occurrences {
            ec.extend(occ)?;
        }
        ec.narrative.initial = narrative.initial;
        Ok(ec)
    }

    pub fn narrative(&self) -> &Narrative {
        &self.narrative
    }

    /// Add an occurrence after any existing ones at the same tick.
    pub fn extend(&mut self, occ: Occurrence) -> Result<(), ActionError> {
        let g = occ.ground(self.vocab)?;
        for &f in &g.terminates {
            self.effects.entry((f, occ.at)).or_insert(false);
        }
        for &f in &g.initiates {
            self.effects.insert((f, occ.at), true);
        }
        let pos = self
            .narrative
            .occurrences
            .partition_point(|o| o.at <= occ.at);
        self.ground.insert(pos, g);
        self.narrative.occurrences.insert(pos, occ);
        self.table.clear();
        Ok(())
    }

    fn index(&self, fluent: &str) -> Result<usize, ActionError> {
        self.vocab
            .fluent_index(fluent)
            .ok_or_else(|| VocabError::UnknownFluent(fluent.to_string()).into())
    }

    /// Whether `fluent` holds at `t`: it held initially or was initiated at
    /// some earlier tick, and has not been clipped since.
    pub fn holds_at(&mut self, fluent: &str, t: TimePoint) -> Result<bool, ActionError> {
        let f = self.index(fluent)?;
        Ok(self.holds_at_index(f, t))
    }

    pub(crate) fn holds_at_index(&mut self, f: usize, t: TimePoint) -> bool {
        if let Some(&v) = self.table.get(&(f, t)) {
            return v;
        }
        // Walk back to the nearest tabled tick, event, or the origin.
        let mut k = t;
        let base = loop {
            if let Some(&v) = self.table.get(&(f, k)) {
                break v;
            }
            if k == 0 {
                break self.initial[f];
            }
            if let Some(&v) = self.effects.get(&(f, k - 1)) {
                break v;
            }
            k -= 1;
        };
        for tick in k..=t {
            self.table.insert((f, tick), base);
        }
        base
    }

    /// Whether some occurrence strictly between `from` and `to` terminates
    /// `fluent`.
    pub fn clipped(
        &self,
        from: TimePoint,
        fluent: &str,
        to: TimePoint,
    ) -> Result<bool, ActionError> {
        let f = self.index(fluent)?;
        Ok(self.clipped_since(Some(from), f, to))
    }

    /// `from = None` stands for the instant before tick 0.
    pub(crate) fn clipped_since(&self, from: Option<TimePoint>, f: usize, to: TimePoint) -> bool {
        self.narrative
            .occurrences
            .iter()
            .zip(&self.ground)
            .any(|(o, g)| from.is_none_or(|s| s < o.at) && o.at < to && g.terminates.contains(&f))
    }

    /// The valuation of every fluent at `t`.
    pub fn stalk(&mut self, t: TimePoint) -> State {
        (0..self.vocab.fluents().len())
            .map(|f| (self.vocab.fluents()[f].clone(), self.holds_at_index(f, t)))
            .collect()
    }

    /// The history of the narrative over `domain`.
    pub fn section(&mut self, domain: Interval) -> Section {
        let valuation = (0..self.vocab.fluents().len())
            .map(|f| {
                let values = domain.ticks().map(|t| self.holds_at_index(f, t)).collect();
                (self.vocab.fluents()[f].clone(), values)
            })
            .collect();
        Section::new(domain, valuation).expect("one value per tick")
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }
}
