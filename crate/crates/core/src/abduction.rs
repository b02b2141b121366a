//! Abduction as a bounded pullback.
//!
//! Given a remembered state and an observed state, the explanations are the
//! ground action sequences whose execution from the remembered state ends in
//! the observed one. They are enumerated breadth-first by length, so the
//! first layer that reaches the observation holds exactly the minimal
//! explanations. States reached by several prefixes in the same layer are
//! merged into one node that remembers all of its parents.
//!
//! Explanations are untimed sequences; each is reported with its steps on
//! consecutive ticks starting just after the start of the blind window.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{apply, apply_ground, progress, ActionError, Occurrence, Plan, Preconditions};
use crate::interval::{Interval, TimePoint};
use crate::sheaf::{Section, State};
use crate::vocab::{GroundAction, VocabError, Vocabulary};

/// Upper bound on explanation length unless a query says otherwise.
pub const DEFAULT_MAX_LEN: usize = 10;

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbductionError {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("maxLen must be at least 1")]
    ZeroMaxLen,
    #[error("no explanation of length <= {bound}")]
    NoExplanationWithinBound { bound: usize },
    #[error("replaying the explanation does not reach the observed state")]
    ReconcileMismatch,
}

/// A gap between what an agent remembers and what it observes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiscrepancyQuery {
    pub mem_state: State,
    pub obs_state: State,
    /// The unobserved interval; explanation steps lie strictly inside it.
    pub window: Interval,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    /// Let hypothesised actions ignore their preconditions.
    #[serde(default)]
    pub relax_preconditions: bool,
}

impl DiscrepancyQuery {
    pub fn new(mem_state: State, obs_state: State, window: Interval) -> Self {
        Self {
            mem_state,
            obs_state,
            window,
            max_len: DEFAULT_MAX_LEN,
            relax_preconditions: false,
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn policy(&self) -> Preconditions {
        if self.relax_preconditions {
            Preconditions::Unchecked
        } else {
            Preconditions::Checked
        }
    }

    /// Longest sequence that fits both `max_len` and the window interior.
    pub fn bound(&self) -> usize {
        self.max_len.min(self.window.interior_len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    FirstMinimal,
    #[default]
    AllMinimal,
    AllUpToBound,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first-minimal" => Ok(Mode::FirstMinimal),
            "all-minimal" => Ok(Mode::AllMinimal),
            "all-up-to-bound" => Ok(Mode::AllUpToBound),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Explanation {
    pub steps: Plan,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplanationSet {
    /// Sorted by length, then lexicographically by ground-action order.
    pub explanations: Vec<Explanation>,
    /// Every sequence up to this length has been examined.
    pub exhaustive_up_to: usize,
}

impl ExplanationSet {
    pub fn minimal(&self) -> Option<&Explanation> {
        self.explanations.first()
    }
}

struct Node {
    state: Vec<bool>,
    // (index in previous layer, ground action index)
    parents: Vec<(usize, usize)>,
}

/// Breadth-first enumeration of ground-action index sequences from `start`
/// to accepted states. Returns the accepted sequences (unsorted) and the
/// depth searched exhaustively.
fn search(
    actions: &[GroundAction],
    start: Vec<bool>,
    accept: impl Fn(&[bool]) -> bool,
    bound: usize,
    mode: Mode,
    policy: Preconditions,
) -> (Vec<Vec<usize>>, usize) {
    let minimal = mode != Mode::AllUpToBound;
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    seen.insert(start.clone());
    let mut layers: Vec<Vec<Node>> = vec![vec![Node {
        state: start,
        parents: Vec::new(),
    }]];
    let mut found = Vec::new();

    for depth in 0..=bound {
        let layer = &layers[depth];
        for (i, node) in layer.iter().enumerate() {
            if accept(&node.state) {
                collect_paths(
                    &layers,
                    depth,
                    i,
                    &mut Vec::new(),
                    &mut found,
                    mode == Mode::FirstMinimal,
                );
                if mode == Mode::FirstMinimal {
                    return (found, depth);
                }
            }
        }
        if minimal && !found.is_empty() {
            return (found, depth);
        }
        if depth == bound {
            break;
        }

        let mut next: Vec<Node> = Vec::new();
        let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
        for (i, node) in layer.iter().enumerate() {
            for (a, g) in actions.iter().enumerate() {
                if policy == Preconditions::Checked
                    && g.preconditions.iter().any(|&(f, v)| node.state[f] != v)
                {
                    continue;
                }
                let mut state = node.state.clone();
                apply_ground(g, &mut state);
                if let Some(&j) = index.get(&state) {
                    if mode != Mode::FirstMinimal {
                        next[j].parents.push((i, a));
                    }
                    continue;
                }
                // in the minimal modes a state already reached earlier can
                // only lead to longer explanations
                if minimal && !seen.insert(state.clone()) {
                    continue;
                }
                index.insert(state.clone(), next.len());
                next.push(Node {
                    state,
                    parents: vec![(i, a)],
                });
            }
        }
        if next.is_empty() {
            return (found, bound);
        }
        layers.push(next);
    }
    (found, bound)
}

fn collect_paths(
    layers: &[Vec<Node>],
    depth: usize,
    node: usize,
    suffix: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    first_only: bool,
) {
    if depth == 0 {
        out.push(suffix.iter().rev().copied().collect());
        return;
    }
    for &(parent, action) in &layers[depth][node].parents {
        suffix.push(action);
        collect_paths(layers, depth - 1, parent, suffix, out, first_only);
        suffix.pop();
        if first_only {
            return;
        }
    }
}

fn to_plan(
    actions: &[GroundAction],
    vocab: &Vocabulary,
    seq: &[usize],
    first_tick: TimePoint,
) -> Plan {
    let steps = seq
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let g = &actions[a];
            Occurrence {
                action: vocab.actions()[g.schema].name.clone(),
                args: g.args.clone(),
                at: first_tick + k as TimePoint,
            }
        })
        .collect();
    Plan::new(steps).expect("consecutive ticks")
}

/// Enumerate the explanations of `q` under `mode`.
pub fn abduce(
    q: &DiscrepancyQuery,
    vocab: &Vocabulary,
    mode: Mode,
) -> Result<ExplanationSet, AbductionError> {
    if q.max_len == 0 {
        return Err(AbductionError::ZeroMaxLen);
    }
    let start = vocab.encode(&q.mem_state)?;
    let target = vocab.encode(&q.obs_state)?;
    let actions = vocab.ground_actions();
    let bound = q.bound();
    let (mut seqs, exhaustive_up_to) =
        search(actions, start, |s| s == target, bound, mode, q.policy());
    if seqs.is_empty() {
        return Err(AbductionError::NoExplanationWithinBound { bound });
    }
    seqs.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    seqs.dedup();
    if mode == Mode::FirstMinimal {
        seqs.truncate(1);
    }
    let explanations = seqs
        .iter()
        .map(|s| Explanation {
            steps: to_plan(actions, vocab, s, q.window.start() + 1),
            length: s.len(),
        })
        .collect();
    Ok(ExplanationSet {
        explanations,
        exhaustive_up_to,
    })
}

/// Whether `e` is a member of the pullback for `q`.
pub fn verify_explanation(vocab: &Vocabulary, e: &Explanation, q: &DiscrepancyQuery) -> bool {
    let in_window = e
        .steps
        .steps()
        .iter()
        .all(|o| q.window.start() < o.at && o.at < q.window.end());
    in_window
        && e.length == e.steps.len()
        && e.length <= q.max_len
        && progress(vocab, &q.mem_state, &e.steps, q.policy()).is_ok_and(|s| s == q.obs_state)
}

/// Rewrite memory across the blind window by replaying `e`, extending the
/// section by inertia up to the end of the window first if needed.
pub fn reconcile(
    vocab: &Vocabulary,
    mem: &Section,
    e: &Explanation,
    q: &DiscrepancyQuery,
) -> Result<Section, AbductionError> {
    let mut out = mem.clone();
    out.extend_by_inertia(q.window.end());
    for step in e.steps.steps() {
        out = apply(vocab, step, &out, q.policy())?;
    }
    let reached = out.stalk_at(q.window.end()).map_err(ActionError::from)?;
    if reached != q.obs_state {
        return Err(AbductionError::ReconcileMismatch);
    }
    Ok(out)
}

/// Shortest plan from `start` to any state agreeing with the (partial)
/// `goal`, with steps on consecutive ticks from `first_tick`. The same
/// breadth-first search as [`abduce`], run forward.
pub fn plan_towards(
    vocab: &Vocabulary,
    start: &State,
    goal: &State,
    first_tick: TimePoint,
    max_len: usize,
) -> Result<Option<Plan>, AbductionError> {
    let start = vocab.encode(start)?;
    let literals = goal
        .iter()
        .map(|(f, &v)| {
            vocab
                .fluent_index(f)
                .map(|i| (i, v))
                .ok_or_else(|| VocabError::UnknownFluent(f.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let actions = vocab.ground_actions();
    let accept = |s: &[bool]| literals.iter().all(|&(f, v)| s[f] == v);
    let (seqs, _) = search(
        actions,
        start,
        accept,
        max_len,
        Mode::FirstMinimal,
        Preconditions::Checked,
    );
    Ok(seqs.first().map(|s| to_plan(actions, vocab, s, first_tick)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sheaf::glue;
    use crate::vocab::{ActionSchema, Literal};

    fn blocks() -> Vocabulary {
        Vocabulary::new(
            vec!["at_A".into(), "at_B".into(), "at_C".into()],
            vec![ActionSchema {
                name: "move".into(),
                parameters: vec!["x".into(), "y".into()],
                preconditions: vec![Literal {
                    fluent: "at_{x}".into(),
                    value: true,
                }],
                initiates: ["at_{y}".to_string()].into(),
                terminates: ["at_{x}".to_string()].into(),
            }],
        )
        .unwrap()
    }

    fn iv(a: TimePoint, b: TimePoint) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn query(v: &Vocabulary, mem: &[&str], obs: &[&str], window: Interval) -> DiscrepancyQuery {
        DiscrepancyQuery::new(
            v.state_with(mem).unwrap(),
            v.state_with(obs).unwrap(),
            window,
        )
    }

    fn render(e: &Explanation) -> Vec<String> {
        e.steps
            .steps()
            .iter()
            .map(|o| format!("{}({})", o.action, o.args.join(",")))
            .collect()
    }

    #[test]
    fn identical_states_have_the_empty_explanation() {
        let v = blocks();
        let q = query(&v, &["at_A"], &["at_A"], iv(0, 6));
        for mode in [Mode::FirstMinimal, Mode::AllMinimal] {
            let set = abduce(&q, &v, mode).unwrap();
            assert_eq!(set.explanations.len(), 1);
            assert_eq!(set.explanations[0].length, 0);
            assert_eq!(set.exhaustive_up_to, 0);
        }
    }

    #[test]
    fn blocks_intervention_is_a_single_move() {
        let v = blocks();
        let q = query(&v, &["at_A"], &["at_B"], iv(3, 6));
        let set = abduce(&q, &v, Mode::AllMinimal).unwrap();
        assert_eq!(set.explanations.len(), 1);
        assert_eq!(render(&set.explanations[0]), ["move(A,B)"]);
        assert_eq!(set.explanations[0].steps.steps()[0].at, 4);

        // brute force over every sequence of length <= 2
        let ground = v.ground_actions();
        let mut hits = vec![];
        for len in 0..=2usize {
            let total = ground.len().pow(len as u32);
            for n in 0..total {
                let seq: Vec<usize> = (0..len)
                    .map(|k| (n / ground.len().pow(k as u32)) % ground.len())
                    .collect();
                let plan = to_plan(ground, &v, &seq, 4);
                if progress(&v, &q.mem_state, &plan, Preconditions::Checked)
                    .is_ok_and(|s| s == q.obs_state)
                {
                    hits.push(render(&Explanation {
                        length: len,
                        steps: plan,
                    }));
                }
            }
        }
        let shortest: Vec<_> = hits.iter().filter(|h| h.len() == 1).collect();
        assert_eq!(shortest, [&vec!["move(A,B)".to_string()]]);
        assert!(hits.contains(&vec!["move(A,C)".to_string(), "move(C,B)".to_string()]));

        let all = abduce(&q, &v, Mode::AllUpToBound).unwrap();
        assert_eq!(all.exhaustive_up_to, 2);
        assert_eq!(all.explanations.len(), hits.len());
    }

    #[test]
    fn unreachable_observation_is_reported() {
        let v = Vocabulary::new(
            vec!["at_A".into(), "at_B".into(), "lit".into()],
            blocks().actions().to_vec(),
        )
        .unwrap();
        let q = query(&v, &["at_A"], &["at_A", "lit"], iv(0, 8));
        assert_eq!(
            abduce(&q, &v, Mode::AllMinimal),
            Err(AbductionError::NoExplanationWithinBound { bound: 7 })
        );
        let narrow = query(&v, &["at_A"], &["at_B"], iv(3, 3));
        assert_eq!(
            abduce(&narrow, &v, Mode::FirstMinimal),
            Err(AbductionError::NoExplanationWithinBound { bound: 0 })
        );
        let zero = query(&v, &["at_A"], &["at_B"], iv(0, 5)).with_max_len(0);
        assert_eq!(
            abduce(&zero, &v, Mode::FirstMinimal),
            Err(AbductionError::ZeroMaxLen)
        );
    }

    #[test]
    fn verification_rejects_wrong_or_mistimed_plans() {
        let v = blocks();
        let q = query(&v, &["at_A"], &["at_B"], iv(3, 6));
        for e in abduce(&q, &v, Mode::AllUpToBound).unwrap().explanations {
            assert!(verify_explanation(&v, &e, &q));
        }
        let wrong = Explanation {
            steps: Plan::new(vec![Occurrence::new("move", &["A", "C"], 4)]).unwrap(),
            length: 1,
        };
        assert!(!verify_explanation(&v, &wrong, &q));
        let late = Explanation {
            steps: Plan::new(vec![Occurrence::new("move", &["A", "B"], 6)]).unwrap(),
            length: 1,
        };
        assert!(!verify_explanation(&v, &late, &q));
    }

    #[test]
    fn relaxed_preconditions_widen_the_pullback() {
        let v = blocks();
        // nothing anywhere; a legal move needs a block somewhere
        let q = query(&v, &[], &["at_B"], iv(0, 4));
        assert!(abduce(&q, &v, Mode::AllMinimal).is_err());
        let mut relaxed = q.clone();
        relaxed.relax_preconditions = true;
        let set = abduce(&relaxed, &v, Mode::AllMinimal).unwrap();
        // move(x,B) with x != B from the empty state: only at_B becomes true
        assert_eq!(
            set.explanations.iter().map(render).collect::<Vec<_>>(),
            [vec!["move(A,B)"], vec!["move(C,B)"]]
        );
        assert!(set
            .explanations
            .iter()
            .all(|e| verify_explanation(&v, e, &relaxed)));
    }

    #[test]
    fn determinism() {
        let v = blocks();
        let q = query(&v, &["at_A"], &["at_C"], iv(0, 5));
        for mode in [Mode::FirstMinimal, Mode::AllMinimal, Mode::AllUpToBound] {
            assert_eq!(abduce(&q, &v, mode).unwrap(), abduce(&q, &v, mode).unwrap());
        }
    }

    #[test]
    fn reconcile_examples() {
        let v = blocks();
        let q = query(&v, &["at_A"], &["at_B"], iv(3, 6));
        let mem = Section::constant(iv(0, 3), &v.state_with(&["at_A"]).unwrap());
        let e = abduce(&q, &v, Mode::FirstMinimal)
            .unwrap()
            .explanations
            .remove(0);
        let fixed = reconcile(&v, &mem, &e, &q).unwrap();
        assert_eq!(fixed.domain(), iv(0, 6));
        assert_eq!(fixed.value("at_B", 4), Some(false));
        assert_eq!(fixed.value("at_B", 5), Some(true));
        assert_eq!(fixed.stalk_at(6).unwrap(), q.obs_state);
        let fresh = Section::constant(Interval::point(6), &q.obs_state);
        assert!(glue([&fixed, &fresh]).is_ok());

        let same = query(&v, &["at_A"], &["at_A"], iv(3, 6));
        let empty = Explanation {
            steps: Plan::empty(),
            length: 0,
        };
        assert_eq!(
            reconcile(&v, &mem, &empty, &same)
                .unwrap()
                .stalk_at(6)
                .unwrap(),
            mem.stalk_at(3).unwrap()
        );
        assert_eq!(
            reconcile(&v, &mem, &empty, &q),
            Err(AbductionError::ReconcileMismatch)
        );
    }

    #[test]
    fn forward_planning_reuses_the_search() {
        let v = blocks();
        let start = v.state_with(&["at_B"]).unwrap();
        let goal: State = [("at_C".to_string(), true)].into();
        let plan = plan_towards(&v, &start, &goal, 7, 4).unwrap().unwrap();
        assert_eq!(plan.steps(), &[Occurrence::new("move", &["B", "C"], 7)]);
        let none: State = [("at_Z".to_string(), true)].into();
        assert!(plan_towards(&v, &start, &none, 7, 4).is_err());
    }

    #[test]
    fn query_wire_format_defaults() {
        let q: DiscrepancyQuery = serde_json::from_str(
            r#"{"memState":{"f":true},"obsState":{"f":false},"window":[0,4]}"#,
        )
        .unwrap();
        assert_eq!(q.max_len, 10);
        assert!(!q.relax_preconditions);
        assert_eq!(
            "all-up-to-bound".parse::<Mode>().unwrap(),
            Mode::AllUpToBound
        );
    }
}
