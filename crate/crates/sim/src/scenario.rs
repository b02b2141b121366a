//! Scenario files and their validation.
//!
//! A scenario is plain JSON with the keys `seed, horizon, fluents, actions,
//! world, agents, meetings, consensus` (plus the optional `exclusive`,
//! `maxLen` and `relaxPreconditions`). Loading only checks the syntax;
//! [`validate_scenario`] reports every semantic problem as a [`Diagnostic`]
//! with a field path.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use stp_core::abduction::DEFAULT_MAX_LEN;
use stp_core::spectral::lambda_max;
use stp_core::{
    ActionSchema, CellularSheaf64, Cochain64, DiffusionConfig64, EventCalculus, Interval,
    Narrative, Occurrence, Plan, State, TimePoint, Vocabulary,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario is invalid:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

/// One validation problem, located by a JSON-style field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WorldSpec {
    /// Fluents not listed start false.
    #[serde(default)]
    pub initial: State,
    #[serde(default)]
    pub occurrences: Vec<Occurrence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Interruption {
    pub tick: TimePoint,
    pub resume_tick: TimePoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentSpec {
    pub id: String,
    /// Required valuation at the horizon; unlisted fluents are unconstrained.
    #[serde(default)]
    pub goal: State,
    #[serde(default)]
    pub plan: Vec<Occurrence>,
    #[serde(default)]
    pub observation_windows: Vec<Interval>,
    #[serde(default)]
    pub interruption: Option<Interruption>,
}

impl AgentSpec {
    pub fn observes(&self, t: TimePoint) -> bool {
        self.observation_windows.iter().any(|w| w.contains(t))
    }

    /// Blind from the interruption tick up to, not including, the resume tick.
    pub fn is_blind(&self, t: TimePoint) -> bool {
        self.interruption
            .is_some_and(|i| i.tick <= t && t < i.resume_tick)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Meeting {
    pub tick: TimePoint,
    pub agent_a: String,
    pub agent_b: String,
}

fn default_threshold() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsensusTask {
    pub sheaf: CellularSheaf64,
    pub x0: Cochain64,
    /// The delay schedule is seeded from the scenario seed; a `seed` given
    /// here is ignored.
    pub config: DiffusionConfig64,
    /// `h0` above this counts as several mutually exclusive agreements.
    #[serde(default = "default_threshold")]
    pub multiple_states_above: usize,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub seed: u64,
    pub horizon: TimePoint,
    pub fluents: Vec<String>,
    #[serde(default)]
    pub actions: Vec<ActionSchema>,
    /// Groups of fluents of which at most one may hold (one-hot encodings).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusive: Vec<BTreeSet<String>>,
    pub world: WorldSpec,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub meetings: Vec<Meeting>,
    #[serde(default)]
    pub consensus: Option<ConsensusTask>,
    /// Bound on abduced explanations.
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub relax_preconditions: bool,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parse and validate in one step.
    pub fn load(text: &str) -> Result<Self, ScenarioError> {
        let sc = Self::from_json(text)?;
        let diags = validate_scenario(&sc);
        if diags.is_empty() {
            Ok(sc)
        } else {
            Err(ScenarioError::Invalid(diags))
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary, stp_core::vocab::VocabError> {
        Vocabulary::new(self.fluents.clone(), self.actions.clone())
    }

    /// The complete initial valuation, closed-world.
    pub fn initial_state(&self) -> State {
        self.fluents
            .iter()
            .map(|f| {
                (
                    f.clone(),
                    self.world.initial.get(f).copied().unwrap_or(false),
                )
            })
            .collect()
    }

    pub fn narrative(&self) -> Narrative {
        Narrative::new(self.initial_state(), self.world.occurrences.clone())
    }

    pub fn agent_index(&self, id: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }
}

struct Diags(Vec<Diagnostic>);

impl Diags {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn check_state(d: &mut Diags, path: &str, state: &State, fluents: &BTreeSet<&str>) {
    for f in state.keys() {
        if !fluents.contains(f.as_str()) {
            d.push(format!("{path}.{f}"), "unknown fluent");
        }
    }
}

fn check_exclusive(d: &mut Diags, path: &str, state: &State, groups: &[BTreeSet<String>]) {
    for (g, group) in groups.iter().enumerate() {
        let on: Vec<&str> = group
            .iter()
            .filter(|f| state.get(*f).copied().unwrap_or(false))
            .map(String::as_str)
            .collect();
        if on.len() > 1 {
            d.push(
                path,
                format!(
                    "exclusive group {g} has several true fluents: {}",
                    on.join(", ")
                ),
            );
        }
    }
}

/// Every problem with `sc`; empty iff it can be run.
pub fn validate_scenario(sc: &Scenario) -> Vec<Diagnostic> {
    let mut d = Diags(Vec::new());
    let fluents: BTreeSet<&str> = sc.fluents.iter().map(String::as_str).collect();
    let vocab = match sc.vocabulary() {
        Ok(v) => Some(v),
        Err(e) => {
            d.push("actions", e.to_string());
            None
        }
    };
    if sc.max_len == 0 {
        d.push("maxLen", "must be at least 1");
    }

    for (g, group) in sc.exclusive.iter().enumerate() {
        for f in group {
            if !fluents.contains(f.as_str()) {
                d.push(format!("exclusive[{g}]"), format!("unknown fluent `{f}`"));
            }
        }
    }

    check_state(&mut d, "world.initial", &sc.world.initial, &fluents);
    check_exclusive(&mut d, "world.initial", &sc.initial_state(), &sc.exclusive);
    let mut world_ok = true;
    for (i, o) in sc.world.occurrences.iter().enumerate() {
        let path = format!("world.occurrences[{i}]");
        if o.at > sc.horizon {
            d.push(
                &path,
                format!("tick {} is after the horizon {}", o.at, sc.horizon),
            );
        }
        if let Some(v) = &vocab {
            if let Err(e) = o.ground(v) {
                d.push(&path, e.to_string());
                world_ok = false;
            }
        }
    }
    if let (Some(v), true) = (&vocab, world_ok) {
        let narrative = sc.narrative();
        if let Ok(conflicts) = narrative.same_tick_conflicts(v) {
            for (t, f) in conflicts {
                d.push(
                    "world.occurrences",
                    format!("tick {t}: `{f}` is both initiated and terminated"),
                );
            }
        }
        if !sc.exclusive.is_empty() {
            if let Ok(mut ec) = EventCalculus::new(v, narrative) {
                for t in 1..=sc.horizon {
                    check_exclusive(&mut d, &format!("world@{t}"), &ec.stalk(t), &sc.exclusive);
                }
            }
        }
    }

    let mut ids = BTreeMap::new();
    for (i, a) in sc.agents.iter().enumerate() {
        let path = format!("agents[{i}]");
        if a.id.is_empty() {
            d.push(format!("{path}.id"), "empty agent id");
        }
        if let Some(first) = ids.insert(a.id.as_str(), i) {
            d.push(
                format!("{path}.id"),
                format!("duplicate agent id `{}` (also agents[{first}])", a.id),
            );
        }
        check_state(&mut d, &format!("{path}.goal"), &a.goal, &fluents);
        if let Err(e) = Plan::new(a.plan.clone()) {
            d.push(format!("{path}.plan"), e.to_string());
        }
        for (k, o) in a.plan.iter().enumerate() {
            if o.at > sc.horizon {
                d.push(
                    format!("{path}.plan[{k}]"),
                    format!("tick {} is after the horizon {}", o.at, sc.horizon),
                );
            }
            if let Some(v) = &vocab {
                if let Err(e) = o.ground(v) {
                    d.push(format!("{path}.plan[{k}]"), e.to_string());
                }
            }
        }
        for (k, w) in a.observation_windows.iter().enumerate() {
            if w.end() > sc.horizon {
                d.push(
                    format!("{path}.observationWindows[{k}]"),
                    format!("{w} extends past the horizon {}", sc.horizon),
                );
            }
        }
        if let Some(int) = a.interruption {
            if int.tick >= int.resume_tick {
                d.push(
                    format!("{path}.interruption"),
                    "tick must precede resumeTick",
                );
            }
            if int.resume_tick > sc.horizon {
                d.push(
                    format!("{path}.interruption.resumeTick"),
                    "after the horizon",
                );
            }
        }
    }

    for (i, m) in sc.meetings.iter().enumerate() {
        let path = format!("meetings[{i}]");
        if m.tick > sc.horizon {
            d.push(format!("{path}.tick"), "after the horizon");
        }
        for (key, id) in [("agentA", &m.agent_a), ("agentB", &m.agent_b)] {
            if !ids.contains_key(id.as_str()) {
                d.push(format!("{path}.{key}"), format!("unknown agent `{id}`"));
            }
        }
        if m.agent_a == m.agent_b {
            d.push(&path, "an agent cannot meet itself");
        }
    }

    if let Some(c) = &sc.consensus {
        if let Err(e) = c.x0.check(&c.sheaf) {
            d.push("consensus.x0", e.to_string());
        }
        if c.config.alpha.is_nan() || c.config.alpha <= 0.0 {
            d.push("consensus.config.alpha", "must be positive");
        }
        if c.config.tol.is_nan() || c.config.tol <= 0.0 {
            d.push("consensus.config.tol", "must be positive");
        }
        if c.config.max_iters == 0 {
            d.push("consensus.config.maxIters", "must be positive");
        }
        if c.config.enforce_stability {
            let lmax = lambda_max(&c.sheaf.laplacian());
            if lmax > 0.0 && c.config.alpha >= 2.0 / lmax {
                d.push(
                    "consensus.config.alpha",
                    format!(
                        "{} is not below the stability limit {}",
                        c.config.alpha,
                        2.0 / lmax
                    ),
                );
            }
        }
    }
    d.0
}
