//! Fluent and action signatures.
//!
//! Action schemas name their fluents with templates such as `at_{x}`, where
//! `{x}` is a schema parameter. Grounding substitutes argument identifiers
//! into the templates; a ground action is legal only when every fluent it
//! mentions is declared in the vocabulary. The ground-action universe used by
//! abduction draws candidate arguments from the declared fluent names.

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sheaf::State;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("fluent name must be non-empty")]
    EmptyFluent,
    #[error("duplicate fluent `{0}`")]
    DuplicateFluent(String),
    #[error("duplicate action `{0}`")]
    DuplicateAction(String),
    #[error("action `{action}` uses undeclared parameter `{param}`")]
    UndeclaredParameter { action: String, param: String },
    #[error("action `{action}` both initiates and terminates `{fluent}`")]
    ConflictingEffects { action: String, fluent: String },
    #[error("unknown fluent `{0}`")]
    UnknownFluent(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("action `{action}` takes {expected} arguments, got {found}")]
    Arity {
        action: String,
        expected: usize,
        found: usize,
    },
    #[error("state is missing fluent `{0}`")]
    MissingFluent(String),
}

/// A fluent literal: `fluent` is expected to have `value`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub fluent: String,
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActionSchema {
    pub name: String,
    #[serde(default)]
    pub parameters: Vec<String>,
    #[serde(default)]
    pub preconditions: Vec<Literal>,
    #[serde(default)]
    pub initiates: BTreeSet<String>,
    #[serde(default)]
    pub terminates: BTreeSet<String>,
}

impl ActionSchema {
    fn templates(&self) -> impl Iterator<Item = &str> {
        self.preconditions
            .iter()
            .map(|l| l.fluent.as_str())
            .chain(self.initiates.iter().map(String::as_str))
            .chain(self.terminates.iter().map(String::as_str))
    }
}

/// An action with its arguments substituted and fluents resolved to indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundAction {
    pub schema: usize,
    pub args: Vec<String>,
    pub preconditions: Vec<(usize, bool)>,
    pub initiates: Vec<usize>,
    pub terminates: Vec<usize>,
}

#[derive(Deserialize)]
struct RawVocabulary {
    fluents: Vec<String>,
    #[serde(default)]
    actions: Vec<ActionSchema>,
}

impl TryFrom<RawVocabulary> for Vocabulary {
    type Error = VocabError;

    fn try_from(raw: RawVocabulary) -> Result<Self, Self::Error> {
        Vocabulary::new(raw.fluents, raw.actions)
    }
}

/// The fixed signature shared by every section and narrative of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawVocabulary")]
pub struct Vocabulary {
    fluents: Vec<String>,
    actions: Vec<ActionSchema>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    /// The ground-action universe, computed once.
    #[serde(skip)]
    ground: Vec<GroundAction>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.fluents == other.fluents && self.actions == other.actions
    }
}

impl Eq for Vocabulary {}

fn substitute(template: &str, params: &[String], args: &[String]) -> String {
    let mut out = template.to_string();
    for (p, a) in params.iter().zip(args) {
        out = out.replace(&format!("{{{p}}}"), a);
    }
    out
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([^{}]+)\}").expect("static pattern"));

fn placeholders(template: &str) -> Vec<String> {
    PLACEHOLDER
        .captures_iter(template)
        .map(|c| c[1].to_string())
        .collect()
}

impl Vocabulary {
    pub fn new(fluents: Vec<String>, actions: Vec<ActionSchema>) -> Result<Self, VocabError> {
        let mut index = HashMap::new();
        for (i, f) in fluents.iter().enumerate() {
            if f.is_empty() {
                return Err(VocabError::EmptyFluent);
            }
            if index.insert(f.clone(), i).is_some() {
                return Err(VocabError::DuplicateFluent(f.clone()));
            }
        }
        let mut names = BTreeSet::new();
        for a in &actions {
            if !names.insert(a.name.as_str()) {
                return Err(VocabError::DuplicateAction(a.name.clone()));
            }
            for t in a.templates() {
                for p in placeholders(t) {
                    if !a.parameters.contains(&p) {
                        return Err(VocabError::UndeclaredParameter {
                            action: a.name.clone(),
                            param: p,
                        });
                    }
                }
                if a.parameters.is_empty() && !index.contains_key(t) {
                    return Err(VocabError::UnknownFluent(t.to_string()));
                }
            }
            if let Some(f) = a.initiates.intersection(&a.terminates).next() {
                return Err(VocabError::ConflictingEffects {
                    action: a.name.clone(),
                    fluent: f.clone(),
                });
            }
        }
        let mut vocab = Self {
            fluents,
            actions,
            index,
            ground: Vec::new(),
        };
        vocab.ground = vocab.enumerate_ground_actions();
        Ok(vocab)
    }

    pub fn fluents(&self) -> &[String] {
        &self.fluents
    }

    pub fn actions(&self) -> &[ActionSchema] {
        &self.actions
    }

    pub fn fluent_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }

    fn resolve(&self, name: String) -> Result<usize, VocabError> {
        self.fluent_index(&name)
            .ok_or(VocabError::UnknownFluent(name))
    }

    /// Ground `action(args)` against this vocabulary.
    pub fn ground(&self, action: &str, args: &[String]) -> Result<GroundAction, VocabError> {
        let schema = self
            .action_index(action)
            .ok_or_else(|| VocabError::UnknownAction(action.to_string()))?;
        self.ground_schema(schema, args)
    }

    fn ground_schema(&self, schema: usize, args: &[String]) -> Result<GroundAction, VocabError> {
        let a = &self.actions[schema];
        if a.parameters.len() != args.len() {
            return Err(VocabError::Arity {
                action: a.name.clone(),
                expected: a.parameters.len(),
                found: args.len(),
            });
        }
        let sub = |t: &str| substitute(t, &a.parameters, args);
        let preconditions = a
            .preconditions
            .iter()
            .map(|l| Ok((self.resolve(sub(&l.fluent))?, l.value)))
            .collect::<Result<Vec<_>, VocabError>>()?;
        let initiates = a
            .initiates
            .iter()
            .map(|f| self.resolve(sub(f)))
            .collect::<Result<Vec<_>, _>>()?;
        let terminates = a
            .terminates
            .iter()
            .map(|f| self.resolve(sub(f)))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(f) = initiates.iter().find(|f| terminates.contains(f)) {
            return Err(VocabError::ConflictingEffects {
                action: format!("{}({})", a.name, args.join(",")),
                fluent: self.fluents[*f].clone(),
            });
        }
        Ok(GroundAction {
            schema,
            args: args.to_vec(),
            preconditions,
            initiates,
            terminates,
        })
    }

    /// Candidate argument values per parameter of `schema`, in order of first
    /// appearance when its templates are matched against the fluent list.
    fn candidates(&self, schema: &ActionSchema) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = vec![Vec::new(); schema.parameters.len()];
        let templates: BTreeSet<&str> = schema.templates().collect();
        let compiled: Vec<(Regex, Vec<usize>)> = templates
            .iter()
            .map(|t| {
                let mut pattern = String::from("^");
                let mut slots = Vec::new();
                let mut rest = *t;
                while let Some(open) = rest.find('{') {
                    let close = open + rest[open..].find('}').expect("validated template");
                    pattern.push_str(&regex::escape(&rest[..open]));
                    pattern.push_str("([A-Za-z0-9]+)");
                    let name = &rest[open + 1..close];
                    slots.push(
                        schema
                            .parameters
                            .iter()
                            .position(|p| p == name)
                            .expect("validated parameter"),
                    );
                    rest = &rest[close + 1..];
                }
                pattern.push_str(&regex::escape(rest));
                pattern.push('$');
                (Regex::new(&pattern).expect("escaped pattern"), slots)
            })
            .collect();
        for f in &self.fluents {
            for (re, slots) in &compiled {
                if let Some(caps) = re.captures(f) {
                    for (k, &slot) in slots.iter().enumerate() {
                        let v = caps[k + 1].to_string();
                        if !out[slot].contains(&v) {
                            out[slot].push(v);
                        }
                    }
                }
            }
        }
        out
    }

    /// Every legal ground action, ordered by schema, then by argument tuple
    /// (lexicographic over candidate indices).
    pub fn ground_actions(&self) -> &[GroundAction] {
        &self.ground
    }

    fn enumerate_ground_actions(&self) -> Vec<GroundAction> {
        let mut out = Vec::new();
        for (si, schema) in self.actions.iter().enumerate() {
            let cands = self.candidates(schema);
            // mixed-radix count, last argument varies fastest
            let total: usize = cands.iter().map(Vec::len).product();
            for n in 0..total {
                let mut rem = n;
                let mut args = vec![String::new(); cands.len()];
                for (slot, c) in cands.iter().enumerate().rev() {
                    args[slot] = c[rem % c.len()].clone();
                    rem /= c.len();
                }
                if let Ok(g) = self.ground_schema(si, &args) {
                    out.push(g);
                }
            }
        }
        out
    }

    /// Convert a named state to a dense vector, requiring totality.
    pub fn encode(&self, state: &State) -> Result<Vec<bool>, VocabError> {
        for f in state.keys() {
            self.resolve(f.clone())?;
        }
        self.fluents
            .iter()
            .map(|f| {
                state
                    .get(f)
                    .copied()
                    .ok_or_else(|| VocabError::MissingFluent(f.clone()))
            })
            .collect()
    }

    pub fn decode(&self, bits: &[bool]) -> State {
        self.fluents
            .iter()
            .cloned()
            .zip(bits.iter().copied())
            .collect()
    }

    /// The state with every fluent false except those listed.
    pub fn state_with(&self, true_fluents: &[&str]) -> Result<State, VocabError> {
        for f in true_fluents {
            self.resolve(f.to_string())?;
        }
        Ok(self
            .fluents
            .iter()
            .map(|f| (f.clone(), true_fluents.contains(&f.as_str())))
            .collect())
    }
}
