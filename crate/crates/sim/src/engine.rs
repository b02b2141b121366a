//! The tick loop.
//!
//! Each tick runs in a fixed order: read the world stalk; step every agent
//! (interrupt, observe, resume with abductive repair, act); hold the
//! meetings scheduled for the tick; then let the world apply the tick's
//! occurrences, whose effects show from the next tick on. Agents only read
//! the world and their own state during a step, so they may run on a thread
//! pool; their events are emitted in agent order, which keeps traces
//! identical for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use stp_core::{
    abduce, action::Preconditions, diffuse, merge, obstruction_to_query, plan_towards, progress,
    reconcile, DiscrepancyQuery, EventCalculus, Interval, KnowledgeBase, MergeOutcome, Mode,
    Occurrence, Plan, Section, State, TimePoint, Vocabulary,
};
use thiserror::Error;

use crate::scenario::{validate_scenario, AgentSpec, Scenario, ScenarioError};
use crate::trace::{Trace, TraceEvent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("cannot build thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads for the agent steps; 0 picks the machine default.
    pub threads: usize,
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub trace: Trace,
    /// The ground-truth history over `[0, horizon]`, agent actions included.
    pub world: Section,
    /// Each agent's remembered history, from its first observation on.
    pub memories: BTreeMap<String, Option<Section>>,
    pub knowledge: BTreeMap<String, KnowledgeBase>,
}

struct Agent<'s> {
    spec: &'s AgentSpec,
    mem: Option<Section>,
    /// What memory expects the next stalk to be.
    prediction: Option<State>,
    last_observed: Option<TimePoint>,
    know: KnowledgeBase,
    /// Remaining plan steps, in tick order.
    plan: Vec<Occurrence>,
}

struct Ctx<'a> {
    sc: &'a Scenario,
    vocab: &'a Vocabulary,
}

impl Ctx<'_> {
    fn query(&self, mem_state: State, obs_state: State, window: Interval) -> DiscrepancyQuery {
        let mut q =
            DiscrepancyQuery::new(mem_state, obs_state, window).with_max_len(self.sc.max_len);
        q.relax_preconditions = self.sc.relax_preconditions;
        q
    }

    fn policy(&self) -> Preconditions {
        if self.sc.relax_preconditions {
            Preconditions::Unchecked
        } else {
            Preconditions::Checked
        }
    }

    /// Run abduction and describe the result as a trace event.
    fn abduce_event(
        &self,
        agents: Vec<String>,
        q: &DiscrepancyQuery,
    ) -> (TraceEvent, Option<stp_core::Explanation>) {
        match abduce(q, self.vocab, Mode::AllMinimal) {
            Ok(set) => {
                let best = set.minimal().cloned().expect("non-empty on success");
                let event = TraceEvent::Abduce {
                    agents,
                    window: q.window,
                    found: true,
                    length: Some(best.length),
                    explanation: best.steps.steps().to_vec(),
                    alternatives: set.explanations.len(),
                    error: None,
                };
                (event, Some(best))
            }
            Err(e) => {
                let event = TraceEvent::Abduce {
                    agents,
                    window: q.window,
                    found: false,
                    length: None,
                    explanation: Vec::new(),
                    alternatives: 0,
                    error: Some(e.to_string()),
                };
                (event, None)
            }
        }
    }

    fn effects(&self, occ: &Occurrence, state: &State) -> Result<State, String> {
        let plan = Plan::new(vec![occ.clone()]).map_err(|e| e.to_string())?;
        progress(self.vocab, state, &plan, self.policy()).map_err(|e| e.to_string())
    }

    fn satisfies(goal: &State, state: &State) -> bool {
        goal.iter().all(|(f, v)| state.get(f) == Some(v))
    }
}

impl Agent<'_> {
    fn remember(&mut self, t: TimePoint, stalk: &State) -> Result<(), SimError> {
        match &mut self.mem {
            Some(m) => m
                .push_stalk(stalk)
                .map_err(|e| SimError::Internal(e.to_string())),
            None => {
                let s = Section::from_stalks(t, std::slice::from_ref(stalk))
                    .map_err(|e| SimError::Internal(e.to_string()))?;
                self.mem = Some(s);
                Ok(())
            }
        }
    }

    /// Keep the remaining plan if it still reaches the goal from `state`,
    /// otherwise search for a new one starting at `t`.
    fn replan(&mut self, ctx: &Ctx, t: TimePoint, state: &State) -> Option<Vec<Occurrence>> {
        let keeps = Plan::new(self.plan.clone())
            .ok()
            .and_then(|p| progress(ctx.vocab, state, &p, Preconditions::Checked).ok())
            .is_some_and(|end| Ctx::satisfies(&self.spec.goal, &end));
        if keeps {
            return None;
        }
        let horizon_room = (ctx.sc.horizon.saturating_sub(t)) as usize;
        match plan_towards(
            ctx.vocab,
            state,
            &self.spec.goal,
            t,
            ctx.sc.max_len.min(horizon_room),
        ) {
            Ok(Some(p)) => {
                self.plan = p.steps().to_vec();
                Some(self.plan.clone())
            }
            _ => None,
        }
    }

    fn step(
        &mut self,
        ctx: &Ctx,
        t: TimePoint,
        world: &State,
    ) -> Result<(Vec<TraceEvent>, Option<Occurrence>), SimError> {
        let id = self.spec.id.clone();
        let mut events = Vec::new();
        let interruption = self.spec.interruption;
        if interruption.is_some_and(|i| i.tick == t) {
            events.push(TraceEvent::Interrupt { agent: id.clone() });
        }
        let resuming = interruption.is_some_and(|i| i.resume_tick == t);
        let blind = self.spec.is_blind(t);
        let observing = !blind && (resuming || self.spec.observes(t));

        if observing {
            events.push(TraceEvent::Observe {
                agent: id.clone(),
                state: world.clone(),
            });
        }

        let mut repaired = false;
        if resuming {
            if let (Some(mem), Some(predicted), Some(last)) =
                (&self.mem, &self.prediction, self.last_observed)
            {
                if predicted != world {
                    let window = Interval::new(last, t).expect("last observation precedes resume");
                    let mem_state = mem
                        .stalk_at(last)
                        .map_err(|e| SimError::Internal(e.to_string()))?;
                    let q = ctx.query(mem_state, world.clone(), window);
                    let (event, best) = ctx.abduce_event(vec![id.clone()], &q);
                    events.push(event);
                    if let Some(e) = best {
                        let base = mem
                            .restrict(Interval::new(mem.domain().start(), last).expect("ordered"))
                            .map_err(|e| SimError::Internal(e.to_string()))?;
                        let fixed = reconcile(ctx.vocab, &base, &e, &q)
                            .map_err(|e| SimError::Internal(e.to_string()))?;
                        self.mem = Some(fixed);
                        repaired = true;
                    }
                }
            }
        }

        let stalk = if observing {
            Some(world.clone())
        } else {
            self.prediction.clone()
        };
        if let (false, Some(s)) = (repaired, &stalk) {
            self.remember(t, s)?;
        }
        if observing {
            self.last_observed = Some(t);
        }

        if resuming {
            self.plan.retain(|o| o.at >= t);
            let replanned = match &stalk {
                Some(s) => self.replan(ctx, t, s),
                None => None,
            };
            events.push(TraceEvent::Resume {
                agent: id.clone(),
                replanned,
            });
        }

        let mut acted = None;
        let mut next = stalk.clone();
        if self.plan.first().is_some_and(|o| o.at == t) {
            let occ = self.plan.remove(0);
            let outcome = if blind {
                Err("interrupted".to_string())
            } else {
                match &stalk {
                    Some(s) => ctx.effects(&occ, s),
                    None => Err("no knowledge of the world yet".to_string()),
                }
            };
            let (executed, reason) = match outcome {
                Ok(after) => {
                    next = Some(after);
                    acted = Some(occ.clone());
                    (true, None)
                }
                Err(r) => (false, Some(r)),
            };
            events.push(TraceEvent::Act {
                agent: id,
                occurrence: occ,
                executed,
                reason,
            });
        }
        self.prediction = next;
        Ok((events, acted))
    }
}

/// Run a scenario and return its trace.
pub fn run(sc: &Scenario) -> Result<Trace, SimError> {
    Ok(simulate(sc, RunOptions::default())?.trace)
}

/// Run a scenario, returning the trace and the final states.
pub fn simulate(sc: &Scenario, opts: RunOptions) -> Result<Outcome, SimError> {
    let diags = validate_scenario(sc);
    if !diags.is_empty() {
        return Err(ScenarioError::Invalid(diags).into());
    }
    let vocab = sc
        .vocabulary()
        .map_err(|e| SimError::Internal(e.to_string()))?;
    let ctx = Ctx { sc, vocab: &vocab };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()?;

    let mut world = EventCalculus::new(&vocab, sc.narrative())
        .map_err(|e| SimError::Internal(e.to_string()))?;
    let mut agents: Vec<Agent> = sc
        .agents
        .iter()
        .map(|spec| Agent {
            spec,
            mem: None,
            prediction: None,
            last_observed: None,
            know: KnowledgeBase::new(spec.id.clone(), sc.fluents.iter().cloned()),
            plan: spec.plan.clone(),
        })
        .collect();
    let mut trace = Trace::default();

    for t in 0..=sc.horizon {
        let stalk = world.stalk(t);
        let steps: Vec<_> = pool.install(|| {
            agents
                .par_iter_mut()
                .map(|a| a.step(&ctx, t, &stalk))
                .collect()
        });
        let mut acts = Vec::new();
        for step in steps {
            let (events, acted) = step?;
            for e in events {
                trace.push(t, e);
            }
            acts.extend(acted);
        }

        for m in sc.meetings.iter().filter(|m| m.tick == t) {
            let ia = sc.agent_index(&m.agent_a).expect("validated");
            let ib = sc.agent_index(&m.agent_b).expect("validated");
            for i in [ia, ib] {
                if let Some(mem) = agents[i].mem.clone() {
                    agents[i]
                        .know
                        .assimilate(mem)
                        .map_err(|e| SimError::Internal(e.to_string()))?;
                }
            }
            let (a, b) = (&agents[ia].know, &agents[ib].know);
            let (merged, report) = merge(a, b).map_err(|e| SimError::Internal(e.to_string()))?;
            let follow_up = if report.outcome == MergeOutcome::Obstructed {
                let q = obstruction_to_query(&report, a, b)
                    .map_err(|e| SimError::Internal(e.to_string()))?;
                let q = ctx.query(q.mem_state, q.obs_state, q.window);
                Some(
                    ctx.abduce_event(vec![m.agent_a.clone(), m.agent_b.clone()], &q)
                        .0,
                )
            } else {
                None
            };
            trace.push(
                t,
                TraceEvent::Merge {
                    agents: [m.agent_a.clone(), m.agent_b.clone()],
                    outcome: report.outcome,
                    conflicts: report.conflicts.clone(),
                    result_version: report.result_version,
                },
            );
            if let Some(e) = follow_up {
                trace.push(t, e);
            }
            if report.outcome == MergeOutcome::Merged {
                agents[ib].know = merged.renamed(m.agent_b.clone());
                agents[ia].know = merged;
            }
        }

        for occ in acts {
            world
                .extend(occ)
                .map_err(|e| SimError::Internal(e.to_string()))?;
        }
    }

    if let Some(task) = &sc.consensus {
        let mut cfg = task.config.clone();
        cfg.seed = opts.seed.unwrap_or(sc.seed);
        let out =
            diffuse(&task.sheaf, &task.x0, &cfg).map_err(|e| SimError::Internal(e.to_string()))?;
        let (iterations, residual) = match out.status {
            stp_core::spectral::DiffusionStatus::Converged { iterations } => {
                (Some(iterations), None)
            }
            stp_core::spectral::DiffusionStatus::DidNotConverge { residual, .. } => {
                (None, Some(residual))
            }
        };
        trace.push(
            sc.horizon,
            TraceEvent::Consensus {
                converged: iterations.is_some(),
                iterations,
                residual,
                multiple_states: out.report.h0_dim > task.multiple_states_above,
                state: out.state,
                report: out.report,
            },
        );
    }

    let world_section = world.section(Interval::new(0, sc.horizon).expect("0 <= horizon"));
    let memories = agents
        .iter()
        .map(|a| (a.spec.id.clone(), a.mem.clone()))
        .collect();
    let knowledge = agents
        .into_iter()
        .map(|a| (a.spec.id.clone(), a.know))
        .collect();
    Ok(Outcome {
        trace,
        world: world_section,
        memories,
        knowledge,
    })
}

/// Whether the world at the horizon, as the trace shows it, meets the
/// agent's goal on every constrained fluent.
pub fn goal_satisfied(sc: &Scenario, trace: &Trace, agent: &str) -> Result<bool, SimError> {
    let idx = sc
        .agent_index(agent)
        .ok_or_else(|| SimError::UnknownAgent(agent.to_string()))?;
    let vocab = sc
        .vocabulary()
        .map_err(|e| SimError::Internal(e.to_string()))?;
    let mut world = EventCalculus::new(&vocab, sc.narrative())
        .map_err(|e| SimError::Internal(e.to_string()))?;
    for e in trace.events() {
        if let TraceEvent::Act {
            occurrence,
            executed: true,
            ..
        } = e
        {
            world
                .extend(occurrence.clone())
                .map_err(|e| SimError::Internal(e.to_string()))?;
        }
    }
    for (f, &v) in &sc.agents[idx].goal {
        let holds = world
            .holds_at(f, sc.horizon)
            .map_err(|e| SimError::Internal(e.to_string()))?;
        if holds != v {
            return Ok(false);
        }
    }
    Ok(true)
}
