//! Trace records, one JSON object per line.
//!
//! Every record starts with `tick`, `seq` and `event`; the remaining keys
//! depend on the event kind and always appear in the same order.

use serde::{Deserialize, Serialize};
use stp_core::{
    Cochain64, Conflict, Interval, MergeOutcome, Occurrence, SpectralReport64, State, TimePoint,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Observe {
        agent: String,
        state: State,
    },
    #[serde(rename_all = "camelCase")]
    Act {
        agent: String,
        occurrence: Occurrence,
        executed: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Interrupt {
        agent: String,
    },
    Resume {
        agent: String,
        /// The plan the agent continues with, when it had to replan.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        replanned: Option<Vec<Occurrence>>,
    },
    /// An abductive search, after a resume (one agent) or an obstructed
    /// merge (both agents of the meeting).
    #[serde(rename_all = "camelCase")]
    Abduce {
        agents: Vec<String>,
        window: Interval,
        found: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        length: Option<usize>,
        /// The chosen minimal explanation.
        #[serde(default)]
        explanation: Vec<Occurrence>,
        /// How many minimal explanations exist.
        alternatives: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    Merge {
        agents: [String; 2],
        outcome: MergeOutcome,
        conflicts: Vec<Conflict>,
        result_version: u64,
    },
    #[serde(rename_all = "camelCase")]
    Consensus {
        converged: bool,
        iterations: Option<usize>,
        residual: Option<f64>,
        multiple_states: bool,
        state: Cochain64,
        report: SpectralReport64,
    },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Observe { .. } => "observe",
            TraceEvent::Act { .. } => "act",
            TraceEvent::Interrupt { .. } => "interrupt",
            TraceEvent::Resume { .. } => "resume",
            TraceEvent::Abduce { .. } => "abduce",
            TraceEvent::Merge { .. } => "merge",
            TraceEvent::Consensus { .. } => "consensus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: TimePoint,
    pub seq: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub(crate) fn push(&mut self, tick: TimePoint, event: TraceEvent) {
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord { tick, seq, event });
    }

    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.records.iter().map(|r| &r.event)
    }

    /// Newline-delimited JSON, one record per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }
}
