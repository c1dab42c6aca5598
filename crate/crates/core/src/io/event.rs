//! The append-only event record and its newline-delimited JSON encoding.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Assertion, Money, OptionId, ParticipantId, PositionId, Roster, RoomId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleOption {
    pub id: OptionId,
    pub label: String,
    pub salary: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RoundOutcome {
    Pick { option: OptionId, salary: Money },
    /// `None` when nobody submitted an estimate.
    Estimate { value: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    Join {
        participant: ParticipantId,
        room: RoomId,
    },
    Leave {
        participant: ParticipantId,
    },
    Chat {
        text: String,
    },
    AgentPost {
        source_room: RoomId,
        cycle: u64,
        assertions: Vec<Assertion>,
        text: String,
    },
    /// Posted to every room when the event has no room.
    SystemPost {
        text: String,
    },
    RoundStart {
        round: usize,
        position: Option<PositionId>,
        opened_at: u64,
        closes_at: u64,
        feasible: Vec<FeasibleOption>,
        remaining_budget: Money,
    },
    Vote {
        option: OptionId,
    },
    RoundEnd {
        round: usize,
        outcome: RoundOutcome,
    },
    BudgetUpdate {
        remaining_budget: Money,
    },
    RosterFinal {
        roster: Roster,
    },
    EstimateSubmit {
        value: f64,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Join { .. } => "Join",
            EventBody::Leave { .. } => "Leave",
            EventBody::Chat { .. } => "Chat",
            EventBody::AgentPost { .. } => "AgentPost",
            EventBody::SystemPost { .. } => "SystemPost",
            EventBody::RoundStart { .. } => "RoundStart",
            EventBody::Vote { .. } => "Vote",
            EventBody::RoundEnd { .. } => "RoundEnd",
            EventBody::BudgetUpdate { .. } => "BudgetUpdate",
            EventBody::RosterFinal { .. } => "RosterFinal",
            EventBody::EstimateSubmit { .. } => "EstimateSubmit",
        }
    }
}

/// One entry of a session log. Serialized field order is fixed:
/// `seq, ts, session, room, actor, kind, payload`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since session start.
    pub ts: u64,
    pub session: String,
    pub room: Option<RoomId>,
    pub actor: String,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("malformed line {line} at byte {offset}: {reason}")]
    MalformedLine {
        line: usize,
        offset: usize,
        reason: String,
    },
    #[error("event seq {found} at line {line} does not follow {previous}")]
    OutOfOrderSeq {
        line: usize,
        previous: u64,
        found: u64,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Single line, no trailing newline.
pub fn encode_event(event: &Event) -> String {
    serde_json::to_string(event).expect("events always serialize")
}

/// Decodes one line; `line_no` is only used for error reporting.
pub fn decode_event(line: &str, line_no: usize) -> Result<Event, LogError> {
    serde_json::from_str(line).map_err(|e| LogError::MalformedLine {
        line: line_no,
        offset: e.column().saturating_sub(1),
        reason: e.to_string(),
    })
}

pub fn write_log<W: Write>(mut out: W, events: &[Event]) -> std::io::Result<()> {
    for event in events {
        out.write_all(encode_event(event).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a whole log, checking that seq strictly increases.
pub fn read_log<R: BufRead>(input: R) -> Result<Vec<Event>, LogError> {
    let mut events: Vec<Event> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = decode_event(&line, i + 1)?;
        if let Some(prev) = events.last() {
            if event.seq <= prev.seq {
                return Err(LogError::OutOfOrderSeq {
                    line: i + 1,
                    previous: prev.seq,
                    found: event.seq,
                });
            }
        }
        events.push(event);
    }
    Ok(events)
}

pub fn encode_log(events: &[Event]) -> String {
    let mut out = Vec::new();
    write_log(&mut out, events).expect("writing to memory");
    String::from_utf8(out).expect("json is utf-8")
}
