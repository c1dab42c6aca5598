//! Client/server messages for live sessions.
//!
//! Server-bound messages are parsed and validated here before anything
//! reaches the engine, so malformed input cannot change session state.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{Event, FeasibleOption};
use crate::engine::{ActiveRound, EngineError, Session, SessionState};
use crate::model::{Message, Money, OptionId, ParticipantId, PositionId, RoomId};

pub const MAX_TOKEN_LEN: usize = 128;
pub const MAX_CHAT_LEN: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum ClientBody {
    /// First message on a channel; also used to come back after a drop.
    Join { participant: ParticipantId },
    Leave,
    Chat { text: String },
    Vote { option: OptionId },
    EstimateSubmit { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    /// Client-generated; a repeated token is acknowledged but not re-applied.
    pub token: String,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum ServerMessage {
    Event(Event),
    RoomTranscript {
        room: RoomId,
        messages: Vec<Message>,
    },
    TallySnapshot {
        round: Option<usize>,
        position: Option<PositionId>,
        feasible: Vec<FeasibleOption>,
        tallies: BTreeMap<OptionId, u32>,
        my_vote: Option<OptionId>,
    },
    BudgetSnapshot {
        remaining_budget: Money,
    },
    TimerSnapshot {
        opened_at: Option<u64>,
        closes_at: Option<u64>,
        now: u64,
    },
    Ack {
        token: String,
        duplicate: bool,
    },
    Error {
        token: Option<String>,
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

impl WireError {
    pub fn code(&self) -> &'static str {
        match self {
            WireError::Malformed(_) => "Malformed",
            WireError::InvalidField { .. } => "InvalidField",
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> WireError {
    WireError::InvalidField {
        field,
        reason: reason.into(),
    }
}

/// Parses and validates one server-bound message.
pub fn parse_client_message(bytes: &[u8]) -> Result<ClientMessage, WireError> {
    let msg: ClientMessage =
        serde_json::from_slice(bytes).map_err(|e| WireError::Malformed(e.to_string()))?;
    validate_client_message(&msg)?;
    Ok(msg)
}

pub fn validate_client_message(msg: &ClientMessage) -> Result<(), WireError> {
    if msg.token.is_empty() || msg.token.len() > MAX_TOKEN_LEN {
        return Err(invalid("token", format!("must be 1..={MAX_TOKEN_LEN} bytes")));
    }
    match &msg.body {
        ClientBody::Join { participant } => {
            if participant.as_str().trim().is_empty() || participant.as_str().starts_with("agent:")
            {
                return Err(invalid("participant", "reserved or empty"));
            }
        }
        ClientBody::Chat { text } => {
            if text.trim().is_empty() {
                return Err(invalid("text", "empty"));
            }
            if text.len() > MAX_CHAT_LEN {
                return Err(invalid("text", format!("longer than {MAX_CHAT_LEN} bytes")));
            }
        }
        ClientBody::Vote { option } => {
            if option.as_str().is_empty() {
                return Err(invalid("option", "empty"));
            }
        }
        ClientBody::EstimateSubmit { value } => {
            if !value.is_finite() {
                return Err(invalid("value", "must be finite"));
            }
        }
        ClientBody::Leave => {}
    }
    Ok(())
}

/// Remembers recent tokens per participant.
#[derive(Debug, Clone)]
pub struct IdempotencyCache {
    capacity: usize,
    seen: BTreeMap<String, (BTreeSet<String>, VecDeque<String>)>,
}

impl Default for IdempotencyCache {
    fn default() -> Self {
        Self::new(1024)
    }
}

impl IdempotencyCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            seen: BTreeMap::new(),
        }
    }

    /// True the first time a (participant, token) pair is seen.
    pub fn first_time(&mut self, participant: &str, token: &str) -> bool {
        let (set, order) = self.seen.entry(participant.to_owned()).or_default();
        if set.contains(token) {
            return false;
        }
        set.insert(token.to_owned());
        order.push_back(token.to_owned());
        if order.len() > self.capacity {
            if let Some(old) = order.pop_front() {
                set.remove(&old);
            }
        }
        true
    }
}

/// Runs a validated command for `participant`. `Join` is handled by the
/// caller, since it binds a channel rather than changing the session.
pub fn dispatch(
    session: &mut Session,
    participant: &ParticipantId,
    body: &ClientBody,
    now: u64,
) -> Result<(), EngineError> {
    match body {
        ClientBody::Join { .. } => {
            let member = session.state().member(participant)?;
            if !member.active {
                session.rejoin(participant, now)?;
            }
            Ok(())
        }
        ClientBody::Leave => session.handle_dropout(participant, now),
        ClientBody::Chat { text } => session.chat(participant, text, now),
        ClientBody::Vote { option } => session.cast_vote(participant, option, now),
        ClientBody::EstimateSubmit { value } => session.submit_estimate(participant, *value, now),
    }
}

/// Error code for an engine rejection, as shown to clients.
pub fn engine_error_code(e: &EngineError) -> &'static str {
    match e {
        EngineError::WrongPhase(_) => "WrongPhase",
        EngineError::RoundClosed => "RoundClosed",
        EngineError::UnknownOption(_) => "UnknownOption",
        EngineError::InfeasibleOption(_) => "InfeasibleOption",
        EngineError::NotAMember(_) => "NotAMember",
        EngineError::Inactive(_) => "Inactive",
        EngineError::NoEstimates => "NoEstimates",
        EngineError::InvalidEstimate => "InvalidEstimate",
        EngineError::Inconsistent(_) => "Inconsistent",
        EngineError::Topology(_) => "Topology",
        EngineError::Relay(_) => "Relay",
    }
}

/// Full view for one participant, sent on join and reconnect.
pub fn snapshot_for(
    state: &SessionState,
    participant: &ParticipantId,
    now: u64,
) -> Result<Vec<ServerMessage>, EngineError> {
    let member = state.member(participant)?;
    let room = &state.graph.rooms[member.room];
    let mut out = vec![ServerMessage::RoomTranscript {
        room: room.id.clone(),
        messages: state.transcripts[member.room].clone(),
    }];
    let (round, position, feasible, tallies, my_vote) = match state.selection_round() {
        Some(r) => {
            let spec = state.position(&r.position);
            let feasible = spec
                .options
                .iter()
                .filter(|o| r.feasible.contains(&o.id))
                .map(|o| FeasibleOption {
                    id: o.id.clone(),
                    label: o.label.clone(),
                    salary: o.salary,
                })
                .collect();
            (
                Some(r.index),
                Some(r.position.clone()),
                feasible,
                state.room_tallies(member.room),
                r.votes.get(participant).cloned(),
            )
        }
        None => (None, None, Vec::new(), BTreeMap::new(), None),
    };
    out.push(ServerMessage::TallySnapshot {
        round,
        position,
        feasible,
        tallies,
        my_vote,
    });
    out.push(ServerMessage::BudgetSnapshot {
        remaining_budget: state.remaining_budget,
    });
    let (opened_at, closes_at) = match &state.current {
        Some(ActiveRound::Selection(r)) => (Some(r.opened_at), Some(r.closes_at)),
        Some(ActiveRound::Estimate(r)) => (Some(r.opened_at), Some(r.closes_at)),
        None => (None, None),
    };
    out.push(ServerMessage::TimerSnapshot {
        opened_at,
        closes_at,
        now,
    });
    Ok(out)
}

/// Whether a participant in `room` should receive `event` as a delta.
pub fn visible_in(event: &Event, room: &RoomId) -> bool {
    event.room.as_ref().is_none_or(|r| r == room)
}

pub fn encode_server(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("server messages always serialize")
}
