use std::fmt::Write as _;

use super::state::agent_id;
use super::{EngineError, SessionState, SessionStatus};
use crate::io::event::{Event, EventBody, RoundOutcome};
use crate::model::{OptionId, ParticipantId, Roster, RoomId, TaskKind, ValidatedSession};
use crate::relay::{self, CycleInput, Distiller, RelayError, RelayPolicy};
use crate::topology::partition;

/// A live session: current state plus the log that produced it.
///
/// Commands are validated against the state, turned into events, applied,
/// then appended. One writer per session.
#[derive(Debug, Clone)]
pub struct Session {
    state: SessionState,
    log: Vec<Event>,
}

#[derive(Debug, Default)]
pub struct RelayCycleReport {
    pub posted: usize,
    pub failures: Vec<(RoomId, RelayError)>,
}

impl Session {
    pub fn new(spec: ValidatedSession) -> Self {
        Self {
            state: SessionState::new(spec),
            log: Vec::new(),
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn into_parts(self) -> (SessionState, Vec<Event>) {
        (self.state, self.log)
    }

    pub fn session_id(&self) -> &str {
        &self.state.spec.session_id
    }

    fn emit(
        &mut self,
        now: u64,
        room: Option<RoomId>,
        actor: impl Into<String>,
        body: EventBody,
    ) -> Result<&Event, EngineError> {
        let event = Event {
            seq: self.state.last_seq + 1,
            ts: now.max(self.state.last_ts),
            session: self.state.spec.session_id.clone(),
            room,
            actor: actor.into(),
            body,
        };
        self.state.apply(&event)?;
        self.log.push(event);
        Ok(self.log.last().expect("just pushed"))
    }

    fn room_of(&self, participant: &ParticipantId) -> Result<RoomId, EngineError> {
        let member = self.state.member(participant)?;
        Ok(self.state.graph.rooms[member.room].id.clone())
    }

    /// Partitions `participants` into rooms and records one join each.
    pub fn start(&mut self, participants: &[ParticipantId], now: u64) -> Result<(), EngineError> {
        if self.state.status != SessionStatus::Lobby || !self.state.members.is_empty() {
            return Err(EngineError::WrongPhase("session already started"));
        }
        let rooms = partition(participants, &self.state.spec.topology)?;
        for room in rooms {
            for member in room.members {
                self.emit(
                    now,
                    Some(room.id.clone()),
                    member.0.clone(),
                    EventBody::Join {
                        participant: member,
                        room: room.id.clone(),
                    },
                )?;
            }
        }
        Ok(())
    }

    /// Reactivates a participant who dropped out; their room is unchanged.
    pub fn rejoin(&mut self, participant: &ParticipantId, now: u64) -> Result<(), EngineError> {
        let room = self.room_of(participant)?;
        self.emit(
            now,
            Some(room.clone()),
            participant.0.clone(),
            EventBody::Join {
                participant: participant.clone(),
                room,
            },
        )?;
        Ok(())
    }

    /// Marks the participant inactive. Their vote in the open round stays.
    pub fn handle_dropout(&mut self, participant: &ParticipantId, now: u64) -> Result<(), EngineError> {
        let room = self.room_of(participant)?;
        self.emit(
            now,
            Some(room),
            participant.0.clone(),
            EventBody::Leave {
                participant: participant.clone(),
            },
        )?;
        Ok(())
    }

    pub fn chat(&mut self, participant: &ParticipantId, text: &str, now: u64) -> Result<(), EngineError> {
        let room = self.room_of(participant)?;
        self.emit(
            now,
            Some(room),
            participant.0.clone(),
            EventBody::Chat { text: text.to_owned() },
        )?;
        Ok(())
    }

    pub fn cast_vote(
        &mut self,
        participant: &ParticipantId,
        option: &OptionId,
        now: u64,
    ) -> Result<(), EngineError> {
        let room = self.room_of(participant)?;
        self.emit(
            now,
            Some(room),
            participant.0.clone(),
            EventBody::Vote {
                option: option.clone(),
            },
        )?;
        Ok(())
    }

    pub fn submit_estimate(
        &mut self,
        participant: &ParticipantId,
        value: f64,
        now: u64,
    ) -> Result<(), EngineError> {
        if !value.is_finite() {
            return Err(EngineError::InvalidEstimate);
        }
        let room = self.room_of(participant)?;
        self.emit(
            now,
            Some(room),
            participant.0.clone(),
            EventBody::EstimateSubmit { value },
        )?;
        Ok(())
    }

    /// Opens the next round and tells every room what is at stake.
    pub fn open_round(&mut self, now: u64) -> Result<(), EngineError> {
        let state = &self.state;
        if !matches!(state.status, SessionStatus::Lobby | SessionStatus::BetweenRounds) {
            return Err(EngineError::WrongPhase("cannot open a round now"));
        }
        if state.members.is_empty() {
            return Err(EngineError::WrongPhase("session has not started"));
        }
        let round = state.completed_rounds.len();
        if round >= state.total_rounds() {
            return Err(EngineError::WrongPhase("all rounds are done"));
        }
        let now = now.max(state.last_ts);
        let remaining_budget = state.remaining_budget;
        let total = state.total_rounds();
        let (position, feasible, text) = match state.spec.task_kind {
            TaskKind::BudgetedSelection => {
                let position = state.position(&state.round_order[round]);
                let feasible = state.next_round_options();
                let mut text = format!(
                    "Round {} of {}: choose a {}. Remaining budget: {}. Options:",
                    round + 1,
                    total,
                    position.label,
                    remaining_budget
                );
                for (i, o) in feasible.iter().enumerate() {
                    let sep = if i == 0 { " " } else { "; " };
                    let _ = write!(text, "{sep}{} ({}) {}", o.id, o.label, o.salary);
                }
                text.push('.');
                (Some(position.id.clone()), feasible, text)
            }
            TaskKind::NumericEstimate => (
                None,
                Vec::new(),
                format!(
                    "Estimate round open for {} seconds. Discuss, then submit your number.",
                    state.spec.round_seconds
                ),
            ),
        };
        let closes_at = now + state.spec.round_millis();
        self.emit(
            now,
            None,
            "system",
            EventBody::RoundStart {
                round,
                position,
                opened_at: now,
                closes_at,
                feasible,
                remaining_budget,
            },
        )?;
        self.emit(now, None, "system", EventBody::SystemPost { text })?;
        Ok(())
    }

    /// Closes the open round at plurality and charges the pick.
    pub fn close_round(&mut self, now: u64) -> Result<RoundOutcome, EngineError> {
        let outcome = self.state.pending_outcome()?;
        let round = self.state.completed_rounds.len();
        self.emit(
            now,
            None,
            "system",
            EventBody::RoundEnd {
                round,
                outcome: outcome.clone(),
            },
        )?;
        if matches!(outcome, RoundOutcome::Pick { .. }) {
            let remaining_budget = self.state.remaining_budget;
            self.emit(now, None, "system", EventBody::BudgetUpdate { remaining_budget })?;
        }
        Ok(outcome)
    }

    pub fn finalize_roster(&mut self, now: u64) -> Result<Roster, EngineError> {
        if self.state.spec.task_kind != TaskKind::BudgetedSelection
            || self.state.status != SessionStatus::BetweenRounds
            || self.state.completed_rounds.len() != self.state.round_order.len()
        {
            return Err(EngineError::WrongPhase("rounds still outstanding"));
        }
        let roster = self.state.current_roster();
        self.emit(
            now,
            None,
            "system",
            EventBody::RosterFinal {
                roster: roster.clone(),
            },
        )?;
        Ok(roster)
    }

    /// Advances the session clock: closes an expired round, opens the next
    /// one, and finalizes once every round is done. Returns true if any
    /// transition happened.
    pub fn tick(&mut self, now: u64) -> Result<bool, EngineError> {
        let mut changed = false;
        if self.state.status == SessionStatus::RoundOpen {
            let closes_at = self.state.current.as_ref().map(|r| r.closes_at());
            if closes_at.is_some_and(|t| now >= t) {
                self.close_round(now)?;
                changed = true;
            }
        }
        let started = !self.state.members.is_empty();
        if started
            && matches!(self.state.status, SessionStatus::Lobby | SessionStatus::BetweenRounds)
        {
            if self.state.completed_rounds.len() < self.state.total_rounds() {
                self.open_round(now)?;
            } else {
                self.finalize_roster(now)?;
            }
            changed = true;
        }
        Ok(changed)
    }

    /// Runs one relay cycle and injects the resulting agent posts.
    ///
    /// Only fires while a round is open. Per-room distiller failures are
    /// returned, never propagated.
    pub fn relay_cycle(
        &mut self,
        now: u64,
        cycle: u64,
        policy: &RelayPolicy,
        distiller: &dyn Distiller,
    ) -> Result<RelayCycleReport, EngineError> {
        if self.state.status != SessionStatus::RoundOpen {
            return Ok(RelayCycleReport::default());
        }
        policy.validate()?;
        let now = now.max(self.state.last_ts);
        let snapshots = self.state.relay_snapshots(policy, now);
        let options: Vec<OptionId> = self
            .state
            .selection_round()
            .map(|r| r.feasible.iter().cloned().collect())
            .unwrap_or_default();
        let output = relay::relay_cycle(
            CycleInput {
                session_id: &self.state.spec.session_id,
                graph: &self.state.graph,
                rooms: snapshots,
                ledger: &self.state.ledger,
                options: &options,
                policy,
                now,
            },
            distiller,
        );
        let mut report = RelayCycleReport {
            posted: 0,
            failures: output.failures,
        };
        for delivery in output.deliveries {
            self.emit(
                now,
                Some(delivery.destination),
                agent_id(&delivery.source),
                EventBody::AgentPost {
                    source_room: delivery.source,
                    cycle,
                    assertions: delivery.assertions,
                    text: delivery.text,
                },
            )?;
            report.posted += 1;
        }
        Ok(report)
    }
}
