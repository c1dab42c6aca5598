use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{feasible_options, median, plurality_pick, EngineError};
use crate::io::event::{Event, EventBody, FeasibleOption, LogError, RoundOutcome};
use crate::model::{
    min_completion_cost, Assertion, Message, Money, OptionId, ParticipantId, PositionId,
    PositionSpec, Role, RoomId, Roster, TaskKind, ValidatedSession,
};
use crate::relay::{RelayLedger, RelayPolicy, RelayRecord, RoomSnapshot};
use crate::topology::{build_neighbor_graph, room_id, room_index, Room, SubgroupGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SessionStatus {
    Lobby,
    RoundOpen,
    BetweenRounds,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RoundStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundState {
    pub index: usize,
    pub position: PositionId,
    pub opened_at: u64,
    pub closes_at: u64,
    pub feasible: BTreeSet<OptionId>,
    pub tallies: BTreeMap<OptionId, u32>,
    /// Last vote wins.
    pub votes: BTreeMap<ParticipantId, OptionId>,
    pub status: RoundStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRoundState {
    pub opened_at: u64,
    pub closes_at: u64,
    /// Last submission wins.
    pub estimates: BTreeMap<ParticipantId, f64>,
    pub status: RoundStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ActiveRound {
    Selection(RoundState),
    Estimate(EstimateRoundState),
}

impl ActiveRound {
    pub fn closes_at(&self) -> u64 {
        match self {
            ActiveRound::Selection(r) => r.closes_at,
            ActiveRound::Estimate(r) => r.closes_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletedRound {
    pub round: ActiveRound,
    pub outcome: RoundOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Member {
    pub room: usize,
    pub active: bool,
}

/// Relay bookkeeping for one room.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RoomCursor {
    /// Transcript index where the current round's window starts.
    pub window_start: usize,
    pub last_relay_ts: u64,
    /// Transcript length when this room last relayed.
    pub last_relay_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionState {
    pub spec: ValidatedSession,
    pub graph: SubgroupGraph,
    pub members: BTreeMap<ParticipantId, Member>,
    pub transcripts: Vec<Vec<Message>>,
    pub cursors: Vec<RoomCursor>,
    pub round_order: Vec<PositionId>,
    pub current: Option<ActiveRound>,
    pub completed_rounds: Vec<CompletedRound>,
    pub remaining_budget: Money,
    pub status: SessionStatus,
    pub ledger: RelayLedger,
    pub roster: Option<Roster>,
    pub last_seq: u64,
    pub last_ts: u64,
}

fn inconsistent(msg: impl Into<String>) -> EngineError {
    EngineError::Inconsistent(msg.into())
}

pub(crate) fn agent_id(room: &RoomId) -> String {
    format!("agent:{room}")
}

impl SessionState {
    pub fn new(spec: ValidatedSession) -> Self {
        let round_order = match spec.task_kind {
            TaskKind::BudgetedSelection => super::make_round_order(spec.spec()),
            TaskKind::NumericEstimate => Vec::new(),
        };
        let remaining_budget = spec.starting_budget();
        Self {
            spec,
            graph: SubgroupGraph::default(),
            members: BTreeMap::new(),
            transcripts: Vec::new(),
            cursors: Vec::new(),
            round_order,
            current: None,
            completed_rounds: Vec::new(),
            remaining_budget,
            status: SessionStatus::Lobby,
            ledger: RelayLedger::default(),
            roster: None,
            last_seq: 0,
            last_ts: 0,
        }
    }

    pub fn total_rounds(&self) -> usize {
        match self.spec.task_kind {
            TaskKind::BudgetedSelection => self.round_order.len(),
            TaskKind::NumericEstimate => 1,
        }
    }

    pub fn position(&self, id: &PositionId) -> &PositionSpec {
        self.spec
            .position(id)
            .expect("round order only holds positions from the spec")
    }

    /// Positions still to be decided after round `round`.
    pub fn unfilled_after(&self, round: usize) -> Vec<&PositionSpec> {
        self.round_order
            .iter()
            .skip(round + 1)
            .map(|id| self.position(id))
            .collect()
    }

    pub fn unfilled(&self) -> Vec<&PositionSpec> {
        self.round_order
            .iter()
            .skip(self.completed_rounds.len())
            .map(|id| self.position(id))
            .collect()
    }

    pub fn selection_round(&self) -> Option<&RoundState> {
        match &self.current {
            Some(ActiveRound::Selection(r)) => Some(r),
            _ => None,
        }
    }

    pub fn estimate_round(&self) -> Option<&EstimateRoundState> {
        match &self.current {
            Some(ActiveRound::Estimate(r)) => Some(r),
            _ => None,
        }
    }

    pub fn member(&self, participant: &ParticipantId) -> Result<&Member, EngineError> {
        self.members
            .get(participant)
            .ok_or_else(|| EngineError::NotAMember(participant.clone()))
    }

    fn active_member(&self, actor: &str) -> Result<&Member, EngineError> {
        let id = ParticipantId::new(actor);
        let member = self.member(&id)?;
        if !member.active {
            return Err(EngineError::Inactive(id));
        }
        Ok(member)
    }

    /// Feasible options (with labels and salaries) for the next round to open.
    pub fn next_round_options(&self) -> Vec<FeasibleOption> {
        let round = self.completed_rounds.len();
        let Some(position_id) = self.round_order.get(round) else {
            return Vec::new();
        };
        let position = self.position(position_id);
        let feasible = feasible_options(position, self.remaining_budget, self.unfilled_after(round));
        position
            .options
            .iter()
            .filter(|o| feasible.contains(&o.id))
            .map(|o| FeasibleOption {
                id: o.id.clone(),
                label: o.label.clone(),
                salary: o.salary,
            })
            .collect()
    }

    /// Roster implied by prefilled picks and completed rounds.
    pub fn current_roster(&self) -> Roster {
        let mut picks = BTreeMap::new();
        let mut total_cost = Money::ZERO;
        for p in &self.spec.prefilled {
            picks.insert(p.position.clone(), p.option.clone());
            total_cost += p.salary;
        }
        for done in &self.completed_rounds {
            if let (ActiveRound::Selection(r), RoundOutcome::Pick { option, salary }) =
                (&done.round, &done.outcome)
            {
                picks.insert(r.position.clone(), option.clone());
                total_cost += *salary;
            }
        }
        Roster { picks, total_cost }
    }

    /// Votes cast by members of `room` in the open selection round.
    pub fn room_tallies(&self, room: usize) -> BTreeMap<OptionId, u32> {
        let mut tallies = BTreeMap::new();
        if let Some(round) = self.selection_round() {
            for (voter, option) in &round.votes {
                if self.members.get(voter).map(|m| m.room) == Some(room) {
                    *tallies.entry(option.clone()).or_insert(0) += 1;
                }
            }
        }
        tallies
    }

    pub fn room_snapshots(&self) -> Vec<RoomSnapshot> {
        self.snapshots_where(|_| true)
    }

    /// Like [`room_snapshots`](Self::room_snapshots), but only rooms whose
    /// policy fires at `now` get their transcript window copied.
    pub fn relay_snapshots(&self, policy: &RelayPolicy, now: u64) -> Vec<RoomSnapshot> {
        self.snapshots_where(|s| policy.fires(now, s.last_relay_ts, s.human_since_relay))
    }

    fn snapshots_where(&self, want_window: impl Fn(&RoomSnapshot) -> bool) -> Vec<RoomSnapshot> {
        self.graph
            .rooms
            .iter()
            .enumerate()
            .map(|(i, room)| {
                let transcript = &self.transcripts[i];
                let cursor = &self.cursors[i];
                let mut snapshot = RoomSnapshot {
                    room: room.id.clone(),
                    member_count: room.members.len(),
                    window: Vec::new(),
                    tallies: self.room_tallies(i),
                    last_relay_ts: cursor.last_relay_ts,
                    human_since_relay: transcript[cursor.last_relay_len..]
                        .iter()
                        .filter(|m| m.role == Role::Human)
                        .count(),
                };
                if want_window(&snapshot) {
                    snapshot.window = transcript[cursor.window_start..].to_vec();
                }
                snapshot
            })
            .collect()
    }

    /// Budget lookahead invariant plus roster accounting.
    pub fn check_invariants(&self) -> Result<(), String> {
        let reserve = min_completion_cost(self.unfilled());
        if self.remaining_budget < reserve {
            return Err(format!(
                "remaining budget {} below minimum completion {}",
                self.remaining_budget, reserve
            ));
        }
        let roster = self.current_roster();
        if roster.total_cost + self.remaining_budget != self.spec.budget {
            return Err("budget accounting drifted".into());
        }
        if roster.total_cost > self.spec.budget {
            return Err("roster over budget".into());
        }
        if let Some(r) = self.selection_round() {
            let counted: u32 = r.tallies.values().sum();
            if counted as usize != r.votes.len() || r.tallies.keys().any(|o| !r.feasible.contains(o)) {
                return Err("tallies out of sync with votes".into());
            }
        }
        Ok(())
    }

    fn room_from_event(&self, event: &Event) -> Result<usize, EngineError> {
        let room = event
            .room
            .as_ref()
            .ok_or_else(|| inconsistent(format!("{} event without room", event.body.kind())))?;
        room_index(room)
            .filter(|&i| i < self.graph.rooms.len())
            .ok_or_else(|| inconsistent(format!("unknown room {room}")))
    }

    fn push_message(&mut self, room: usize, event: &Event, role: Role, text: &str, assertions: Vec<Assertion>) {
        let transcript = &mut self.transcripts[room];
        transcript.push(Message {
            seq: transcript.len() as u64 + 1,
            room: self.graph.rooms[room].id.clone(),
            author: event.actor.clone(),
            role,
            text: text.to_owned(),
            ts: event.ts,
            assertions,
        });
    }

    /// Applies one event. Validation happens before any mutation, so an
    /// error leaves the state untouched.
    pub fn apply(&mut self, event: &Event) -> Result<(), EngineError> {
        if event.session != self.spec.session_id {
            return Err(inconsistent(format!("event for session {}", event.session)));
        }
        if event.seq <= self.last_seq {
            return Err(inconsistent(format!(
                "seq {} does not follow {}",
                event.seq, self.last_seq
            )));
        }
        if event.ts < self.last_ts {
            return Err(inconsistent("timestamp went backwards"));
        }
        if self.status == SessionStatus::Finished {
            return Err(EngineError::WrongPhase("session finished"));
        }

        match &event.body {
            EventBody::Join { participant, room } => self.apply_join(event, participant, room)?,
            EventBody::Leave { participant } => {
                let member = self.member(participant)?;
                if !member.active {
                    return Err(EngineError::Inactive(participant.clone()));
                }
                self.members.get_mut(participant).expect("checked").active = false;
            }
            EventBody::Chat { text } => {
                let room = self.active_member(&event.actor)?.room;
                if self.room_from_event(event)? != room {
                    return Err(inconsistent("chat posted outside the author's room"));
                }
                self.push_message(room, event, Role::Human, text, Vec::new());
            }
            EventBody::AgentPost {
                source_room,
                assertions,
                text,
                ..
            } => self.apply_agent_post(event, source_room, assertions, text)?,
            EventBody::SystemPost { text } => match &event.room {
                None => {
                    for room in 0..self.graph.rooms.len() {
                        self.push_message(room, event, Role::System, text, Vec::new());
                    }
                }
                Some(_) => {
                    let room = self.room_from_event(event)?;
                    self.push_message(room, event, Role::System, text, Vec::new());
                }
            },
            EventBody::RoundStart {
                round,
                position,
                opened_at,
                closes_at,
                feasible,
                remaining_budget,
            } => self.apply_round_start(
                event,
                *round,
                position.as_ref(),
                *opened_at,
                *closes_at,
                feasible,
                *remaining_budget,
            )?,
            EventBody::Vote { option } => self.apply_vote(event, option)?,
            EventBody::EstimateSubmit { value } => {
                self.active_member(&event.actor)?;
                if !value.is_finite() {
                    return Err(EngineError::InvalidEstimate);
                }
                match &mut self.current {
                    Some(ActiveRound::Estimate(r)) if r.status == RoundStatus::Open => {
                        r.estimates.insert(ParticipantId::new(&event.actor), *value);
                    }
                    Some(ActiveRound::Estimate(_)) => return Err(EngineError::RoundClosed),
                    _ => return Err(EngineError::WrongPhase("no estimate round open")),
                }
            }
            EventBody::RoundEnd { round, outcome } => self.apply_round_end(*round, outcome)?,
            EventBody::BudgetUpdate { remaining_budget } => {
                if *remaining_budget != self.remaining_budget {
                    return Err(inconsistent("budget update disagrees with state"));
                }
            }
            EventBody::RosterFinal { roster } => {
                if self.status != SessionStatus::BetweenRounds
                    || self.completed_rounds.len() != self.round_order.len()
                    || self.spec.task_kind != TaskKind::BudgetedSelection
                {
                    return Err(EngineError::WrongPhase("rounds still outstanding"));
                }
                let expected = self.current_roster();
                if *roster != expected {
                    return Err(inconsistent("final roster disagrees with completed rounds"));
                }
                self.roster = Some(expected);
                self.status = SessionStatus::Finished;
            }
        }

        self.last_seq = event.seq;
        self.last_ts = event.ts;
        Ok(())
    }

    fn apply_join(
        &mut self,
        event: &Event,
        participant: &ParticipantId,
        room: &RoomId,
    ) -> Result<(), EngineError> {
        let index = room_index(room).ok_or_else(|| inconsistent(format!("bad room id {room}")))?;
        if event.room.as_ref() != Some(room) {
            return Err(inconsistent("join event room mismatch"));
        }
        if let Some(member) = self.members.get(participant) {
            // rejoin after a dropout
            if member.active || member.room != index {
                return Err(inconsistent(format!("{participant} already joined")));
            }
            self.members.get_mut(participant).expect("checked").active = true;
            return Ok(());
        }
        if self.status != SessionStatus::Lobby {
            return Err(EngineError::NotAMember(participant.clone()));
        }
        if index > self.graph.rooms.len() {
            return Err(inconsistent(format!("room {room} skips an index")));
        }
        if index == self.graph.rooms.len() {
            self.graph.rooms.push(Room {
                id: room_id(index),
                members: Vec::new(),
            });
            self.transcripts.push(Vec::new());
            self.cursors.push(RoomCursor::default());
        }
        self.graph.rooms[index].members.push(participant.clone());
        self.members.insert(
            participant.clone(),
            Member {
                room: index,
                active: true,
            },
        );
        Ok(())
    }

    fn apply_agent_post(
        &mut self,
        event: &Event,
        source_room: &RoomId,
        assertions: &[Assertion],
        text: &str,
    ) -> Result<(), EngineError> {
        let destination = self.room_from_event(event)?;
        let source = room_index(source_room)
            .filter(|&i| i < self.graph.rooms.len())
            .ok_or_else(|| inconsistent(format!("unknown source room {source_room}")))?;
        if event.actor != agent_id(source_room) {
            return Err(inconsistent("agent post from the wrong agent"));
        }
        if !self.graph.edges.contains(&(source, destination)) {
            return Err(inconsistent("agent post along a missing edge"));
        }
        if assertions.is_empty() {
            return Err(inconsistent("agent post carries no assertions"));
        }
        let dest_id = self.graph.rooms[destination].id.clone();
        let mut ids = BTreeSet::new();
        for a in assertions {
            if self.ledger.holds(a, &dest_id) || !ids.insert(&a.id) {
                return Err(inconsistent(format!("duplicate delivery of {} to {dest_id}", a.id)));
            }
        }
        for a in assertions {
            self.ledger.try_record(
                RelayRecord {
                    assertion: a.id.clone(),
                    source: source_room.clone(),
                    destination: dest_id.clone(),
                    ts: event.ts,
                },
                &a.origin_room,
            );
        }
        self.push_message(destination, event, Role::Agent, text, assertions.to_vec());
        let cursor = &mut self.cursors[source];
        cursor.last_relay_ts = event.ts;
        cursor.last_relay_len = self.transcripts[source].len();
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_round_start(
        &mut self,
        event: &Event,
        round: usize,
        position: Option<&PositionId>,
        opened_at: u64,
        closes_at: u64,
        feasible: &[FeasibleOption],
        remaining_budget: Money,
    ) -> Result<(), EngineError> {
        if !matches!(self.status, SessionStatus::Lobby | SessionStatus::BetweenRounds) {
            return Err(EngineError::WrongPhase("a round is already open"));
        }
        if self.graph.rooms.is_empty() {
            return Err(EngineError::WrongPhase("session has no participants"));
        }
        if round != self.completed_rounds.len() || round >= self.total_rounds() {
            return Err(inconsistent(format!("round {round} is not next")));
        }
        if opened_at != event.ts || closes_at != event.ts + self.spec.round_millis() {
            return Err(inconsistent("round timer mismatch"));
        }
        if remaining_budget != self.remaining_budget {
            return Err(inconsistent("round start budget mismatch"));
        }
        let active = match self.spec.task_kind {
            TaskKind::BudgetedSelection => {
                let expected_position = &self.round_order[round];
                if position != Some(expected_position) {
                    return Err(inconsistent("round opened out of order"));
                }
                if feasible != self.next_round_options().as_slice() {
                    return Err(inconsistent("feasible set mismatch"));
                }
                ActiveRound::Selection(RoundState {
                    index: round,
                    position: expected_position.clone(),
                    opened_at,
                    closes_at,
                    feasible: feasible.iter().map(|o| o.id.clone()).collect(),
                    tallies: BTreeMap::new(),
                    votes: BTreeMap::new(),
                    status: RoundStatus::Open,
                })
            }
            TaskKind::NumericEstimate => {
                if position.is_some() || !feasible.is_empty() {
                    return Err(inconsistent("estimate rounds have no options"));
                }
                ActiveRound::Estimate(EstimateRoundState {
                    opened_at,
                    closes_at,
                    estimates: BTreeMap::new(),
                    status: RoundStatus::Open,
                })
            }
        };
        if self.status == SessionStatus::Lobby {
            self.graph.edges =
                build_neighbor_graph(self.graph.rooms.len(), self.spec.topology.out_degree);
        }
        for (cursor, transcript) in self.cursors.iter_mut().zip(&self.transcripts) {
            cursor.window_start = transcript.len();
            cursor.last_relay_len = transcript.len();
            cursor.last_relay_ts = event.ts;
        }
        self.current = Some(active);
        self.status = SessionStatus::RoundOpen;
        Ok(())
    }

    fn apply_vote(&mut self, event: &Event, option: &OptionId) -> Result<(), EngineError> {
        self.active_member(&event.actor)?;
        let round = match &self.current {
            Some(ActiveRound::Selection(r)) => r,
            _ => return Err(EngineError::WrongPhase("no selection round open")),
        };
        if round.status != RoundStatus::Open {
            return Err(EngineError::RoundClosed);
        }
        if self.position(&round.position).option(option).is_none() {
            return Err(EngineError::UnknownOption(option.clone()));
        }
        if !round.feasible.contains(option) {
            return Err(EngineError::InfeasibleOption(option.clone()));
        }
        let Some(ActiveRound::Selection(round)) = &mut self.current else {
            unreachable!("checked above");
        };
        let voter = ParticipantId::new(&event.actor);
        if let Some(previous) = round.votes.insert(voter, option.clone()) {
            let count = round.tallies.get_mut(&previous).expect("tallied");
            *count -= 1;
            if *count == 0 {
                round.tallies.remove(&previous);
            }
        }
        *round.tallies.entry(option.clone()).or_insert(0) += 1;
        Ok(())
    }

    /// The outcome closing the current round would produce.
    pub fn pending_outcome(&self) -> Result<RoundOutcome, EngineError> {
        match &self.current {
            Some(ActiveRound::Selection(r)) if self.status == SessionStatus::RoundOpen => {
                let position = self.position(&r.position);
                let pick = plurality_pick(position, &r.feasible, &r.tallies)
                    .ok_or_else(|| inconsistent("empty feasible set"))?;
                let salary = position.option(&pick).expect("picked from position").salary;
                Ok(RoundOutcome::Pick {
                    option: pick,
                    salary,
                })
            }
            Some(ActiveRound::Estimate(r)) if self.status == SessionStatus::RoundOpen => {
                Ok(RoundOutcome::Estimate {
                    value: median(r.estimates.values().copied()),
                })
            }
            _ => Err(EngineError::WrongPhase("no round open")),
        }
    }

    fn apply_round_end(&mut self, round: usize, outcome: &RoundOutcome) -> Result<(), EngineError> {
        let expected = self.pending_outcome()?;
        if round != self.completed_rounds.len() {
            return Err(inconsistent(format!("round {round} is not the open round")));
        }
        if *outcome != expected {
            return Err(inconsistent("round outcome disagrees with tallies"));
        }
        let mut closed = self.current.take().expect("round open");
        match &mut closed {
            ActiveRound::Selection(r) => r.status = RoundStatus::Closed,
            ActiveRound::Estimate(r) => r.status = RoundStatus::Closed,
        }
        self.status = match (&closed, outcome) {
            (ActiveRound::Selection(_), RoundOutcome::Pick { salary, .. }) => {
                self.remaining_budget = self.remaining_budget - *salary;
                SessionStatus::BetweenRounds
            }
            _ => SessionStatus::Finished,
        };
        self.completed_rounds.push(CompletedRound {
            round: closed,
            outcome: expected,
        });
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("event {seq}: {error}")]
    Engine { seq: u64, error: EngineError },
}

/// Rebuilds session state by applying `events` in order from a fresh lobby.
pub fn replay(spec: ValidatedSession, events: &[Event]) -> Result<SessionState, ReplayError> {
    let mut state = SessionState::new(spec);
    for (i, event) in events.iter().enumerate() {
        if event.seq <= state.last_seq {
            return Err(LogError::OutOfOrderSeq {
                line: i + 1,
                previous: state.last_seq,
                found: event.seq,
            }
            .into());
        }
        state.apply(event).map_err(|error| ReplayError::Engine {
            seq: event.seq,
            error,
        })?;
    }
    Ok(state)
}
