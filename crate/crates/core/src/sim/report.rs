use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::analytics::{contribution_metrics, ContributionMetrics, PointsTable};
use crate::engine::{SessionState, SessionStatus};
use crate::io::event::{Event, EventBody, RoundOutcome};
use crate::model::{AssertionId, OptionId, ParticipantId, RoomId, Roster, ValidatedSession};
use crate::topology::room_id;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotePoint {
    pub round: usize,
    pub ts: u64,
    pub tallies: BTreeMap<OptionId, u32>,
}

/// Everything here is recomputed from the event log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub session_id: String,
    pub finished: bool,
    pub final_roster: Option<Roster>,
    pub estimate: Option<f64>,
    /// Arrival cycle per room for every relayed assertion.
    pub propagation: BTreeMap<AssertionId, BTreeMap<RoomId, u64>>,
    /// Distinct (assertion, destination) deliveries.
    pub relay_deliveries: usize,
    pub agent_messages: usize,
    pub contribution: ContributionMetrics,
    /// Room tallies after every vote.
    pub vote_trajectories: BTreeMap<RoomId, Vec<VotePoint>>,
}

impl SimulationReport {
    pub fn from_log(spec: ValidatedSession, log: &[Event]) -> Result<Self, SimError> {
        let mut state = SessionState::new(spec);
        let mut trajectories: BTreeMap<RoomId, Vec<VotePoint>> = BTreeMap::new();
        let mut estimate = None;
        for event in log {
            state.apply(event).map_err(|error| {
                SimError::Replay(crate::engine::ReplayError::Engine {
                    seq: event.seq,
                    error,
                })
            })?;
            match &event.body {
                EventBody::Vote { .. } => {
                    let member = state.member(&ParticipantId::new(&event.actor))?;
                    let room = member.room;
                    let round = state.selection_round().map(|r| r.index).unwrap_or(0);
                    trajectories
                        .entry(room_id(room))
                        .or_default()
                        .push(VotePoint {
                            round,
                            ts: event.ts,
                            tallies: state.room_tallies(room),
                        });
                }
                EventBody::RoundEnd {
                    outcome: RoundOutcome::Estimate { value },
                    ..
                } => estimate = *value,
                _ => {}
            }
        }

        let mut propagation = BTreeMap::new();
        for id in relayed_assertions(log) {
            let times = propagation_time(log, &id)?;
            propagation.insert(id, times);
        }
        let agent_messages = log
            .iter()
            .filter(|e| matches!(e.body, EventBody::AgentPost { .. }))
            .count();
        let contribution =
            contribution_metrics(state.transcripts.iter().flatten(), state.members.keys());
        Ok(SimulationReport {
            session_id: state.spec.session_id.clone(),
            finished: state.status == SessionStatus::Finished,
            final_roster: state.roster.clone(),
            estimate,
            relay_deliveries: state.ledger.records().len(),
            propagation,
            agent_messages,
            contribution,
            vote_trajectories: trajectories,
        })
    }
}

fn relayed_assertions(log: &[Event]) -> BTreeSet<AssertionId> {
    log.iter()
        .filter_map(|e| match &e.body {
            EventBody::AgentPost { assertions, .. } => Some(assertions.iter().map(|a| a.id.clone())),
            _ => None,
        })
        .flatten()
        .collect()
}

/// Relay-cycle arrival time of `assertion` in every room it reached.
///
/// The origin room is at 0. A room first reached in the cycle where the
/// assertion was first relayed is at 1, and so on. Unreached rooms are
/// absent.
pub fn propagation_time(
    log: &[Event],
    assertion: &AssertionId,
) -> Result<BTreeMap<RoomId, u64>, SimError> {
    let mut first_cycle: Option<u64> = None;
    let mut origin: Option<RoomId> = None;
    let mut arrivals: BTreeMap<RoomId, u64> = BTreeMap::new();
    for event in log {
        let EventBody::AgentPost {
            cycle, assertions, ..
        } = &event.body
        else {
            continue;
        };
        let Some(a) = assertions.iter().find(|a| &a.id == assertion) else {
            continue;
        };
        let Some(room) = &event.room else { continue };
        first_cycle.get_or_insert(*cycle);
        origin.get_or_insert_with(|| a.origin_room.clone());
        arrivals.entry(room.clone()).or_insert(*cycle);
    }
    let (Some(first), Some(origin)) = (first_cycle, origin) else {
        return Err(SimError::UnknownAssertion(assertion.clone()));
    };
    let mut times: BTreeMap<RoomId, u64> = arrivals
        .into_iter()
        .map(|(room, cycle)| (room, cycle - first + 1))
        .collect();
    times.insert(origin, 0);
    Ok(times)
}

/// Humans never post as agents, agents never vote or chat.
pub fn role_separation_violations(log: &[Event]) -> Vec<String> {
    let mut out = Vec::new();
    for e in log {
        let is_agent = e.actor.starts_with("agent:");
        let ok = match &e.body {
            EventBody::AgentPost { .. } => is_agent,
            EventBody::Vote { .. } | EventBody::Chat { .. } | EventBody::EstimateSubmit { .. } => {
                !is_agent && e.actor != "system"
            }
            _ => !is_agent,
        };
        if !ok {
            out.push(format!("seq {}: {} by {}", e.seq, e.body.kind(), e.actor));
        }
    }
    out
}

/// Total true points of the final roster's picks; unknown options count 0.
pub fn roster_utility(report: &SimulationReport, points: &PointsTable) -> f64 {
    report
        .final_roster
        .as_ref()
        .map(|r| r.picks.values().filter_map(|o| points.get(o)).sum())
        .unwrap_or(0.0)
}
