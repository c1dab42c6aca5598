//! Session state machine: ordered rounds, one per unfilled position, with
//! budget lookahead so that no reachable state can overspend.
//!
//! Every mutation goes through [`SessionState::apply`] on an [`Event`], so a
//! live session and a replay of its log walk through identical states.
//!
//! [`Event`]: crate::io::event::Event

mod session;
mod state;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    min_completion_cost, Money, OptionId, ParticipantId, PositionId, PositionSpec, SessionSpec,
};
use crate::relay::RelayError;
use crate::topology::TopologyError;

pub use session::{RelayCycleReport, Session};
pub use state::{
    replay, ActiveRound, CompletedRound, EstimateRoundState, Member, ReplayError, RoomCursor,
    RoundState, RoundStatus, SessionState, SessionStatus,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("operation not allowed in the current phase: {0}")]
    WrongPhase(&'static str),
    #[error("round is closed")]
    RoundClosed,
    #[error("unknown option `{0}`")]
    UnknownOption(OptionId),
    #[error("option `{0}` is not affordable this round")]
    InfeasibleOption(OptionId),
    #[error("`{0}` is not a member of this session")]
    NotAMember(ParticipantId),
    #[error("`{0}` has left the session")]
    Inactive(ParticipantId),
    #[error("no estimates were submitted")]
    NoEstimates,
    #[error("estimate must be a finite number")]
    InvalidEstimate,
    #[error("event is inconsistent with session state: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Relay(#[from] RelayError),
}

/// Seeded uniform shuffle of the selectable positions.
pub fn make_round_order(spec: &SessionSpec) -> Vec<PositionId> {
    let mut order: Vec<PositionId> = spec.positions.iter().map(|p| p.id.clone()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.round_order_seed));
    order
}

/// Options whose salary still leaves room for the cheapest completion of
/// `unfilled_after`.
pub fn feasible_options<'a>(
    position: &PositionSpec,
    remaining_budget: Money,
    unfilled_after: impl IntoIterator<Item = &'a PositionSpec>,
) -> BTreeSet<OptionId> {
    let reserve = min_completion_cost(unfilled_after);
    position
        .options
        .iter()
        .filter(|o| o.salary + reserve <= remaining_budget)
        .map(|o| o.id.clone())
        .collect()
}

/// Plurality winner; ties go to the cheaper option, then the smaller id.
/// With no votes at all, the cheapest feasible option wins.
pub fn plurality_pick(
    position: &PositionSpec,
    feasible: &BTreeSet<OptionId>,
    tallies: &BTreeMap<OptionId, u32>,
) -> Option<OptionId> {
    position
        .options
        .iter()
        .filter(|o| feasible.contains(&o.id))
        .min_by(|a, b| {
            let va = tallies.get(&a.id).copied().unwrap_or(0);
            let vb = tallies.get(&b.id).copied().unwrap_or(0);
            vb.cmp(&va)
                .then(a.salary.cmp(&b.salary))
                .then(a.id.cmp(&b.id))
        })
        .map(|o| o.id.clone())
}

/// Median of the final estimates; an even count averages the middle two.
pub fn aggregate_estimates(round: &EstimateRoundState) -> Result<f64, EngineError> {
    median(round.estimates.values().copied()).ok_or(EngineError::NoEstimates)
}

pub(crate) fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}
