//! Shared domain types: identifiers, money, session specs, messages,
//! assertions and rosters, plus load-time validation of a session spec.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::TopologyParams;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// A session member (human participant or simulated bot).
    ParticipantId
);
string_id!(RoomId);
string_id!(
    /// Unique across every position of a session.
    OptionId
);
string_id!(PositionId);
string_id!(AssertionId);

/// Integer currency units. Budget arithmetic never touches floating point.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(pub u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn checked_sub(self, rhs: Money) -> Option<Money> {
        self.0.checked_sub(rhs.0).map(Money)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 32500 -> $32,500
        let digits = self.0.to_string();
        let mut out = String::with_capacity(digits.len() + digits.len() / 3 + 1);
        out.push('$');
        for (i, c) in digits.chars().enumerate() {
            if i > 0 && (digits.len() - i).is_multiple_of(3) {
                out.push(',');
            }
            out.push(c);
        }
        f.write_str(&out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerOption {
    pub id: OptionId,
    pub label: String,
    pub salary: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionSpec {
    pub id: PositionId,
    pub label: String,
    pub options: Vec<PlayerOption>,
}

impl PositionSpec {
    pub fn option(&self, id: &OptionId) -> Option<&PlayerOption> {
        self.options.iter().find(|o| &o.id == id)
    }

    /// Cheapest salary among the options, `None` for an empty position.
    pub fn min_salary(&self) -> Option<Money> {
        self.options.iter().map(|o| o.salary).min()
    }
}

/// A position filled before the session starts; its salary is already spent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefilledPick {
    pub position: PositionId,
    pub option: OptionId,
    pub salary: Money,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    #[default]
    BudgetedSelection,
    NumericEstimate,
}

fn default_round_seconds() -> u64 {
    240
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub session_id: String,
    #[serde(default)]
    pub positions: Vec<PositionSpec>,
    /// Total budget, including whatever the prefilled picks cost.
    pub budget: Money,
    #[serde(default = "default_round_seconds")]
    pub round_seconds: u64,
    #[serde(default)]
    pub prefilled: Vec<PrefilledPick>,
    #[serde(default)]
    pub topology: TopologyParams,
    #[serde(default)]
    pub round_order_seed: u64,
    #[serde(default)]
    pub task_kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("position `{0}` has no options")]
    EmptyPosition(PositionId),
    #[error("budget {budget} cannot cover prefilled cost {prefilled} plus minimum completion cost {min_completion}")]
    IncompletableBudget {
        budget: Money,
        prefilled: Money,
        min_completion: Money,
    },
    #[error("round_seconds must be positive")]
    ZeroRoundSeconds,
    #[error("empty identifier in {0}")]
    EmptyId(&'static str),
    #[error("a budgeted selection session needs at least one position")]
    NoPositions,
    #[error("invalid topology: {0}")]
    Topology(String),
}

/// A [`SessionSpec`] that passed [`validate_session`]. Immutable.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedSession(SessionSpec);

impl ValidatedSession {
    pub fn spec(&self) -> &SessionSpec {
        &self.0
    }

    pub fn into_inner(self) -> SessionSpec {
        self.0
    }

    pub fn prefilled_cost(&self) -> Money {
        self.0.prefilled.iter().map(|p| p.salary).sum()
    }

    /// Budget left for the group after prefilled picks are charged.
    pub fn starting_budget(&self) -> Money {
        self.0.budget - self.prefilled_cost()
    }

    pub fn position(&self, id: &PositionId) -> Option<&PositionSpec> {
        self.0.positions.iter().find(|p| &p.id == id)
    }

    /// Looks an option up across every selectable position.
    pub fn option(&self, id: &OptionId) -> Option<(&PositionSpec, &PlayerOption)> {
        self.0
            .positions
            .iter()
            .find_map(|p| p.option(id).map(|o| (p, o)))
    }

    pub fn round_millis(&self) -> u64 {
        self.0.round_seconds * 1000
    }
}

impl std::ops::Deref for ValidatedSession {
    type Target = SessionSpec;
    fn deref(&self) -> &SessionSpec {
        &self.0
    }
}

impl<'de> Deserialize<'de> for ValidatedSession {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let spec = SessionSpec::deserialize(d)?;
        validate_session(spec).map_err(serde::de::Error::custom)
    }
}

/// Sum over positions of the cheapest option salary.
///
/// Positions without options contribute nothing; callers validate that
/// beforehand.
pub fn min_completion_cost<'a>(positions: impl IntoIterator<Item = &'a PositionSpec>) -> Money {
    positions.into_iter().filter_map(PositionSpec::min_salary).sum()
}

pub fn validate_session(spec: SessionSpec) -> Result<ValidatedSession, SpecError> {
    if spec.session_id.is_empty() {
        return Err(SpecError::EmptyId("session_id"));
    }
    if spec.round_seconds == 0 {
        return Err(SpecError::ZeroRoundSeconds);
    }
    spec.topology.validate().map_err(|e| SpecError::Topology(e.to_string()))?;
    if spec.task_kind == TaskKind::BudgetedSelection && spec.positions.is_empty() {
        return Err(SpecError::NoPositions);
    }

    let mut position_ids = BTreeSet::new();
    let mut option_ids = BTreeSet::new();
    for position in &spec.positions {
        if position.id.0.is_empty() {
            return Err(SpecError::EmptyId("position id"));
        }
        if !position_ids.insert(position.id.0.clone()) {
            return Err(SpecError::DuplicateId(position.id.0.clone()));
        }
        if position.options.is_empty() {
            return Err(SpecError::EmptyPosition(position.id.clone()));
        }
        for option in &position.options {
            if option.id.0.is_empty() {
                return Err(SpecError::EmptyId("option id"));
            }
            if !option_ids.insert(option.id.0.clone()) {
                return Err(SpecError::DuplicateId(option.id.0.clone()));
            }
        }
    }
    for pick in &spec.prefilled {
        if pick.position.0.is_empty() {
            return Err(SpecError::EmptyId("prefilled position"));
        }
        if pick.option.0.is_empty() {
            return Err(SpecError::EmptyId("prefilled option"));
        }
        if !position_ids.insert(pick.position.0.clone()) {
            return Err(SpecError::DuplicateId(pick.position.0.clone()));
        }
        if !option_ids.insert(pick.option.0.clone()) {
            return Err(SpecError::DuplicateId(pick.option.0.clone()));
        }
    }

    let prefilled: Money = spec.prefilled.iter().map(|p| p.salary).sum();
    let min_completion = min_completion_cost(&spec.positions);
    if prefilled + min_completion > spec.budget {
        return Err(SpecError::IncompletableBudget {
            budget: spec.budget,
            prefilled,
            min_completion,
        });
    }
    Ok(ValidatedSession(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Human,
    Agent,
    System,
}

/// One line of a room transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    /// Strictly increasing within a room, starting at 1.
    pub seq: u64,
    pub room: RoomId,
    /// Participant id for humans, the agent id (`agent:<room>`) for relay
    /// posts, `system` for broadcasts.
    pub author: String,
    pub role: Role,
    pub text: String,
    /// Milliseconds since session start.
    pub ts: u64,
    /// Structured assertions carried by an agent post; empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stance {
    For,
    Against,
}

impl Stance {
    pub fn as_str(self) -> &'static str {
        match self {
            Stance::For => "for",
            Stance::Against => "against",
        }
    }
}

/// A distilled claim and the unit of inter-room propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub id: AssertionId,
    /// An option id, or a free-text claim from a remote distiller.
    pub subject: String,
    pub stance: Stance,
    pub arguments: Vec<String>,
    pub support_count: u32,
    pub origin_room: RoomId,
}

impl Assertion {
    /// Stable identity: an assertion is the (room, subject, stance) triple.
    pub fn make_id(origin: &RoomId, subject: &str, stance: Stance) -> AssertionId {
        AssertionId(format!("{}/{}/{}", origin, subject, stance.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    /// Covers every position, prefilled ones included.
    pub picks: BTreeMap<PositionId, OptionId>,
    pub total_cost: Money,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn position(id: &str, salaries: &[u64]) -> PositionSpec {
        PositionSpec {
            id: PositionId::new(id),
            label: id.to_owned(),
            options: salaries
                .iter()
                .enumerate()
                .map(|(i, &s)| PlayerOption {
                    id: OptionId(format!("{id}{}", i + 1)),
                    label: format!("{id} player {}", i + 1),
                    salary: Money(s),
                })
                .collect(),
        }
    }

    fn spec(positions: Vec<PositionSpec>, budget: u64) -> SessionSpec {
        SessionSpec {
            session_id: "s".into(),
            positions,
            budget: Money(budget),
            round_seconds: 240,
            prefilled: vec![],
            topology: TopologyParams::default(),
            round_order_seed: 0,
            task_kind: TaskKind::BudgetedSelection,
        }
    }

    #[test]
    fn reference_session_session_is_valid() {
        let positions = ["QB", "RB", "WR", "TE", "DST"]
            .iter()
            .map(|p| position(p, &[4000, 5000, 6000, 7000, 8000]))
            .collect::<Vec<_>>();
        assert_eq!(min_completion_cost(&positions), Money(20_000));
        assert!(validate_session(spec(positions, 32_500)).is_ok());
    }

    #[test]
    fn zero_budget_single_free_option() {
        assert!(validate_session(spec(vec![position("K", &[0])], 0)).is_ok());
    }

    #[test]
    fn incompletable_budget_rejected() {
        let err = validate_session(spec(vec![position("A", &[60]), position("B", &[50])], 100))
            .unwrap_err();
        assert!(matches!(err, SpecError::IncompletableBudget { .. }));
    }

    #[test]
    fn prefilled_cost_counts_against_budget() {
        let mut s = spec(vec![position("A", &[60])], 100);
        s.prefilled.push(PrefilledPick {
            position: PositionId::new("K"),
            option: OptionId::new("K1"),
            salary: Money(41),
        });
        assert!(matches!(
            validate_session(s.clone()),
            Err(SpecError::IncompletableBudget { .. })
        ));
        s.prefilled[0].salary = Money(40);
        let v = validate_session(s).unwrap();
        assert_eq!(v.starting_budget(), Money(60));
    }

    #[test]
    fn min_completion_cost_examples() {
        let ps = [position("A", &[3000, 3500]), position("B", &[4000, 2500])];
        assert_eq!(min_completion_cost(&ps), Money(5500));
        assert_eq!(min_completion_cost(&[] as &[PositionSpec]), Money::ZERO);
    }

    #[test]
    fn each_injected_violation_has_its_own_error() {
        let base = || spec(vec![position("A", &[10, 20]), position("B", &[5])], 100);

        let mut s = base();
        s.positions[1].options[0].id = OptionId::new("A1");
        assert_eq!(validate_session(s), Err(SpecError::DuplicateId("A1".into())));

        let mut s = base();
        s.positions[1].id = PositionId::new("A");
        assert_eq!(validate_session(s), Err(SpecError::DuplicateId("A".into())));

        let mut s = base();
        s.positions[1].options.clear();
        assert_eq!(
            validate_session(s),
            Err(SpecError::EmptyPosition(PositionId::new("B")))
        );

        let mut s = base();
        s.round_seconds = 0;
        assert_eq!(validate_session(s), Err(SpecError::ZeroRoundSeconds));

        let mut s = base();
        s.budget = Money(14);
        assert!(matches!(
            validate_session(s),
            Err(SpecError::IncompletableBudget { .. })
        ));

        let mut s = base();
        s.topology.out_degree = 0;
        assert!(matches!(validate_session(s), Err(SpecError::Topology(_))));
    }

    #[test]
    fn money_display_groups_thousands() {
        assert_eq!(Money(32_500).to_string(), "$32,500");
        assert_eq!(Money(0).to_string(), "$0");
        assert_eq!(Money(1_000_000).to_string(), "$1,000,000");
        assert_eq!(Money(999).to_string(), "$999");
    }

    #[test]
    fn validated_session_deserializes_through_validation() {
        let json = r#"{"session_id":"x","positions":[{"id":"A","label":"A","options":[{"id":"a","label":"a","salary":60}]}],"budget":50}"#;
        assert!(serde_json::from_str::<ValidatedSession>(json).is_err());
        let json = json.replace("50}", "60}");
        let v: ValidatedSession = serde_json::from_str(&json).unwrap();
        assert_eq!(v.round_seconds, 240);
    }
}
