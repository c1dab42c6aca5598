//! Crowd baseline: per-position plurality over individual surveys, repaired
//! down to the budget.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::model::{Money, OptionId, PositionId, PositionSpec, Roster, ValidatedSession};

/// One participant's individual roster, collected before deliberation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant: String,
    /// One pick per selectable position.
    pub picks: BTreeMap<PositionId, OptionId>,
}

/// Points scored per option.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointsTable(pub BTreeMap<OptionId, f64>);

impl PointsTable {
    pub fn get(&self, option: &OptionId) -> Option<f64> {
        self.0.get(option).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WocOutcome {
    pub roster: Roster,
    /// Number of single-position replacements made by the repair.
    pub repair_steps: usize,
}

/// Checks shape and, unless `allow_over_budget`, affordability.
pub fn validate_survey(
    spec: &ValidatedSession,
    survey: &SurveyResponse,
    allow_over_budget: bool,
) -> Result<(), AnalyticsError> {
    let invalid = |reason: String| AnalyticsError::InvalidSurvey {
        participant: survey.participant.clone(),
        reason,
    };
    if survey.picks.len() != spec.positions.len() {
        return Err(invalid(format!(
            "expected {} picks, got {}",
            spec.positions.len(),
            survey.picks.len()
        )));
    }
    let mut cost = spec.prefilled_cost();
    for position in &spec.positions {
        let pick = survey
            .picks
            .get(&position.id)
            .ok_or_else(|| invalid(format!("no pick for {}", position.id)))?;
        let option = position
            .option(pick)
            .ok_or_else(|| invalid(format!("{pick} is not an option for {}", position.id)))?;
        cost += option.salary;
    }
    if !allow_over_budget && cost > spec.budget {
        return Err(invalid(format!("cost {cost} exceeds budget {}", spec.budget)));
    }
    Ok(())
}

struct Ranked<'a> {
    position: &'a PositionSpec,
    votes: BTreeMap<OptionId, u32>,
    /// Options by votes desc, salary asc, id asc.
    order: Vec<OptionId>,
    current: OptionId,
}

impl Ranked<'_> {
    fn votes_of(&self, id: &OptionId) -> u32 {
        self.votes.get(id).copied().unwrap_or(0)
    }
    fn salary_of(&self, id: &OptionId) -> Money {
        self.position.option(id).map(|o| o.salary).unwrap_or_default()
    }
    /// Most popular option cheaper than the current pick.
    fn replacement(&self) -> Option<OptionId> {
        let current = self.salary_of(&self.current);
        self.order
            .iter()
            .find(|id| self.salary_of(id) < current)
            .cloned()
    }
}

/// Plurality per position, then repair while over budget: replace the pick
/// at the position whose current pick has the fewest votes (ties: higher
/// salary, then earlier position) with the most popular cheaper option.
/// Positions with no cheaper option are skipped.
pub fn woc_roster(
    spec: &ValidatedSession,
    surveys: &[SurveyResponse],
) -> Result<WocOutcome, AnalyticsError> {
    if surveys.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let mut ranked: Vec<Ranked> = spec
        .positions
        .iter()
        .map(|position| {
            let mut votes: BTreeMap<OptionId, u32> = BTreeMap::new();
            for s in surveys {
                if let Some(pick) = s.picks.get(&position.id) {
                    *votes.entry(pick.clone()).or_insert(0) += 1;
                }
            }
            let mut options: Vec<_> = position.options.iter().collect();
            options.sort_by(|a, b| {
                let va = votes.get(&a.id).copied().unwrap_or(0);
                let vb = votes.get(&b.id).copied().unwrap_or(0);
                vb.cmp(&va).then(a.salary.cmp(&b.salary)).then(a.id.cmp(&b.id))
            });
            let order: Vec<OptionId> = options.into_iter().map(|o| o.id.clone()).collect();
            let current = order[0].clone();
            Ranked {
                position,
                votes,
                order,
                current,
            }
        })
        .collect();

    let cost = |ranked: &[Ranked]| -> Money {
        spec.prefilled_cost() + ranked.iter().map(|r| r.salary_of(&r.current)).sum::<Money>()
    };

    let mut steps = 0;
    while cost(&ranked) > spec.budget {
        let target = ranked
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.replacement().map(|rep| (i, rep)))
            .min_by(|(i, _), (j, _)| {
                let (a, b) = (&ranked[*i], &ranked[*j]);
                a.votes_of(&a.current)
                    .cmp(&b.votes_of(&b.current))
                    .then(b.salary_of(&b.current).cmp(&a.salary_of(&a.current)))
                    .then(i.cmp(j))
            });
        match target {
            Some((i, replacement)) => {
                ranked[i].current = replacement;
                steps += 1;
            }
            None => return Err(AnalyticsError::RepairExhausted),
        }
    }

    let mut picks: BTreeMap<PositionId, OptionId> = spec
        .prefilled
        .iter()
        .map(|p| (p.position.clone(), p.option.clone()))
        .collect();
    for r in &ranked {
        picks.insert(r.position.id.clone(), r.current.clone());
    }
    Ok(WocOutcome {
        roster: Roster {
            picks,
            total_cost: cost(&ranked),
        },
        repair_steps: steps,
    })
}

/// Sum of points over `scored_positions`; positions outside it (for
/// instance prefilled ones) are ignored.
pub fn score_roster(
    roster: &Roster,
    points: &PointsTable,
    scored_positions: &BTreeSet<PositionId>,
) -> Result<f64, AnalyticsError> {
    roster
        .picks
        .iter()
        .filter(|(pos, _)| scored_positions.contains(*pos))
        .map(|(_, opt)| points.get(opt).ok_or_else(|| AnalyticsError::MissingPoints(opt.clone())))
        .sum()
}

/// Scores an individual survey over the selectable positions.
pub fn score_survey(survey: &SurveyResponse, points: &PointsTable) -> Result<f64, AnalyticsError> {
    survey
        .picks
        .values()
        .map(|opt| points.get(opt).ok_or_else(|| AnalyticsError::MissingPoints(opt.clone())))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_session, PlayerOption, SessionSpec};

    fn position(id: &str, options: &[(&str, u64)]) -> PositionSpec {
        PositionSpec {
            id: id.into(),
            label: id.into(),
            options: options
                .iter()
                .map(|&(o, s)| PlayerOption {
                    id: o.into(),
                    label: o.into(),
                    salary: Money(s),
                })
                .collect(),
        }
    }

    fn spec(positions: Vec<PositionSpec>, budget: u64) -> ValidatedSession {
        validate_session(SessionSpec {
            session_id: "s".into(),
            positions,
            budget: Money(budget),
            round_seconds: 240,
            prefilled: vec![],
            topology: Default::default(),
            round_order_seed: 0,
            task_kind: Default::default(),
        })
        .unwrap()
    }

    fn survey(name: &str, picks: &[(&str, &str)]) -> SurveyResponse {
        SurveyResponse {
            participant: name.into(),
            picks: picks.iter().map(|&(p, o)| (p.into(), o.into())).collect(),
        }
    }

    #[test]
    fn plurality_within_budget_needs_no_repair() {
        let s = spec(
            vec![position("A", &[("a1", 5), ("a2", 3)]), position("B", &[("b1", 5), ("b2", 2)])],
            20,
        );
        let surveys = [
            survey("p", &[("A", "a1"), ("B", "b2")]),
            survey("q", &[("A", "a1"), ("B", "b1")]),
            survey("r", &[("A", "a2"), ("B", "b2")]),
        ];
        let out = woc_roster(&s, &surveys).unwrap();
        assert_eq!(out.repair_steps, 0);
        assert_eq!(out.roster.picks[&PositionId::new("A")], OptionId::new("a1"));
        assert_eq!(out.roster.picks[&PositionId::new("B")], OptionId::new("b2"));
        assert_eq!(out.roster.total_cost, Money(7));
    }

    #[test]
    fn repair_prefers_pricier_pick_on_vote_tie() {
        let s = spec(
            vec![position("A", &[("a1", 80), ("a2", 50)]), position("B", &[("b1", 40), ("b2", 20)])],
            100,
        );
        let surveys = [
            survey("p", &[("A", "a1"), ("B", "b1")]),
            survey("q", &[("A", "a1"), ("B", "b1")]),
            survey("r", &[("A", "a2"), ("B", "b2")]),
        ];
        let out = woc_roster(&s, &surveys).unwrap();
        assert_eq!(out.roster.picks[&PositionId::new("A")], OptionId::new("a2"));
        assert_eq!(out.roster.picks[&PositionId::new("B")], OptionId::new("b1"));
        assert_eq!(out.roster.total_cost, Money(90));
        assert_eq!(out.repair_steps, 1);
    }

    #[test]
    fn repair_replaces_least_supported_pick() {
        let s = spec(
            vec![
                position("A", &[("a1", 10), ("a2", 4), ("a3", 3)]),
                position("B", &[("b1", 10), ("b2", 2)]),
            ],
            14,
        );
        let surveys = [
            survey("p", &[("A", "a1"), ("B", "b1")]),
            survey("q", &[("A", "a1"), ("B", "b1")]),
            survey("r", &[("A", "a2"), ("B", "b1")]),
            survey("t", &[("A", "a1"), ("B", "b2")]),
        ];
        // A: a1 has 3 votes, B: b1 has 3 votes; tie goes to the higher salary
        // (equal), then the earlier position, so A is repaired first with a2.
        let out = woc_roster(&s, &surveys).unwrap();
        assert_eq!(out.roster.picks[&PositionId::new("A")], OptionId::new("a2"));
        assert_eq!(out.roster.picks[&PositionId::new("B")], OptionId::new("b1"));
        assert_eq!(out.roster.total_cost, Money(14));
        assert_eq!(out.repair_steps, 1);
    }

    #[test]
    fn repair_skips_positions_without_cheaper_options() {
        // A's pick has the fewest votes but nothing cheaper exists once a2
        // is reached; B must still be repaired.
        let s = spec(
            vec![
                position("A", &[("a1", 30), ("a2", 10), ("a3", 40)]),
                position("B", &[("b1", 20), ("b2", 1)]),
            ],
            12,
        );
        let mut surveys = vec![survey("x", &[("A", "a1"), ("B", "b1")])];
        for i in 0..4 {
            surveys.push(survey(&format!("y{i}"), &[("A", "a3"), ("B", "b1")]));
        }
        // a3 leads A with 4 votes; rank: a3, a1, a2
        let out = woc_roster(&s, &surveys).unwrap();
        assert!(out.roster.total_cost <= Money(12));
        assert_eq!(out.roster.picks[&PositionId::new("A")], OptionId::new("a2"));
        assert_eq!(out.roster.picks[&PositionId::new("B")], OptionId::new("b2"));
    }

    #[test]
    fn survey_validation() {
        let s = spec(vec![position("A", &[("a1", 5), ("a2", 30)])], 10);
        assert!(validate_survey(&s, &survey("p", &[("A", "a1")]), false).is_ok());
        assert!(validate_survey(&s, &survey("p", &[("A", "a2")]), false).is_err());
        assert!(validate_survey(&s, &survey("p", &[("A", "a2")]), true).is_ok());
        assert!(validate_survey(&s, &survey("p", &[("A", "zz")]), true).is_err());
        assert!(validate_survey(&s, &survey("p", &[]), true).is_err());
    }

    #[test]
    fn scoring_ignores_unscored_positions() {
        let roster = Roster {
            picks: [("A".into(), "a1".into()), ("K".into(), "k1".into())].into(),
            total_cost: Money(0),
        };
        let points = PointsTable([("a1".into(), 12.5)].into());
        let scored: BTreeSet<PositionId> = ["A".into()].into();
        assert_eq!(score_roster(&roster, &points, &scored), Ok(12.5));
        let all: BTreeSet<PositionId> = ["A".into(), "K".into()].into();
        assert_eq!(
            score_roster(&roster, &points, &all),
            Err(AnalyticsError::MissingPoints("k1".into()))
        );
    }
}
