//! Scripted bot sessions on a virtual clock, driven through the real engine
//! and relay stack.

mod report;
mod scenarios;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::PointsTable;
use crate::engine::{EngineError, ReplayError, Session, SessionStatus};
use crate::io::event::Event;
use crate::model::{
    validate_session, AssertionId, Money, OptionId, ParticipantId, Role, SessionSpec, SpecError,
    Stance,
};
use crate::relay::{ExtractiveDistiller, RelayPolicy};
use crate::topology::{partition, Room, TopologyError};

pub use report::{
    propagation_time, role_separation_violations, roster_utility, SimulationReport, VotePoint,
};
pub use scenarios::{
    individual_survey, information_asymmetry, reference_session, reference_session_spec, single_origin_ring,
    synthetic_dataset,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("assertion `{0}` does not appear in the log")]
    UnknownAssertion(AssertionId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotProfile {
    /// Defaults to `bot-NNN` by position in the scenario.
    #[serde(default)]
    pub id: Option<ParticipantId>,
    /// Options the bot knows about, with utility weights.
    #[serde(default)]
    pub preference: BTreeMap<OptionId, f64>,
    /// Probability of posting (and voting) on each tick.
    pub chattiness: f64,
    /// Probability of switching to a relayed option whose reported support
    /// beats local support for the bot's current pick.
    pub adoption: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_tick_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub spec: SessionSpec,
    pub bots: Vec<BotProfile>,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    /// Upper bound; the run stops early once the session finishes.
    pub total_ticks: u64,
    #[serde(default = "default_true")]
    pub relay_enabled: bool,
    #[serde(default)]
    pub relay_policy: RelayPolicy,
    /// Relay cycles run every this many ticks.
    #[serde(default = "default_relay_interval")]
    pub relay_interval_ticks: u64,
    #[serde(default)]
    pub seed: u64,
    /// Used only for utility in condition comparisons.
    #[serde(default)]
    pub true_points: PointsTable,
}

fn default_true() -> bool {
    true
}

fn default_relay_interval() -> u64 {
    1
}

impl ScenarioConfig {
    pub fn participant_ids(&self) -> Vec<ParticipantId> {
        self.bots
            .iter()
            .enumerate()
            .map(|(i, b)| b.id.clone().unwrap_or_else(|| ParticipantId(format!("bot-{i:03}"))))
            .collect()
    }

    /// The rooms the session will form, so profiles can be matched to rooms.
    pub fn room_assignment(&self) -> Result<Vec<Room>, SimError> {
        Ok(partition(&self.participant_ids(), &self.spec.topology)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.bots.is_empty() {
            return bad("no bots".into());
        }
        if self.tick_ms == 0 || self.relay_interval_ticks == 0 {
            return bad("tick_ms and relay_interval_ticks must be positive".into());
        }
        for (i, b) in self.bots.iter().enumerate() {
            if !(0.0..=1.0).contains(&b.chattiness) || !(0.0..=1.0).contains(&b.adoption) {
                return bad(format!("bot {i}: probabilities must be in [0, 1]"));
            }
            if b.preference.values().any(|w| !w.is_finite()) {
                return bad(format!("bot {i}: preference weights must be finite"));
            }
        }
        let ids = self.participant_ids();
        let mut unique = ids.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != ids.len() {
            return bad("duplicate bot ids".into());
        }
        self.relay_policy
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

const REASONS: &[&str] = &[
    "the matchup looks soft",
    "the usage has been steady",
    "the price is right",
    "recent form is strong",
    "the weather should be fine",
    "the volume keeps going up",
];

struct Bot<'a> {
    id: ParticipantId,
    profile: &'a BotProfile,
    chat_rng: ChaCha8Rng,
    adopt_rng: ChaCha8Rng,
    /// Round index and the bot's current pick for it.
    pick: Option<(usize, OptionId)>,
    /// Highest relayed support heard per option in the current round.
    heard: BTreeMap<OptionId, u32>,
    voted: Option<(usize, OptionId)>,
    /// How far into its room transcript the bot has read.
    read: usize,
}

impl Bot<'_> {
    fn favourite(&self, feasible: &[(OptionId, Money)]) -> Option<OptionId> {
        feasible
            .iter()
            .filter_map(|(id, salary)| self.profile.preference.get(id).map(|w| (id, *salary, *w)))
            .max_by(|a, b| {
                a.2.total_cmp(&b.2)
                    .then(b.1.cmp(&a.1))
                    .then(b.0.cmp(a.0))
            })
            .map(|(id, _, _)| id.clone())
    }
}

/// Runs a scenario to completion (or `total_ticks`) and returns the log.
pub fn run_scenario_log(config: &ScenarioConfig) -> Result<Vec<Event>, SimError> {
    Ok(run_scenario_session(config)?.into_parts().1)
}

/// Like [`run_scenario_log`], but keeps the live session.
pub fn run_scenario_session(config: &ScenarioConfig) -> Result<Session, SimError> {
    config.validate()?;
    let spec = validate_session(config.spec.clone())?;
    let ids = config.participant_ids();
    let mut session = Session::new(spec);
    session.start(&ids, 0)?;

    let mut bots: Vec<Bot> = ids
        .iter()
        .zip(&config.bots)
        .map(|(id, profile)| {
            let mut chat_rng = ChaCha8Rng::seed_from_u64(profile.seed);
            chat_rng.set_stream(config.seed.wrapping_mul(2));
            let mut adopt_rng = ChaCha8Rng::seed_from_u64(profile.seed);
            adopt_rng.set_stream(config.seed.wrapping_mul(2).wrapping_add(1));
            Bot {
                id: id.clone(),
                profile,
                chat_rng,
                adopt_rng,
                pick: None,
                heard: BTreeMap::new(),
                voted: None,
                read: 0,
            }
        })
        .collect();

    let distiller = ExtractiveDistiller;
    let mut cycle = 0u64;
    for t in 0..config.total_ticks {
        let now = t * config.tick_ms;
        session.tick(now)?;
        match session.state().status {
            SessionStatus::Finished => break,
            SessionStatus::RoundOpen => {}
            _ => continue,
        }
        if session.state().selection_round().is_some() {
            bots_act(&mut session, &mut bots, now)?;
        }
        if config.relay_enabled && t % config.relay_interval_ticks == 0 {
            cycle += 1;
            session.relay_cycle(now, cycle, &config.relay_policy, &distiller)?;
        }
    }
    Ok(session)
}

fn bots_act(session: &mut Session, bots: &mut [Bot], now: u64) -> Result<(), EngineError> {
    let (round, feasible) = {
        let state = session.state();
        let r = state.selection_round().expect("checked by caller");
        let position = state.position(&r.position);
        let feasible: Vec<(OptionId, Money)> = position
            .options
            .iter()
            .filter(|o| r.feasible.contains(&o.id))
            .map(|o| (o.id.clone(), o.salary))
            .collect();
        (r.index, feasible)
    };

    for bot in bots.iter_mut() {
        let state = session.state();
        let Ok(member) = state.member(&bot.id) else { continue };
        if !member.active {
            continue;
        }
        let room = member.room;
        if bot.pick.as_ref().is_none_or(|(r, _)| *r != round) {
            bot.pick = bot.favourite(&feasible).map(|o| (round, o));
            bot.heard.clear();
        }

        // Adoption: react to agent posts not yet read. Known support for an
        // option is the larger of its local tally and any relayed count.
        let transcript = &state.transcripts[room];
        let mut fresh = false;
        for message in &transcript[bot.read.min(transcript.len())..] {
            if message.role != Role::Agent {
                continue;
            }
            for a in &message.assertions {
                let subject = OptionId::new(&a.subject);
                if a.stance != Stance::For || !feasible.iter().any(|(id, _)| *id == subject) {
                    continue;
                }
                let heard = bot.heard.entry(subject).or_insert(0);
                *heard = (*heard).max(a.support_count);
                fresh = true;
            }
        }
        bot.read = transcript.len();
        let mut switch_to: Option<OptionId> = None;
        if fresh {
            let tallies = state.room_tallies(room);
            let known = |o: &OptionId| {
                tallies
                    .get(o)
                    .copied()
                    .unwrap_or(0)
                    .max(bot.heard.get(o).copied().unwrap_or(0))
            };
            let current = bot.pick.as_ref().map(|(_, o)| o);
            let current_support = current.map(&known).unwrap_or(0);
            let best = bot
                .heard
                .iter()
                .filter(|(o, _)| Some(*o) != current)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)));
            if let Some((option, &support)) = best {
                if support > current_support
                    && bot.adopt_rng.gen::<f64>() < bot.profile.adoption
                {
                    switch_to = Some(option.clone());
                }
            }
        }

        if let Some(option) = switch_to {
            bot.pick = Some((round, option.clone()));
            session.cast_vote(&bot.id, &option, now)?;
            bot.voted = Some((round, option));
        }

        if bot.profile.chattiness > 0.0 && bot.chat_rng.gen::<f64>() < bot.profile.chattiness {
            if let Some((_, option)) = bot.pick.clone() {
                let reason = REASONS[bot.chat_rng.gen_range(0..REASONS.len())];
                session.chat(&bot.id, &format!("I like {option} because {reason}."), now)?;
                if bot.voted.as_ref() != Some(&(round, option.clone())) {
                    session.cast_vote(&bot.id, &option, now)?;
                    bot.voted = Some((round, option));
                }
                bot.read = session.state().transcripts[room].len();
            }
        }
    }
    Ok(())
}

/// Runs the scenario and derives its report from the resulting log.
pub fn run_scenario(config: &ScenarioConfig) -> Result<(Vec<Event>, SimulationReport), SimError> {
    let log = run_scenario_log(config)?;
    let spec = validate_session(config.spec.clone())?;
    let report = SimulationReport::from_log(spec, &log)?;
    Ok((log, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionComparison {
    pub relay_on: SimulationReport,
    pub relay_off: SimulationReport,
    /// Roster utility (true points) of relay-on minus relay-off.
    pub utility_delta: f64,
    /// Relay deliveries of relay-on minus relay-off.
    pub coverage_delta: i64,
}

/// Runs the same scenario with the relay enabled and disabled.
pub fn compare_conditions(config: &ScenarioConfig) -> Result<ConditionComparison, SimError> {
    let mut on = config.clone();
    on.relay_enabled = true;
    let mut off = config.clone();
    off.relay_enabled = false;
    let (_, relay_on) = run_scenario(&on)?;
    let (_, relay_off) = run_scenario(&off)?;
    let utility = |r: &SimulationReport| roster_utility(r, &config.true_points);
    Ok(ConditionComparison {
        utility_delta: utility(&relay_on) - utility(&relay_off),
        coverage_delta: relay_on.relay_deliveries as i64 - relay_off.relay_deliveries as i64,
        relay_on,
        relay_off,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::replay;
    use crate::io::event::encode_log;
    use crate::model::{PositionId, RoomId};
    use crate::topology::{build_neighbor_graph, room_id, SubgroupGraph};

    #[test]
    fn reference_session_session_finishes_within_budget() {
        let config = reference_session(25, 3);
        let (log, report) = run_scenario(&config).unwrap();
        assert!(report.finished);
        let roster = report.final_roster.unwrap();
        assert_eq!(roster.picks.len(), 9);
        assert!(roster.total_cost <= Money(50_000));
        assert!(role_separation_violations(&log).is_empty());
        let spec = validate_session(config.spec.clone()).unwrap();
        let state = replay(spec, &log).unwrap();
        assert_eq!(state.roster.as_ref(), Some(&roster));
    }

    #[test]
    fn same_seed_same_log() {
        let config = reference_session(25, 9);
        let a = encode_log(&run_scenario_log(&config).unwrap());
        let b = encode_log(&run_scenario_log(&config).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn silent_bots_get_cheapest_picks() {
        let mut config = reference_session(25, 4);
        for b in &mut config.bots {
            b.chattiness = 0.0;
        }
        let (_, report) = run_scenario(&config).unwrap();
        assert_eq!(report.contribution.per_user_counts.values().sum::<u32>(), 0);
        let roster = report.final_roster.unwrap();
        for p in &config.spec.positions {
            let cheapest = p.options.iter().min_by_key(|o| (o.salary, o.id.clone())).unwrap();
            assert_eq!(roster.picks[&p.id], cheapest.id);
        }
    }

    #[test]
    fn ring_arrival_equals_ring_distance() {
        let config = single_origin_ring(6, 1, 0).unwrap();
        let (log, _) = run_scenario(&config).unwrap();
        let times = propagation_time(&log, &AssertionId::new("room-0/X/for")).unwrap();
        let expected: BTreeMap<RoomId, u64> = (0..6).map(|i| (room_id(i), i as u64)).collect();
        assert_eq!(times, expected);

        let config = single_origin_ring(7, 2, 1).unwrap();
        let (log, _) = run_scenario(&config).unwrap();
        let times = propagation_time(&log, &AssertionId::new("room-0/X/for")).unwrap();
        let graph = SubgroupGraph {
            rooms: (0..7)
                .map(|i| crate::topology::Room { id: room_id(i), members: vec![] })
                .collect(),
            edges: build_neighbor_graph(7, 2),
        };
        for (i, d) in graph.bfs_distances(0).into_iter().enumerate() {
            assert_eq!(times.get(&room_id(i)).copied(), d.map(|d| d as u64));
        }
        assert!(matches!(
            propagation_time(&log, &AssertionId::new("room-3/Y/for")),
            Err(SimError::UnknownAssertion(_))
        ));
    }

    #[test]
    fn relay_spreads_the_hidden_best_option() {
        let config = information_asymmetry(0.9, 5).unwrap();
        let cmp = compare_conditions(&config).unwrap();
        let pick = |r: &SimulationReport| r.final_roster.as_ref().unwrap().picks[&PositionId::new("P")].clone();
        assert_eq!(pick(&cmp.relay_on), OptionId::new("G"));
        assert_eq!(pick(&cmp.relay_off), OptionId::new("L"));
        assert_eq!(cmp.relay_off.agent_messages, 0);
        assert!(cmp.utility_delta > 0.0);
        assert!(cmp.coverage_delta > 0);
    }

    #[test]
    fn no_adoption_means_relay_changes_nothing() {
        let config = information_asymmetry(0.0, 5).unwrap();
        let cmp = compare_conditions(&config).unwrap();
        assert_eq!(cmp.relay_on.final_roster, cmp.relay_off.final_roster);
        assert_eq!(cmp.utility_delta, 0.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut config = reference_session(5, 1);
        config.bots[0].chattiness = 1.5;
        assert!(matches!(run_scenario(&config), Err(SimError::InvalidConfig(_))));
        let mut config = reference_session(5, 1);
        config.bots.clear();
        assert!(matches!(run_scenario(&config), Err(SimError::InvalidConfig(_))));
    }
}
