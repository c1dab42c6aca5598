//! Ready-made scenarios with outcomes that follow from the bot rules.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BotProfile, ScenarioConfig, SimError};
use crate::analytics::{PointsTable, SessionDataset, SurveyResponse};
use crate::model::{
    min_completion_cost, validate_session, Money, OptionId, PlayerOption, PositionSpec,
    PrefilledPick, SessionSpec, ValidatedSession,
};
use crate::relay::RelayPolicy;
use crate::topology::{room_index, TopologyParams};

fn single_position_spec(id: &str, options: &[&str], round_seconds: u64, topology: TopologyParams) -> SessionSpec {
    SessionSpec {
        session_id: id.into(),
        positions: vec![PositionSpec {
            id: "P".into(),
            label: "pick".into(),
            options: options
                .iter()
                .map(|&o| PlayerOption {
                    id: o.into(),
                    label: o.into(),
                    salary: Money(1000),
                })
                .collect(),
        }],
        budget: Money(1000),
        round_seconds,
        prefilled: vec![],
        topology,
        round_order_seed: 0,
        task_kind: Default::default(),
    }
}

fn prefers(option: &str) -> BTreeMap<OptionId, f64> {
    [(OptionId::new(option), 1.0)].into()
}

/// `rooms` rooms of two bots on a ring with out-degree `k`. Only room 0
/// talks, about option `X`; the relay fires on every cycle.
///
/// The assertion `room-0/X/for` should reach each room after as many
/// cycles as its ring distance from room 0.
pub fn single_origin_ring(rooms: usize, k: usize, seed: u64) -> Result<ScenarioConfig, SimError> {
    let topology = TopologyParams {
        target_size: 2,
        room_count_override: Some(rooms),
        out_degree: k,
        seed,
    };
    let mut config = ScenarioConfig {
        spec: single_position_spec("ring", &["X", "Y"], 3600, topology),
        bots: (0..2 * rooms)
            .map(|i| BotProfile {
                id: None,
                preference: prefers("X"),
                chattiness: 0.0,
                adoption: 0.0,
                seed: i as u64,
            })
            .collect(),
        tick_ms: 1000,
        total_ticks: rooms as u64 + 3,
        relay_enabled: true,
        relay_policy: RelayPolicy::always(),
        relay_interval_ticks: 1,
        seed,
        true_points: PointsTable::default(),
    };
    let ids = config.participant_ids();
    for room in config.room_assignment()? {
        if room_index(&room.id) == Some(0) {
            for member in &room.members {
                let i = ids.iter().position(|p| p == member).expect("partition keeps ids");
                config.bots[i].chattiness = 1.0;
            }
        }
    }
    Ok(config)
}

/// 25 bots in 5 rooms choosing one option.
///
/// Room 0 all prefer `G`. Elsewhere three bots per room prefer `L` and two
/// prefer a room-specific `M<r>`. Without relay `L` wins 12 to 5; with
/// relay, `G`'s reported support of 5 beats every local count, and bots
/// adopt it with probability `adoption`.
pub fn information_asymmetry(adoption: f64, seed: u64) -> Result<ScenarioConfig, SimError> {
    let topology = TopologyParams {
        target_size: 5,
        room_count_override: None,
        out_degree: 2,
        seed,
    };
    let options = ["G", "L", "M1", "M2", "M3", "M4"];
    let mut config = ScenarioConfig {
        spec: single_position_spec("asymmetry", &options, 240, topology),
        bots: (0..25)
            .map(|i| BotProfile {
                id: None,
                preference: BTreeMap::new(),
                chattiness: 0.5,
                adoption,
                seed: seed.wrapping_mul(1000).wrapping_add(i),
            })
            .collect(),
        tick_ms: 1000,
        total_ticks: 300,
        relay_enabled: true,
        relay_policy: RelayPolicy::default(),
        relay_interval_ticks: 5,
        seed,
        true_points: PointsTable(
            [("G", 30.0), ("L", 12.0), ("M1", 8.0), ("M2", 8.0), ("M3", 8.0), ("M4", 8.0)]
                .iter()
                .map(|&(o, p)| (OptionId::new(o), p))
                .collect(),
        ),
    };
    let ids = config.participant_ids();
    for room in config.room_assignment()? {
        let r = room_index(&room.id).expect("generated room id");
        for (j, member) in room.members.iter().enumerate() {
            let i = ids.iter().position(|p| p == member).expect("partition keeps ids");
            let bot = &mut config.bots[i];
            if r == 0 {
                bot.preference = prefers("G");
                // Everyone in room 0 speaks before the first relay.
                bot.chattiness = 1.0;
            } else if j < 3 {
                bot.preference = prefers("L");
            } else {
                bot.preference = prefers(&format!("M{r}"));
            }
        }
    }
    Ok(config)
}

const SELECTABLE: [(&str, &str, u64, u64); 5] = [
    ("QB", "Quarterback", 5000, 8500),
    ("RB", "Running Back", 4000, 9000),
    ("WR", "Wide Receiver", 3500, 8500),
    ("TE", "Tight End", 2500, 7000),
    ("DST", "Defense", 2000, 4000),
];

const PREFILLED: [(&str, u64); 4] = [("RB2", 5000), ("WR2", 4500), ("WR3", 4000), ("FLEX", 4000)];

/// Nine-slot roster with four slots prefilled for $17,500 out of $50,000,
/// leaving $32,500 for five positions of five options each.
pub fn reference_session_spec(session_id: &str, seed: u64) -> SessionSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = SELECTABLE
        .iter()
        .map(|&(id, label, lo, hi)| {
            let mut salaries: Vec<u64> = (0..5).map(|_| rng.gen_range(lo / 100..=hi / 100) * 100).collect();
            salaries[0] = lo;
            salaries.sort_unstable();
            PositionSpec {
                id: id.into(),
                label: label.into(),
                options: salaries
                    .into_iter()
                    .enumerate()
                    .map(|(i, salary)| PlayerOption {
                        id: OptionId(format!("{id}{}", i + 1)),
                        label: format!("{label} {}", i + 1),
                        salary: Money(salary),
                    })
                    .collect(),
            }
        })
        .collect();
    SessionSpec {
        session_id: session_id.into(),
        positions,
        budget: Money(50_000),
        round_seconds: 240,
        prefilled: PREFILLED
            .iter()
            .map(|&(pos, salary)| PrefilledPick {
                position: pos.into(),
                option: OptionId(format!("pre-{pos}")),
                salary: Money(salary),
            })
            .collect(),
        topology: TopologyParams {
            seed,
            ..Default::default()
        },
        round_order_seed: seed,
        task_kind: Default::default(),
    }
}

/// Points that loosely track salary.
fn true_points(spec: &SessionSpec, rng: &mut ChaCha8Rng) -> PointsTable {
    PointsTable(
        spec.positions
            .iter()
            .flat_map(|p| &p.options)
            .map(|o| {
                let base = o.salary.0 as f64 / 400.0;
                (o.id.clone(), ((base + rng.gen_range(-8.0..8.0)).max(0.0) * 10.0).round() / 10.0)
            })
            .collect(),
    )
}

/// A reference session with `bots` bots whose preferences are the true
/// points plus private noise.
pub fn reference_session(bots: usize, seed: u64) -> ScenarioConfig {
    let spec = reference_session_spec(&format!("session-{seed}"), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let points = true_points(&spec, &mut rng);
    let bots = (0..bots)
        .map(|i| BotProfile {
            id: None,
            preference: points
                .0
                .iter()
                .map(|(o, p)| (o.clone(), p + rng.gen_range(-10.0..10.0)))
                .collect(),
            chattiness: rng.gen_range(0.05..0.3),
            adoption: rng.gen_range(0.1..0.6),
            seed: seed.wrapping_mul(7919).wrapping_add(i as u64),
        })
        .collect();
    ScenarioConfig {
        spec,
        bots,
        tick_ms: 1000,
        total_ticks: 5 * 240 + 10,
        relay_enabled: true,
        relay_policy: RelayPolicy::default(),
        relay_interval_ticks: 5,
        seed,
        true_points: points,
    }
}

/// What a bot would submit alone: best-preferred affordable option per
/// position, in spec order, keeping the rest completable.
pub fn individual_survey(spec: &ValidatedSession, participant: &str, bot: &BotProfile) -> SurveyResponse {
    let mut remaining = spec.starting_budget();
    let mut picks = BTreeMap::new();
    for (i, position) in spec.positions.iter().enumerate() {
        let reserve = min_completion_cost(&spec.positions[i + 1..]);
        let choice = position
            .options
            .iter()
            .filter(|o| o.salary + reserve <= remaining)
            .max_by(|a, b| {
                let wa = bot.preference.get(&a.id).copied().unwrap_or(f64::MIN);
                let wb = bot.preference.get(&b.id).copied().unwrap_or(f64::MIN);
                wa.total_cmp(&wb).then(b.salary.cmp(&a.salary)).then(b.id.cmp(&a.id))
            })
            .expect("validated spec is completable");
        remaining = remaining - choice.salary;
        picks.insert(position.id.clone(), choice.id.clone());
    }
    SurveyResponse {
        participant: participant.into(),
        picks,
    }
}

/// `sessions` simulated sessions, each with individual surveys, the group
/// roster from a bot deliberation, and true points.
pub fn synthetic_dataset(sessions: usize, bots: usize, seed: u64) -> Result<Vec<SessionDataset>, SimError> {
    (0..sessions)
        .map(|s| {
            let config = reference_session(bots, seed.wrapping_add(s as u64));
            let (_, report) = super::run_scenario(&config)?;
            let spec = validate_session(config.spec.clone())?;
            let csi_roster = report.final_roster.ok_or_else(|| {
                SimError::InvalidConfig("simulated session did not finish".into())
            })?;
            let surveys = config
                .participant_ids()
                .iter()
                .zip(&config.bots)
                .map(|(id, bot)| individual_survey(&spec, id.as_str(), bot))
                .collect();
            Ok(SessionDataset {
                spec,
                surveys,
                csi_roster,
                points: config.true_points,
                allow_over_budget_surveys: false,
            })
        })
        .collect()
}
