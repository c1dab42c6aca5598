//! Generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use csi_core::analytics::PointsTable;
use csi_core::io::event::{Event, EventBody, FeasibleOption, RoundOutcome};
use csi_core::model::{
    Assertion, Money, OptionId, PlayerOption, PositionSpec, PrefilledPick, Roster, RoomId,
    SessionSpec, Stance,
};
use csi_core::relay::RelayPolicy;
use csi_core::sim::{BotProfile, ScenarioConfig};
use csi_core::topology::TopologyParams;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `1..=max_positions` positions of `1..=max_options` options, salaries in
/// hundreds.
pub fn random_positions(rng: &mut impl Rng, max_positions: usize, max_options: usize) -> Vec<PositionSpec> {
    (0..rng.gen_range(1..=max_positions))
        .map(|p| PositionSpec {
            id: format!("P{p}").as_str().into(),
            label: format!("position {p}"),
            options: (0..rng.gen_range(1..=max_options))
                .map(|o| PlayerOption {
                    id: OptionId(format!("P{p}o{o}")),
                    label: format!("option {o}"),
                    salary: Money(rng.gen_range(1..=100) * 100),
                })
                .collect(),
        })
        .collect()
}

/// Cheapest and dearest full completion.
pub fn cost_range(positions: &[PositionSpec]) -> (u64, u64) {
    positions.iter().fold((0, 0), |(lo, hi), p| {
        let s = p.options.iter().map(|o| o.salary.0);
        (lo + s.clone().min().unwrap(), hi + s.max().unwrap())
    })
}

/// A completable spec. Budgets range from exactly the cheapest completion
/// to a little over the dearest, so both tight and slack cases occur.
pub fn random_spec(rng: &mut impl Rng, id: &str, max_positions: usize, max_options: usize) -> SessionSpec {
    let positions = random_positions(rng, max_positions, max_options);
    let (lo, hi) = cost_range(&positions);
    let slack = match rng.gen_range(0..4) {
        0 => 0,
        _ => rng.gen_range(0..=(hi - lo + 200)),
    };
    let prefilled: Vec<PrefilledPick> = (0..rng.gen_range(0..=2))
        .map(|i| PrefilledPick {
            position: format!("F{i}").as_str().into(),
            option: OptionId(format!("pre-F{i}")),
            salary: Money(rng.gen_range(0..=50) * 100),
        })
        .collect();
    let prefilled_cost: u64 = prefilled.iter().map(|p| p.salary.0).sum();
    SessionSpec {
        session_id: id.into(),
        positions,
        budget: Money(lo + slack + prefilled_cost),
        round_seconds: rng.gen_range(5..=30),
        prefilled,
        topology: TopologyParams {
            target_size: rng.gen_range(2..=6),
            room_count_override: None,
            out_degree: rng.gen_range(1..=3),
            seed: rng.gen(),
        },
        round_order_seed: rng.gen(),
        task_kind: Default::default(),
    }
}

/// A random bot deliberation over a random completable spec.
pub fn random_scenario(seed: u64) -> ScenarioConfig {
    let mut rng = rng(seed);
    let spec = random_spec(&mut rng, &format!("fuzz-{seed}"), 5, 6);
    let options: Vec<OptionId> = spec.positions.iter().flat_map(|p| p.options.iter().map(|o| o.id.clone())).collect();
    let bots = (0..rng.gen_range(2..=30))
        .map(|i| BotProfile {
            id: None,
            preference: options
                .iter()
                .filter_map(|o| {
                    let keep = rng.gen_bool(0.7);
                    let value = rng.gen_range(-5.0..20.0);
                    keep.then(|| (o.clone(), value))
                })
                .collect(),
            chattiness: rng.gen_range(0.0..=1.0),
            adoption: rng.gen_range(0.0..=1.0),
            seed: seed.wrapping_mul(31).wrapping_add(i),
        })
        .collect();
    let (cadence_seconds, cadence_messages) = match rng.gen_range(0..3) {
        0 => (0, rng.gen_range(1..=10)),
        1 => (rng.gen_range(1..=30), 0),
        _ => (rng.gen_range(1..=30), rng.gen_range(1..=10)),
    };
    let rounds = spec.positions.len() as u64;
    let total_ticks = rounds * (spec.round_seconds + 1) + 5;
    ScenarioConfig {
        bots,
        tick_ms: 1000,
        total_ticks,
        relay_enabled: rng.gen_bool(0.8),
        relay_policy: RelayPolicy {
            cadence_seconds,
            cadence_messages,
            max_assertions_per_relay: rng.gen_range(1..=4),
        },
        relay_interval_ticks: rng.gen_range(1..=5),
        seed,
        true_points: PointsTable(options.iter().map(|o| (o.clone(), rng.gen_range(0.0..30.0))).collect()),
        spec,
    }
}

const ALPHABET: &[&str] = &[
    "a", "Z", "0", " ", "\"", "\\", "/", "\n", "\t", "\u{0}", "\u{1f}", "é", "ß", "中", "🙂", "\u{2028}", "{", "}", ",", ":",
];

pub fn random_text(rng: &mut impl Rng, max: usize) -> String {
    (0..rng.gen_range(0..=max)).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

pub fn random_f64(rng: &mut impl Rng) -> f64 {
    loop {
        let v = match rng.gen_range(0..4) {
            0 => f64::from_bits(rng.gen()),
            1 => rng.gen_range(-1e6..1e6),
            2 => rng.gen_range(0..1000) as f64,
            _ => *[0.0, -0.0, f64::MIN_POSITIVE, f64::MAX, f64::MIN, 1e-300, 5e-324].choose(rng).unwrap(),
        };
        if v.is_finite() {
            return v;
        }
    }
}

fn random_id(rng: &mut impl Rng) -> String {
    let base = ["QB1", "room-3", "bot-007", "agent:room-1", "system"].choose(rng).unwrap();
    if rng.gen_bool(0.3) {
        format!("{base}{}", random_text(rng, 3))
    } else {
        (*base).to_owned()
    }
}

fn random_assertion(rng: &mut impl Rng) -> Assertion {
    let origin = RoomId(random_id(rng));
    let subject = random_id(rng);
    let stance = if rng.gen() { Stance::For } else { Stance::Against };
    Assertion {
        id: Assertion::make_id(&origin, &subject, stance),
        subject,
        stance,
        arguments: (0..rng.gen_range(0..3)).map(|_| random_text(rng, 12)).collect(),
        support_count: rng.gen(),
        origin_room: origin,
    }
}

fn random_body(rng: &mut impl Rng) -> EventBody {
    let money = |rng: &mut dyn rand::RngCore| Money(rng.gen());
    match rng.gen_range(0..11) {
        0 => EventBody::Join {
            participant: random_id(rng).as_str().into(),
            room: RoomId(random_id(rng)),
        },
        1 => EventBody::Leave {
            participant: random_id(rng).as_str().into(),
        },
        2 => EventBody::Chat {
            text: random_text(rng, 40),
        },
        3 => EventBody::AgentPost {
            source_room: RoomId(random_id(rng)),
            cycle: rng.gen(),
            assertions: (0..rng.gen_range(0..3)).map(|_| random_assertion(rng)).collect(),
            text: random_text(rng, 40),
        },
        4 => EventBody::SystemPost {
            text: random_text(rng, 20),
        },
        5 => EventBody::RoundStart {
            round: rng.gen_range(0..20),
            position: rng.gen_bool(0.8).then(|| random_id(rng).as_str().into()),
            opened_at: rng.gen(),
            closes_at: rng.gen(),
            feasible: (0..rng.gen_range(0..4))
                .map(|_| FeasibleOption {
                    id: OptionId(random_id(rng)),
                    label: random_text(rng, 8),
                    salary: money(rng),
                })
                .collect(),
            remaining_budget: money(rng),
        },
        6 => EventBody::Vote {
            option: OptionId(random_id(rng)),
        },
        7 => EventBody::RoundEnd {
            round: rng.gen_range(0..20),
            outcome: match rng.gen_range(0..3) {
                0 => RoundOutcome::Pick {
                    option: OptionId(random_id(rng)),
                    salary: money(rng),
                },
                1 => RoundOutcome::Estimate {
                    value: Some(random_f64(rng)),
                },
                _ => RoundOutcome::Estimate { value: None },
            },
        },
        8 => EventBody::BudgetUpdate {
            remaining_budget: money(rng),
        },
        9 => EventBody::RosterFinal {
            roster: Roster {
                picks: (0..rng.gen_range(0..6))
                    .map(|_| (random_id(rng).as_str().into(), OptionId(random_id(rng))))
                    .collect::<BTreeMap<_, _>>(),
                total_cost: money(rng),
            },
        },
        _ => EventBody::EstimateSubmit {
            value: random_f64(rng),
        },
    }
}

/// `n` structurally valid events with strictly increasing seq. Bodies are
/// arbitrary; they need not replay.
pub fn event_corpus(seed: u64, n: usize) -> Vec<Event> {
    let mut rng = rng(seed);
    let mut seq = 0u64;
    (0..n)
        .map(|_| {
            seq += rng.gen_range(1..=3);
            Event {
                seq,
                ts: rng.gen(),
                session: random_id(&mut rng),
                room: rng.gen_bool(0.6).then(|| RoomId(random_id(&mut rng))),
                actor: random_id(&mut rng),
                body: random_body(&mut rng),
            }
        })
        .collect()
}

/// All complete picks over `positions`, as salary totals. Small inputs only.
pub fn all_completion_costs(positions: &[&PositionSpec]) -> Vec<u64> {
    let mut totals = vec![0u64];
    for p in positions {
        totals = totals
            .iter()
            .flat_map(|t| p.options.iter().map(move |o| t + o.salary.0))
            .collect();
    }
    totals
}
