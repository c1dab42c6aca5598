//! Per-room conversational relay agents.
//!
//! Each cycle, every room whose cadence trigger fired is distilled into a
//! short list of [`Assertion`]s, which are rendered as a first-person
//! message and posted into each out-neighbor room. A [`RelayLedger`]
//! guarantees that an assertion reaches a given room at most once.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Assertion, AssertionId, Message, OptionId, Role, RoomId, Stance};
use crate::topology::SubgroupGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillerKind {
    Extractive,
    Remote,
}

fn default_cadence_seconds() -> u64 {
    20
}
fn default_cadence_messages() -> u32 {
    8
}
fn default_max_assertions() -> usize {
    2
}

/// When a room's agent speaks up, and how much it may carry.
///
/// A zero cadence disables that trigger; at least one must be positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayPolicy {
    #[serde(default = "default_cadence_seconds")]
    pub cadence_seconds: u64,
    #[serde(default = "default_cadence_messages")]
    pub cadence_messages: u32,
    #[serde(default = "default_max_assertions")]
    pub max_assertions_per_relay: usize,
}

impl Default for RelayPolicy {
    fn default() -> Self {
        Self {
            cadence_seconds: default_cadence_seconds(),
            cadence_messages: default_cadence_messages(),
            max_assertions_per_relay: default_max_assertions(),
        }
    }
}

impl RelayPolicy {
    /// Fires on every cycle, with no cap on assertions per message.
    pub fn always() -> Self {
        Self {
            cadence_seconds: 0,
            cadence_messages: 0,
            max_assertions_per_relay: usize::MAX,
        }
    }

    pub fn validate(&self) -> Result<(), RelayError> {
        if self.max_assertions_per_relay == 0 {
            return Err(RelayError::InvalidPolicy("max_assertions_per_relay must be positive"));
        }
        Ok(())
    }

    /// A policy with both cadences at zero fires on every cycle.
    pub fn fires(&self, now: u64, last_relay_ts: u64, human_since_relay: usize) -> bool {
        if self.cadence_seconds == 0 && self.cadence_messages == 0 {
            return true;
        }
        let by_time = self.cadence_seconds > 0
            && now.saturating_sub(last_relay_ts) >= self.cadence_seconds * 1000;
        let by_count =
            self.cadence_messages > 0 && human_since_relay >= self.cadence_messages as usize;
        by_time || by_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelayError {
    #[error("remote distiller unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("invalid relay policy: {0}")]
    InvalidPolicy(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelayRecord {
    pub assertion: AssertionId,
    pub source: RoomId,
    pub destination: RoomId,
    pub ts: u64,
}

/// Delivery ledger. Check-and-record is a single call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelayLedger {
    records: Vec<RelayRecord>,
    delivered: BTreeSet<(AssertionId, RoomId)>,
    origins: BTreeMap<AssertionId, RoomId>,
}

impl RelayLedger {
    /// Records the delivery unless `(assertion, destination)` already exists.
    pub fn try_record(&mut self, record: RelayRecord, origin: &RoomId) -> bool {
        let key = (record.assertion.clone(), record.destination.clone());
        if !self.delivered.insert(key) {
            return false;
        }
        self.origins
            .entry(record.assertion.clone())
            .or_insert_with(|| origin.clone());
        self.records.push(record);
        true
    }

    pub fn contains(&self, assertion: &AssertionId, destination: &RoomId) -> bool {
        self.delivered
            .contains(&(assertion.clone(), destination.clone()))
    }

    pub fn records(&self) -> &[RelayRecord] {
        &self.records
    }

    /// True when the room already holds the assertion, as origin or by delivery.
    pub fn holds(&self, assertion: &Assertion, room: &RoomId) -> bool {
        &assertion.origin_room == room || self.contains(&assertion.id, room)
    }

    /// Ids that every one of `neighbors` already holds.
    pub fn exhausted_for(&self, neighbors: &[RoomId]) -> BTreeSet<AssertionId> {
        self.origins
            .iter()
            .filter(|(id, origin)| {
                neighbors
                    .iter()
                    .all(|n| n == *origin || self.contains(id, n))
            })
            .map(|(id, _)| id.clone())
            .collect()
    }
}

/// Request body sent to a remote distiller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRequest {
    pub session_id: String,
    pub room_id: RoomId,
    /// Room transcript window, ordered by seq.
    pub transcript_window: Vec<Message>,
    pub tallies: BTreeMap<OptionId, u32>,
    pub already_relayed: BTreeSet<AssertionId>,
    /// Option ids under discussion this round.
    pub options: Vec<OptionId>,
    pub max_assertions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteAssertion {
    pub subject: String,
    pub stance: Stance,
    #[serde(default)]
    pub arguments: Vec<String>,
    pub support_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillResponse {
    pub assertions: Vec<RemoteAssertion>,
}

impl DistillResponse {
    /// Assigns identities for assertions born in `room`; support is capped
    /// at the room's size.
    pub fn into_assertions(self, room: &RoomId, room_size: usize, limit: usize) -> Vec<Assertion> {
        let cap = u32::try_from(room_size).unwrap_or(u32::MAX);
        let mut seen = BTreeSet::new();
        self.assertions
            .into_iter()
            .filter(|a| seen.insert((a.subject.clone(), a.stance)))
            .take(limit)
            .map(|a| Assertion {
                id: Assertion::make_id(room, &a.subject, a.stance),
                subject: a.subject,
                stance: a.stance,
                arguments: a.arguments,
                support_count: a.support_count.min(cap),
                origin_room: room.clone(),
            })
            .collect()
    }
}

pub trait Distiller {
    fn kind(&self) -> DistillerKind;

    /// `room_size` bounds support counts of assertions born in this room.
    fn distill(&self, request: &DistillRequest, room_size: usize)
        -> Result<Vec<Assertion>, RelayError>;
}

/// Deterministic keyword distiller over templated chat.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveDistiller;

impl Distiller for ExtractiveDistiller {
    fn kind(&self) -> DistillerKind {
        DistillerKind::Extractive
    }

    fn distill(
        &self,
        request: &DistillRequest,
        _room_size: usize,
    ) -> Result<Vec<Assertion>, RelayError> {
        Ok(distill_extractive(
            &request.room_id,
            &request.transcript_window,
            &request.options,
            &request.already_relayed,
            request.max_assertions,
        ))
    }
}

const NEGATIVE_CUES: &[&str] = &[
    "not", "don't", "dont", "avoid", "against", "skip", "never", "no", "fade", "overrated",
];

fn tokens(sentence: &str) -> impl Iterator<Item = &str> {
    sentence
        .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_' || c == '\''))
        .filter(|t| !t.is_empty())
}

/// Splits on sentence punctuation, keeping the terminator.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let s = text[start..i + c.len_utf8()].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + c.len_utf8();
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Option mentions in a sentence with their stance. A negative cue before
/// the mention flips it to `Against`.
fn mentions(sentence: &str, options: &[OptionId]) -> Vec<(usize, Stance)> {
    let mut negated = false;
    let mut found: Vec<(usize, Stance)> = Vec::new();
    for token in tokens(sentence) {
        if let Some(opt) = options.iter().position(|o| o.0.eq_ignore_ascii_case(token)) {
            let stance = if negated { Stance::Against } else { Stance::For };
            if !found.iter().any(|(o, _)| *o == opt) {
                found.push((opt, stance));
            }
        } else if NEGATIVE_CUES.iter().any(|c| c.eq_ignore_ascii_case(token)) {
            negated = true;
        }
    }
    found
}

struct Candidate<'w> {
    subject: &'w OptionId,
    stance: Stance,
    arguments: Vec<&'w str>,
    supporters: BTreeSet<&'w str>,
    first_seen: usize,
}

/// Extractive distillation over a transcript window.
///
/// Human sentences become `(option, stance)` assertions ranked by distinct
/// supporters, ties by earliest mention. Assertions carried in by agent
/// posts from other rooms are forwarded as-is. Anything in
/// `already_relayed` is dropped, and at most `limit` items are returned.
pub fn distill_extractive(
    room: &RoomId,
    window: &[Message],
    options: &[OptionId],
    already_relayed: &BTreeSet<AssertionId>,
    limit: usize,
) -> Vec<Assertion> {
    let mut local: BTreeMap<(usize, Stance), Candidate> = BTreeMap::new();
    let mut carried: BTreeMap<&AssertionId, (usize, &Assertion)> = BTreeMap::new();
    let mut order = 0usize;
    for message in window {
        match message.role {
            Role::Human => {
                for sentence in sentences(&message.text) {
                    for (option, stance) in mentions(sentence, options) {
                        let entry = local.entry((option, stance)).or_insert_with(|| {
                            order += 1;
                            Candidate {
                                subject: &options[option],
                                stance,
                                arguments: Vec::new(),
                                supporters: BTreeSet::new(),
                                first_seen: order,
                            }
                        });
                        entry.supporters.insert(&message.author);
                        if !entry.arguments.contains(&sentence) {
                            entry.arguments.push(sentence);
                        }
                    }
                }
            }
            Role::Agent => {
                for a in &message.assertions {
                    if &a.origin_room == room || carried.contains_key(&a.id) {
                        continue;
                    }
                    order += 1;
                    carried.insert(&a.id, (order, a));
                }
            }
            Role::System => {}
        }
    }

    let mut ranked: Vec<(u32, usize, Assertion)> = Vec::new();
    for c in local.into_values() {
        let id = Assertion::make_id(room, &c.subject.0, c.stance);
        if already_relayed.contains(&id) {
            continue;
        }
        ranked.push((
            c.supporters.len() as u32,
            c.first_seen,
            Assertion {
                id,
                subject: c.subject.0.clone(),
                stance: c.stance,
                arguments: c.arguments.into_iter().map(str::to_owned).collect(),
                support_count: c.supporters.len() as u32,
                origin_room: room.clone(),
            },
        ));
    }
    for (id, (first_seen, a)) in carried {
        if !already_relayed.contains(id) {
            ranked.push((a.support_count, first_seen, a.clone()));
        }
    }
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(limit).map(|(_, _, a)| a).collect()
}

const SUFFIX_OPEN: &str = "[relay:";

/// Renders assertions as one first-person message. The trailing
/// `[relay:id,...]` suffix carries the assertion ids.
pub fn compose_relay_message(assertions: &[Assertion], _source_room: &RoomId) -> String {
    let mut clauses = Vec::with_capacity(assertions.len());
    for (i, a) in assertions.iter().enumerate() {
        let lead = match (i, a.stance) {
            (0, Stance::For) => format!("I've been hearing a strong case for {}", a.subject),
            (0, Stance::Against) => format!("I've been hearing a case against {}", a.subject),
            (_, Stance::For) => format!("I also think {} deserves a look", a.subject),
            (_, Stance::Against) => format!("I'd also be careful with {}", a.subject),
        };
        let argument = a
            .arguments
            .first()
            .map(|arg| format!(" because \"{}\"", reason_text(arg, &a.subject)))
            .unwrap_or_default();
        let people = if a.support_count == 1 { "person" } else { "people" };
        clauses.push(format!(
            "{lead}{argument} ({} {people} where I've been agree).",
            a.support_count
        ));
    }
    let ids = assertions
        .iter()
        .map(|a| a.id.0.as_str())
        .collect::<Vec<_>>()
        .join(",");
    format!("{} {SUFFIX_OPEN}{ids}]", clauses.join(" "))
}

/// The reason part of an argument, with the subject itself elided so that
/// the message names each subject once.
fn reason_text(argument: &str, subject: &str) -> String {
    let body = match argument.find(" because ") {
        Some(i) => &argument[i + " because ".len()..],
        None => argument,
    };
    let body = body.trim().trim_end_matches(['.', '!', '?']);
    let mut out = Vec::new();
    for word in body.split(' ') {
        let bare = word.trim_matches(|c: char| !c.is_alphanumeric() && c != '-' && c != '_');
        if !bare.is_empty() && bare.eq_ignore_ascii_case(subject) {
            out.push(word.replacen(bare, "that pick", 1));
        } else {
            out.push(word.to_owned());
        }
    }
    out.join(" ").replace('"', "'")
}

/// Assertion ids in a composed message's trailing suffix.
pub fn parse_relay_suffix(text: &str) -> Vec<AssertionId> {
    let Some(start) = text.rfind(SUFFIX_OPEN) else {
        return Vec::new();
    };
    let rest = &text[start + SUFFIX_OPEN.len()..];
    let Some(end) = rest.find(']') else {
        return Vec::new();
    };
    rest[..end]
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| AssertionId(s.to_owned()))
        .collect()
}

/// Point-in-time view of one room, as handed to a relay cycle.
#[derive(Debug, Clone)]
pub struct RoomSnapshot {
    pub room: RoomId,
    pub member_count: usize,
    pub window: Vec<Message>,
    pub tallies: BTreeMap<OptionId, u32>,
    pub last_relay_ts: u64,
    pub human_since_relay: usize,
}

/// One agent post to be injected into `destination`.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub source: RoomId,
    pub destination: RoomId,
    pub assertions: Vec<Assertion>,
    pub text: String,
}

#[derive(Debug, Default)]
pub struct CycleOutput {
    pub deliveries: Vec<Delivery>,
    /// Rooms whose distillation failed; their relay is skipped this cycle.
    pub failures: Vec<(RoomId, RelayError)>,
}

pub struct CycleInput<'a> {
    pub session_id: &'a str,
    pub graph: &'a SubgroupGraph,
    /// Indexed like `graph.rooms`.
    pub rooms: Vec<RoomSnapshot>,
    pub ledger: &'a RelayLedger,
    pub options: &'a [OptionId],
    pub policy: &'a RelayPolicy,
    pub now: u64,
}

/// Computes every delivery of one relay cycle from immutable snapshots.
///
/// All rooms distill from the same pre-cycle state, so content delivered
/// in this cycle is forwarded no earlier than the next one.
pub fn relay_cycle(input: CycleInput<'_>, distiller: &dyn Distiller) -> CycleOutput {
    let CycleInput {
        session_id,
        graph,
        rooms,
        ledger,
        options,
        policy,
        now,
    } = input;
    let mut out = CycleOutput::default();
    let mut pending: BTreeSet<(AssertionId, RoomId)> = BTreeSet::new();
    let ids: Vec<RoomId> = rooms.iter().map(|r| r.room.clone()).collect();

    for (index, snapshot) in rooms.into_iter().enumerate() {
        if !policy.fires(now, snapshot.last_relay_ts, snapshot.human_since_relay) {
            continue;
        }
        let neighbors: Vec<RoomId> = graph.out_neighbors(index).map(|n| ids[n].clone()).collect();
        if neighbors.is_empty() {
            continue;
        }
        let member_count = snapshot.member_count;
        let request = DistillRequest {
            session_id: session_id.to_owned(),
            room_id: snapshot.room,
            transcript_window: snapshot.window,
            tallies: snapshot.tallies,
            already_relayed: ledger.exhausted_for(&neighbors),
            options: options.to_vec(),
            max_assertions: policy.max_assertions_per_relay,
        };
        let assertions = match distiller.distill(&request, member_count) {
            Ok(a) => a,
            Err(e) => {
                out.failures.push((request.room_id.clone(), e));
                continue;
            }
        };
        for destination in neighbors {
            let fresh: Vec<Assertion> = assertions
                .iter()
                .filter(|a| {
                    !ledger.holds(a, &destination)
                        && !pending.contains(&(a.id.clone(), destination.clone()))
                })
                .cloned()
                .collect();
            if fresh.is_empty() {
                continue;
            }
            for a in &fresh {
                pending.insert((a.id.clone(), destination.clone()));
            }
            out.deliveries.push(Delivery {
                source: request.room_id.clone(),
                text: compose_relay_message(&fresh, &request.room_id),
                destination,
                assertions: fresh,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{room_id, Room};

    fn human(seq: u64, author: &str, text: &str) -> Message {
        Message {
            seq,
            room: room_id(0),
            author: author.into(),
            role: Role::Human,
            text: text.into(),
            ts: seq * 1000,
            assertions: vec![],
        }
    }

    fn opts(ids: &[&str]) -> Vec<OptionId> {
        ids.iter().map(|&s| OptionId::new(s)).collect()
    }

    #[test]
    fn ranks_by_distinct_supporters() {
        let window = vec![
            human(1, "a", "I like RB1 because he is fast."),
            human(2, "a", "I like QB2 because great matchup."),
            human(3, "b", "I like QB2 because the weather is clear."),
            human(4, "c", "QB2 for sure."),
            human(5, "a", "Still QB2!"),
        ];
        let got = distill_extractive(
            &room_id(0),
            &window,
            &opts(&["QB1", "QB2", "RB1"]),
            &BTreeSet::new(),
            2,
        );
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].subject, "QB2");
        assert_eq!(got[0].stance, Stance::For);
        assert_eq!(got[0].support_count, 3);
        assert_eq!(got[0].arguments.len(), 4);
        assert_eq!(got[1].subject, "RB1");
        assert_eq!(got[1].support_count, 1);
        assert_eq!(got[1].arguments, vec!["I like RB1 because he is fast."]);
    }

    #[test]
    fn ties_go_to_earliest_mention() {
        let window = vec![
            human(1, "a", "I like WR3 because speed."),
            human(2, "b", "I like WR1 because hands."),
        ];
        let got = distill_extractive(&room_id(0), &window, &opts(&["WR1", "WR3"]), &BTreeSet::new(), 5);
        assert_eq!(got[0].subject, "WR3");
        assert_eq!(got[1].subject, "WR1");
    }

    #[test]
    fn negative_cue_before_mention_is_against() {
        let window = vec![human(1, "a", "I don't like TE2 because he is hurt.")];
        let got = distill_extractive(&room_id(0), &window, &opts(&["TE2"]), &BTreeSet::new(), 5);
        assert_eq!(got[0].stance, Stance::Against);
        let window = vec![human(1, "a", "I like TE2 because he is not hurt.")];
        let got = distill_extractive(&room_id(0), &window, &opts(&["TE2"]), &BTreeSet::new(), 5);
        assert_eq!(got[0].stance, Stance::For);
    }

    #[test]
    fn empty_window_and_dedupe() {
        let none = distill_extractive(&room_id(0), &[], &opts(&["A"]), &BTreeSet::new(), 2);
        assert!(none.is_empty());
        let window = vec![human(1, "a", "I like A1 because yes.")];
        let relayed: BTreeSet<_> = [Assertion::make_id(&room_id(0), "A1", Stance::For)].into();
        let got = distill_extractive(&room_id(0), &window, &opts(&["A1"]), &relayed, 2);
        assert!(got.is_empty());
    }

    #[test]
    fn system_and_agent_text_is_not_parsed_as_support() {
        let mut sys = human(1, "system", "Options: A1 $100, A2 $200.");
        sys.role = Role::System;
        let got = distill_extractive(&room_id(0), &[sys], &opts(&["A1", "A2"]), &BTreeSet::new(), 5);
        assert!(got.is_empty());
    }

    fn assertion(subject: &str, stance: Stance, support: u32, args: &[&str]) -> Assertion {
        Assertion {
            id: Assertion::make_id(&room_id(3), subject, stance),
            subject: subject.into(),
            stance,
            arguments: args.iter().map(|s| s.to_string()).collect(),
            support_count: support,
            origin_room: room_id(3),
        }
    }

    fn prose(text: &str) -> &str {
        &text[..text.rfind(SUFFIX_OPEN).unwrap()]
    }

    #[test]
    fn composed_message_names_subject_stance_argument_support() {
        let a = assertion("QB2", Stance::For, 3, &["great matchup"]);
        let text = compose_relay_message(std::slice::from_ref(&a), &room_id(3));
        assert!(text.contains("QB2"));
        assert!(text.contains("strong case for"));
        assert!(text.contains("great matchup"));
        assert!(text.contains("3 people"));
        assert!(text.starts_with("I"));
        assert_eq!(parse_relay_suffix(&text), vec![a.id]);
    }

    #[test]
    fn two_assertions_each_named_once() {
        let a = assertion("QB2", Stance::For, 3, &["I like QB2 because QB2 is hot."]);
        let b = assertion("RB1", Stance::Against, 1, &["bad knees"]);
        let text = compose_relay_message(&[a, b], &room_id(3));
        assert_eq!(prose(&text).matches("QB2").count(), 1);
        assert_eq!(prose(&text).matches("RB1").count(), 1);
        assert!(prose(&text).contains("careful with RB1"));
        assert_eq!(parse_relay_suffix(&text).len(), 2);
    }

    #[test]
    fn argument_clause_omitted_when_absent() {
        let a = assertion("DST4", Stance::Against, 2, &[]);
        let text = compose_relay_message(&[a], &room_id(3));
        assert!(text.contains("against DST4"));
        assert!(!text.contains("because"));
    }

    #[test]
    fn policy_triggers() {
        let p = RelayPolicy::default();
        assert!(!p.fires(19_999, 0, 7));
        assert!(p.fires(20_000, 0, 0));
        assert!(p.fires(5_000, 0, 8));
        assert!(RelayPolicy::always().fires(0, 0, 0));
        let bad = RelayPolicy {
            max_assertions_per_relay: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ledger_rejects_redelivery() {
        let mut ledger = RelayLedger::default();
        let rec = RelayRecord {
            assertion: AssertionId::new("x"),
            source: room_id(0),
            destination: room_id(1),
            ts: 5,
        };
        assert!(ledger.try_record(rec.clone(), &room_id(0)));
        assert!(!ledger.try_record(rec, &room_id(0)));
        assert_eq!(ledger.records().len(), 1);
        assert!(ledger.contains(&AssertionId::new("x"), &room_id(1)));
        assert!(!ledger.contains(&AssertionId::new("x"), &room_id(2)));
        assert_eq!(
            ledger.exhausted_for(&[room_id(1)]),
            [AssertionId::new("x")].into()
        );
        assert!(ledger.exhausted_for(&[room_id(1), room_id(2)]).is_empty());
    }

    fn two_room_graph() -> SubgroupGraph {
        SubgroupGraph {
            rooms: vec![
                Room { id: room_id(0), members: vec![] },
                Room { id: room_id(1), members: vec![] },
            ],
            edges: [(0, 1)].into(),
        }
    }

    fn snapshot(room: usize, window: Vec<Message>) -> RoomSnapshot {
        RoomSnapshot {
            room: room_id(room),
            member_count: 5,
            window,
            tallies: BTreeMap::new(),
            last_relay_ts: 0,
            human_since_relay: 0,
        }
    }

    #[test]
    fn single_hop_then_no_duplicate() {
        let graph = two_room_graph();
        let rooms = vec![
            snapshot(0, vec![human(1, "a", "I like X1 because reasons.")]),
            snapshot(1, vec![]),
        ];
        let mut ledger = RelayLedger::default();
        let policy = RelayPolicy::always();
        let options = opts(&["X1"]);
        let run = |ledger: &RelayLedger, now| {
            relay_cycle(
                CycleInput {
                    session_id: "s",
                    graph: &graph,
                    rooms: rooms.clone(),
                    ledger,
                    options: &options,
                    policy: &policy,
                    now,
                },
                &ExtractiveDistiller,
            )
        };
        let out = run(&ledger, 1000);
        assert_eq!(out.deliveries.len(), 1);
        let d = &out.deliveries[0];
        assert_eq!(d.destination, room_id(1));
        for a in &d.assertions {
            ledger.try_record(
                RelayRecord {
                    assertion: a.id.clone(),
                    source: d.source.clone(),
                    destination: d.destination.clone(),
                    ts: 1000,
                },
                &a.origin_room,
            );
        }
        assert!(run(&ledger, 2000).deliveries.is_empty());
    }

    struct Failing;
    impl Distiller for Failing {
        fn kind(&self) -> DistillerKind {
            DistillerKind::Remote
        }
        fn distill(&self, _: &DistillRequest, _: usize) -> Result<Vec<Assertion>, RelayError> {
            Err(RelayError::RemoteUnavailable("503".into()))
        }
    }

    #[test]
    fn remote_failure_is_isolated() {
        let graph = two_room_graph();
        let rooms = vec![snapshot(0, vec![]), snapshot(1, vec![])];
        let ledger = RelayLedger::default();
        let policy = RelayPolicy::always();
        let input = CycleInput {
            session_id: "s",
            graph: &graph,
            rooms: rooms.clone(),
            ledger: &ledger,
            options: &[],
            policy: &policy,
            now: 0,
        };
        let out = relay_cycle(input, &Failing);
        assert!(out.deliveries.is_empty());
        // room 1 has no out-neighbors, so only room 0 asked the distiller
        assert_eq!(out.failures.len(), 1);
    }

    #[test]
    fn remote_response_gets_identity_and_capped_support() {
        let resp: DistillResponse = serde_json::from_str(
            r#"{"assertions":[{"subject":"QB1","stance":"For","arguments":["x"],"support_count":9},
                               {"subject":"QB1","stance":"For","support_count":1}]}"#,
        )
        .unwrap();
        let got = resp.into_assertions(&room_id(2), 5, 10);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].support_count, 5);
        assert_eq!(got[0].origin_room, room_id(2));
        assert_eq!(got[0].id.0, "room-2/QB1/for");
    }
}
