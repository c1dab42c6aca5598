//! The session actor: one thread owns the [`Session`] and applies every
//! command, tick and relay cycle in order.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use csi_core::engine::{Session, SessionStatus};
use csi_core::io::event::{write_log, Event};
use csi_core::io::wire::{
    dispatch, engine_error_code, snapshot_for, ClientBody, ClientMessage, IdempotencyCache,
    ServerMessage,
};
use csi_core::model::{ParticipantId, RoomId};
use csi_core::relay::{Distiller, ExtractiveDistiller, RelayPolicy};
use tokio::sync::{broadcast, oneshot};

use crate::config::{DistillerConfig, ServeConfig};
use crate::remote::RemoteDistiller;

/// What the actor needs from a [`ServeConfig`].
#[derive(Debug, Clone)]
pub struct ActorSettings {
    pub expected_participants: usize,
    pub lobby_ms: u64,
    pub reconnect_window_ms: u64,
    pub tick_ms: u64,
    pub relay: RelayPolicy,
    pub relay_interval_ms: u64,
    pub distiller: DistillerConfig,
}

impl From<&ServeConfig> for ActorSettings {
    fn from(c: &ServeConfig) -> Self {
        ActorSettings {
            expected_participants: c.expected_participants,
            lobby_ms: c.lobby_ms,
            reconnect_window_ms: c.reconnect_window_ms,
            tick_ms: c.tick_ms,
            relay: c.relay.clone(),
            relay_interval_ms: c.relay_interval_ms,
            distiller: c.distiller.clone(),
        }
    }
}

#[derive(Debug)]
pub struct Reply {
    pub messages: Vec<ServerMessage>,
    /// Set when the message bound the channel to a participant.
    pub joined: Option<ParticipantId>,
    pub room: Option<RoomId>,
}

pub enum Command {
    Client {
        /// Participant already bound to the channel, if any.
        bound: Option<ParticipantId>,
        message: ClientMessage,
        reply: oneshot::Sender<Reply>,
    },
    Snapshot {
        participant: ParticipantId,
        reply: oneshot::Sender<(Option<RoomId>, Vec<ServerMessage>)>,
    },
    Disconnect {
        participant: ParticipantId,
    },
    /// Runs `f` against the session; for tests and diagnostics.
    Inspect(Box<dyn FnOnce(&Session) + Send>),
    Shutdown,
}

/// Handle to a running actor thread.
#[derive(Clone)]
pub struct ActorHandle {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<Event>,
}

impl ActorHandle {
    pub fn send(&self, command: Command) -> bool {
        self.commands.send(command).is_ok()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    pub async fn client(&self, bound: Option<ParticipantId>, message: ClientMessage) -> Option<Reply> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Client {
            bound,
            message,
            reply,
        });
        rx.await.ok()
    }

    pub async fn snapshot(&self, participant: ParticipantId) -> Option<(Option<RoomId>, Vec<ServerMessage>)> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Snapshot { participant, reply });
        rx.await.ok()
    }

    pub async fn inspect<T: Send + 'static>(&self, f: impl FnOnce(&Session) -> T + Send + 'static) -> Option<T> {
        let (tx, rx) = oneshot::channel();
        self.send(Command::Inspect(Box::new(move |s| {
            let _ = tx.send(f(s));
        })));
        rx.await.ok()
    }
}

/// Starts the actor thread. `log` receives every event as one NDJSON line,
/// flushed before the event is broadcast.
pub fn spawn(
    session: Session,
    settings: ActorSettings,
    log: Option<File>,
) -> (ActorHandle, thread::JoinHandle<Session>) {
    let (commands, rx) = mpsc::channel();
    let (events, _) = broadcast::channel(4096);
    let handle = ActorHandle {
        commands,
        events: events.clone(),
    };
    let join = thread::Builder::new()
        .name(format!("session-{}", session.session_id()))
        .spawn(move || {
            // Built here: a blocking HTTP client may not live on an async runtime.
            let distiller: Box<dyn Distiller> = match &settings.distiller {
                DistillerConfig::Extractive => Box::new(ExtractiveDistiller),
                DistillerConfig::Remote { url, timeout_ms } => {
                    match RemoteDistiller::new(url.clone(), Duration::from_millis(*timeout_ms)) {
                        Ok(d) => Box::new(d),
                        Err(e) => {
                            tracing::error!("remote distiller: {e}; using extractive");
                            Box::new(ExtractiveDistiller)
                        }
                    }
                }
            };
            let mut actor = Actor {
                session,
                settings,
                distiller,
                lobby: Vec::new(),
                dropped_at: BTreeMap::new(),
                tokens: IdempotencyCache::default(),
                clock: Instant::now(),
                first_join: None,
                cycle: 0,
                last_relay: 0,
                published: 0,
                log: log.map(BufWriter::new),
                events,
            };
            actor.run(rx);
            actor.session
        })
        .expect("spawn session thread");
    (handle, join)
}

struct Actor {
    session: Session,
    settings: ActorSettings,
    distiller: Box<dyn Distiller>,
    lobby: Vec<ParticipantId>,
    /// Channel lost at this time; dropped from the session once the
    /// reconnect window passes.
    dropped_at: BTreeMap<ParticipantId, u64>,
    tokens: IdempotencyCache,
    clock: Instant,
    first_join: Option<u64>,
    cycle: u64,
    last_relay: u64,
    published: usize,
    log: Option<BufWriter<File>>,
    events: broadcast::Sender<Event>,
}

fn error(token: Option<String>, code: &str, message: impl Into<String>) -> ServerMessage {
    ServerMessage::Error {
        token,
        code: code.to_owned(),
        message: message.into(),
    }
}

impl Actor {
    fn now(&self) -> u64 {
        self.clock.elapsed().as_millis() as u64
    }

    fn started(&self) -> bool {
        !self.session.state().members.is_empty()
    }

    fn run(&mut self, rx: mpsc::Receiver<Command>) {
        let tick = Duration::from_millis(self.settings.tick_ms);
        let mut next_tick = Instant::now() + tick;
        loop {
            // Checked first so a steady stream of commands cannot starve the clock.
            let now = Instant::now();
            if now >= next_tick {
                self.tick();
                next_tick += tick;
                if next_tick < now {
                    next_tick = now + tick;
                }
                self.publish();
            }
            match rx.recv_timeout(next_tick.saturating_duration_since(Instant::now())) {
                Ok(Command::Shutdown) | Err(mpsc::RecvTimeoutError::Disconnected) => break,
                Ok(command) => self.handle(command),
                Err(mpsc::RecvTimeoutError::Timeout) => {}
            }
            self.publish();
        }
        self.publish();
    }

    /// Logs and broadcasts events appended since the last call.
    fn publish(&mut self) {
        let log = self.session.log();
        for event in &log[self.published..] {
            if let Some(w) = self.log.as_mut() {
                if let Err(e) = write_log(w, std::slice::from_ref(event)) {
                    tracing::error!("event log write failed: {e}");
                }
            }
            // No subscribers is fine.
            let _ = self.events.send(event.clone());
        }
        self.published = log.len();
    }

    fn handle(&mut self, command: Command) {
        match command {
            Command::Client {
                bound,
                message,
                reply,
            } => {
                let r = self.client(bound, message);
                let _ = reply.send(r);
            }
            Command::Snapshot { participant, reply } => {
                let _ = reply.send(self.snapshot(&participant));
            }
            Command::Disconnect { participant } => self.disconnect(participant),
            Command::Inspect(f) => f(&self.session),
            Command::Shutdown => {}
        }
    }

    fn snapshot(&self, participant: &ParticipantId) -> (Option<RoomId>, Vec<ServerMessage>) {
        let state = self.session.state();
        match snapshot_for(state, participant, self.now()) {
            Ok(messages) => {
                let room = state
                    .member(participant)
                    .ok()
                    .map(|m| state.graph.rooms[m.room].id.clone());
                (room, messages)
            }
            Err(_) => (None, Vec::new()),
        }
    }

    fn client(&mut self, bound: Option<ParticipantId>, message: ClientMessage) -> Reply {
        let ClientMessage { token, body } = message;
        let mut reply = Reply {
            messages: Vec::new(),
            joined: None,
            room: None,
        };
        let actor = match (&body, &bound) {
            (ClientBody::Join { participant }, Some(b)) if participant != b => {
                reply.messages.push(error(
                    Some(token),
                    "AlreadyJoined",
                    format!("channel is bound to {b}"),
                ));
                return reply;
            }
            (ClientBody::Join { participant }, _) => participant.clone(),
            (_, Some(b)) => b.clone(),
            (_, None) => {
                reply
                    .messages
                    .push(error(Some(token), "NotJoined", "send Join first"));
                return reply;
            }
        };
        if !self.tokens.first_time(actor.as_str(), &token) {
            reply.messages.push(ServerMessage::Ack {
                token,
                duplicate: true,
            });
            if matches!(body, ClientBody::Join { .. }) {
                reply.joined = Some(actor.clone());
                let (room, snapshot) = self.snapshot(&actor);
                reply.room = room;
                reply.messages.extend(snapshot);
            }
            return reply;
        }
        let now = self.now();

        if !self.started() {
            match body {
                ClientBody::Join { .. } => {
                    if !self.lobby.contains(&actor) {
                        self.lobby.push(actor.clone());
                    }
                    self.first_join.get_or_insert(now);
                    reply.joined = Some(actor);
                    reply.messages.push(ServerMessage::Ack {
                        token,
                        duplicate: false,
                    });
                    reply.messages.push(ServerMessage::BudgetSnapshot {
                        remaining_budget: self.session.state().remaining_budget,
                    });
                    self.maybe_start(now);
                }
                ClientBody::Leave => {
                    self.lobby.retain(|p| p != &actor);
                    reply.messages.push(ServerMessage::Ack {
                        token,
                        duplicate: false,
                    });
                }
                _ => reply
                    .messages
                    .push(error(Some(token), "WrongPhase", "session has not started")),
            }
            return reply;
        }

        match dispatch(&mut self.session, &actor, &body, now) {
            Ok(()) => {
                reply.messages.push(ServerMessage::Ack {
                    token,
                    duplicate: false,
                });
                if matches!(body, ClientBody::Join { .. }) {
                    self.dropped_at.remove(&actor);
                    reply.joined = Some(actor.clone());
                    let (room, snapshot) = self.snapshot(&actor);
                    reply.room = room;
                    reply.messages.extend(snapshot);
                }
            }
            Err(e) => reply
                .messages
                .push(error(Some(token), engine_error_code(&e), e.to_string())),
        }
        reply
    }

    fn disconnect(&mut self, participant: ParticipantId) {
        if !self.started() {
            self.lobby.retain(|p| p != &participant);
            return;
        }
        let active = self
            .session
            .state()
            .member(&participant)
            .map(|m| m.active)
            .unwrap_or(false);
        if active {
            let now = self.now();
            self.dropped_at.insert(participant, now);
        }
    }

    fn maybe_start(&mut self, now: u64) {
        if self.started() || self.lobby.is_empty() {
            return;
        }
        let full = self.lobby.len() >= self.settings.expected_participants;
        let waited = self
            .first_join
            .is_some_and(|t| now.saturating_sub(t) >= self.settings.lobby_ms);
        if full || waited {
            let lobby = std::mem::take(&mut self.lobby);
            if let Err(e) = self.session.start(&lobby, now) {
                tracing::error!("session start failed: {e}");
                self.lobby = lobby;
            }
        }
    }

    fn tick(&mut self) {
        let now = self.now();
        self.maybe_start(now);
        if !self.started() {
            return;
        }

        let window = self.settings.reconnect_window_ms;
        let expired: Vec<ParticipantId> = self
            .dropped_at
            .iter()
            .filter(|(_, &t)| now.saturating_sub(t) >= window)
            .map(|(p, _)| p.clone())
            .collect();
        for p in expired {
            self.dropped_at.remove(&p);
            if let Err(e) = self.session.handle_dropout(&p, now) {
                tracing::warn!("dropout of {p}: {e}");
            }
        }

        if let Err(e) = self.session.tick(now) {
            tracing::error!("tick failed: {e}");
        }
        if self.session.state().status == SessionStatus::RoundOpen
            && now.saturating_sub(self.last_relay) >= self.settings.relay_interval_ms
        {
            self.last_relay = now;
            self.cycle += 1;
            match self
                .session
                .relay_cycle(now, self.cycle, &self.settings.relay, self.distiller.as_ref())
            {
                Ok(report) => {
                    for (room, e) in report.failures {
                        tracing::warn!("relay skipped for {room}: {e}");
                    }
                }
                Err(e) => tracing::error!("relay cycle failed: {e}"),
            }
        }
    }
}

/// Opens `path` for appending.
pub fn open_log(path: &std::path::Path) -> std::io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}
