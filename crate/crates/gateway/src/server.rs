//! HTTP front end: `/ws` carries the wire protocol, everything else is
//! served from the static directory.

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use csi_core::engine::Session;
use csi_core::io::event::{Event, EventBody};
use csi_core::io::wire::{encode_server, parse_client_message, visible_in, ServerMessage};
use csi_core::model::{ParticipantId, RoomId};
use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};
use tower_http::services::ServeDir;

use crate::actor::{self, ActorHandle, ActorSettings, Command};
use crate::config::ServeConfig;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot open event log {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

/// A bound server that has not started accepting yet.
pub struct Server {
    listener: TcpListener,
    router: Router,
    handle: ActorHandle,
    actor: std::thread::JoinHandle<Session>,
}

impl Server {
    pub async fn bind(config: &ServeConfig) -> Result<Self, ServeError> {
        let log = match &config.event_log {
            Some(path) => Some(actor::open_log(path).map_err(|source| ServeError::Log {
                path: path.clone(),
                source,
            })?),
            None => None,
        };
        let listener = TcpListener::bind(config.listen)
            .await
            .map_err(|source| ServeError::Bind {
                addr: config.listen,
                source,
            })?;
        let (handle, actor) = actor::spawn(
            Session::new(config.spec.clone()),
            ActorSettings::from(config),
            log,
        );
        let router = router(handle.clone(), config.static_dir.clone());
        Ok(Server {
            listener,
            router,
            handle,
            actor,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn handle(&self) -> ActorHandle {
        self.handle.clone()
    }

    /// Serves until `shutdown` resolves, then stops the session thread and
    /// returns the session.
    pub async fn run(
        self,
        shutdown: impl std::future::Future<Output = ()> + Send + 'static,
    ) -> Result<Session, ServeError> {
        axum::serve(self.listener, self.router)
            .with_graceful_shutdown(shutdown)
            .await?;
        self.handle.send(Command::Shutdown);
        let actor = self.actor;
        let session = tokio::task::spawn_blocking(move || actor.join())
            .await
            .map_err(std::io::Error::other)?
            .map_err(|_| std::io::Error::other("session thread panicked"))?;
        Ok(session)
    }
}

pub fn router(handle: ActorHandle, static_dir: Option<PathBuf>) -> Router {
    let router = Router::new()
        .route("/ws", get(upgrade))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(handle);
    match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(handle): State<ActorHandle>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, handle))
}

/// Per-channel state: who is on it and which room's deltas they see.
struct Channel {
    participant: Option<ParticipantId>,
    room: Option<RoomId>,
}

impl Channel {
    fn wants(&self, event: &Event) -> bool {
        match (&self.participant, &self.room) {
            (Some(_), Some(room)) => visible_in(event, room),
            (Some(_), None) => event.room.is_none(),
            (None, _) => false,
        }
    }

    /// The session started and placed this participant in a room.
    fn placed_by(&self, event: &Event) -> bool {
        match (&event.body, &self.participant) {
            (EventBody::Join { participant, .. }, Some(me)) => participant == me && self.room.is_none(),
            _ => false,
        }
    }
}

async fn connection(socket: WebSocket, handle: ActorHandle) {
    let (mut sink, mut stream) = socket.split();
    let (out, mut outbox) = mpsc::unbounded_channel::<String>();
    let writer = tokio::spawn(async move {
        while let Some(text) = outbox.recv().await {
            if sink.send(WsMessage::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    let send = |msg: &ServerMessage| {
        let _ = out.send(encode_server(msg));
    };

    let mut events = handle.subscribe();
    let mut channel = Channel {
        participant: None,
        room: None,
    };

    loop {
        tokio::select! {
            incoming = stream.next() => {
                let bytes = match incoming {
                    Some(Ok(WsMessage::Text(t))) => t.as_bytes().to_vec(),
                    Some(Ok(WsMessage::Binary(b))) => b.to_vec(),
                    Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let message = match parse_client_message(&bytes) {
                    Ok(m) => m,
                    Err(e) => {
                        send(&ServerMessage::Error { token: None, code: e.code().into(), message: e.to_string() });
                        continue;
                    }
                };
                let Some(reply) = handle.client(channel.participant.clone(), message).await else { break };
                if let Some(p) = reply.joined {
                    channel.participant = Some(p);
                }
                if reply.room.is_some() {
                    channel.room = reply.room;
                }
                for m in &reply.messages {
                    send(m);
                }
            }
            event = events.recv() => {
                match event {
                    Ok(event) => {
                        if channel.placed_by(&event) {
                            let me = channel.participant.clone().expect("placed implies joined");
                            if let Some((room, snapshot)) = handle.snapshot(me).await {
                                channel.room = room;
                                for m in &snapshot {
                                    send(m);
                                }
                            }
                        }
                        if channel.wants(&event) {
                            send(&ServerMessage::Event(event));
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => {
                        // Too far behind for deltas; resend the full view.
                        if let Some(me) = channel.participant.clone() {
                            if let Some((_, snapshot)) = handle.snapshot(me).await {
                                for m in &snapshot {
                                    send(m);
                                }
                            }
                        }
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        }
    }

    if let Some(participant) = channel.participant {
        handle.send(Command::Disconnect { participant });
    }
    drop(out);
    let _ = writer.await;
}
