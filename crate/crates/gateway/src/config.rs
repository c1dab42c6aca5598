//! `serve` configuration file.
//!
//! ```json
//! {
//!   "spec": "session.json",
//!   "listen": "127.0.0.1:8080",
//!   "expected_participants": 25,
//!   "lobby_seconds": 600,
//!   "reconnect_window_seconds": 120,
//!   "tick_ms": 250,
//!   "relay": { "cadence_seconds": 20, "cadence_messages": 8, "max_assertions_per_relay": 2 },
//!   "relay_interval_ms": 1000,
//!   "distiller": { "kind": "remote", "url": "http://127.0.0.1:9000/distill", "timeout_ms": 5000 },
//!   "static_dir": "web/dist",
//!   "event_log": "events.ndjson"
//! }
//! ```
//!
//! `spec` is either a path (relative to the config file) or an inline
//! session spec. Every other field has a default.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use csi_core::model::{validate_session, SessionSpec, SpecError, ValidatedSession};
use csi_core::relay::{RelayError, RelayPolicy};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: field `{field}`: {message}")]
    Field {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: field `spec`: {kind}: {source}")]
    Spec {
        path: PathBuf,
        kind: &'static str,
        #[source]
        source: SpecError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistillerConfig {
    #[default]
    Extractive,
    Remote {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    5000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SpecSource {
    Path(PathBuf),
    Inline(Box<SessionSpec>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    spec: SpecSource,
    listen: Option<String>,
    #[serde(default = "default_expected")]
    expected_participants: usize,
    #[serde(default = "default_lobby_seconds")]
    lobby_seconds: u64,
    #[serde(default = "default_reconnect_seconds")]
    reconnect_window_seconds: u64,
    #[serde(default = "default_tick_ms")]
    tick_ms: u64,
    #[serde(default)]
    relay: RelayPolicy,
    #[serde(default = "default_relay_interval_ms")]
    relay_interval_ms: u64,
    #[serde(default)]
    distiller: DistillerConfig,
    static_dir: Option<PathBuf>,
    event_log: Option<PathBuf>,
}

fn default_expected() -> usize {
    25
}
fn default_lobby_seconds() -> u64 {
    600
}
fn default_reconnect_seconds() -> u64 {
    120
}
fn default_tick_ms() -> u64 {
    250
}
fn default_relay_interval_ms() -> u64 {
    1000
}

/// A loaded and checked `serve` configuration.
#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub spec: ValidatedSession,
    pub listen: SocketAddr,
    /// The session starts as soon as this many participants have joined.
    pub expected_participants: usize,
    /// ...or this long after the first join, whichever comes first.
    pub lobby_ms: u64,
    pub reconnect_window_ms: u64,
    pub tick_ms: u64,
    pub relay: RelayPolicy,
    pub relay_interval_ms: u64,
    pub distiller: DistillerConfig,
    pub static_dir: Option<PathBuf>,
    pub event_log: Option<PathBuf>,
}

/// Command-line and environment overrides; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub listen: Option<String>,
    pub distiller_url: Option<String>,
}

impl ServeConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path, overrides)
    }

    /// `path` names the file in errors and anchors relative paths.
    pub fn parse(text: &str, path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let field_err = |field: &str, message: String| ConfigError::Field {
            path: path.to_owned(),
            field: field.to_owned(),
            message,
        };
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            field_err(&field, e.into_inner().to_string())
        })?;
        let base = path.parent().unwrap_or(Path::new(""));

        let spec = match raw.spec {
            SpecSource::Path(p) => {
                let spec_path = base.join(p);
                let text = fs::read_to_string(&spec_path).map_err(|source| ConfigError::Io {
                    path: spec_path.clone(),
                    source,
                })?;
                let de = &mut serde_json::Deserializer::from_str(&text);
                serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Field {
                    path: spec_path.clone(),
                    field: e.path().to_string(),
                    message: e.into_inner().to_string(),
                })?
            }
            SpecSource::Inline(spec) => *spec,
        };
        let spec = validate_session(spec).map_err(|source| ConfigError::Spec {
            path: path.to_owned(),
            kind: spec_error_kind(&source),
            source,
        })?;

        let listen_text = overrides
            .listen
            .clone()
            .or(raw.listen)
            .unwrap_or_else(|| DEFAULT_LISTEN.to_owned());
        let listen = listen_text
            .parse()
            .map_err(|e| field_err("listen", format!("`{listen_text}`: {e}")))?;

        raw.relay.validate().map_err(|e: RelayError| field_err("relay", e.to_string()))?;
        if raw.expected_participants == 0 {
            return Err(field_err("expected_participants", "must be positive".into()));
        }
        if raw.tick_ms == 0 {
            return Err(field_err("tick_ms", "must be positive".into()));
        }
        let distiller = match overrides.distiller_url.clone() {
            Some(url) => DistillerConfig::Remote {
                url,
                timeout_ms: match raw.distiller {
                    DistillerConfig::Remote { timeout_ms, .. } => timeout_ms,
                    DistillerConfig::Extractive => default_timeout_ms(),
                },
            },
            None => raw.distiller,
        };

        Ok(ServeConfig {
            spec,
            listen,
            expected_participants: raw.expected_participants,
            lobby_ms: raw.lobby_seconds * 1000,
            reconnect_window_ms: raw.reconnect_window_seconds * 1000,
            tick_ms: raw.tick_ms,
            relay: raw.relay,
            relay_interval_ms: raw.relay_interval_ms,
            distiller,
            static_dir: raw.static_dir.map(|p| base.join(p)),
            event_log: raw.event_log.map(|p| base.join(p)),
        })
    }
}

fn spec_error_kind(e: &SpecError) -> &'static str {
    match e {
        SpecError::DuplicateId(_) => "DuplicateId",
        SpecError::EmptyPosition(_) => "EmptyPosition",
        SpecError::IncompletableBudget { .. } => "IncompletableBudget",
        SpecError::ZeroRoundSeconds => "ZeroRoundSeconds",
        SpecError::EmptyId(_) => "EmptyId",
        SpecError::NoPositions => "NoPositions",
        SpecError::Topology(_) => "Topology",
    }
}
