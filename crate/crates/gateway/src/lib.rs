//! Process entry points for csi-core: the live websocket server, batch
//! simulation, and the analytics report.

pub mod actor;
pub mod commands;
pub mod config;
pub mod remote;
pub mod server;

pub use config::{ConfigError, Overrides, ServeConfig};
pub use remote::RemoteDistiller;
pub use server::{ServeError, Server};
