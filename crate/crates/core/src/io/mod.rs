//! Event log encoding, file formats and the client wire protocol.

pub mod event;
pub mod files;
pub mod wire;
