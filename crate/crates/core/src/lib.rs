//! Conversational swarm deliberation: many small chat rooms linked by
//! relay agents, deciding together under a shared budget.
//!
//! - [`model`]: identifiers, specs, messages, rosters
//! - [`topology`]: room partitioning and the relay graph
//! - [`relay`]: assertion distillation and inter-room posting
//! - [`engine`]: the event-sourced round state machine
//! - [`analytics`]: crowd baselines and comparison statistics
//! - [`sim`]: scripted bot sessions on a virtual clock
//! - [`io`]: event log, file formats, wire protocol

pub mod analytics;
pub mod engine;
pub mod io;
pub mod model;
pub mod relay;
pub mod sim;
pub mod topology;
