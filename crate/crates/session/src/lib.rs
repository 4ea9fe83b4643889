//! Live simulation sessions over websockets.
//!
//! A session owns one [`tandem::sim::Simulation`] on a dedicated thread.
//! Clients connect to `/session/{id}`, send JSON commands and receive acks,
//! errors and 30 Hz snapshots. The wire format is documented in
//! `docs/session-protocol.md`.

pub mod core;
pub mod owner;
pub mod protocol;
pub mod server;

pub use crate::core::{SessionCore, SessionError, FORCE_TIMEOUT, LIVE_PARAMS};
pub use crate::owner::{Pace, SessionHandle, SNAPSHOT_HZ};
pub use crate::protocol::{ClientMessage, ServerMessage, Snapshot, PROTOCOL_VERSION};
pub use crate::server::{router, serve, AppState, ServerConfig};
