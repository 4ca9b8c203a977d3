//! Deterministic simulator for a broadcast media service with unicast error
//! recovery.
//!
//! A DASH-style presentation is carried over a lossy broadcast channel with
//! application-layer FEC. Segments the FEC cannot repair are fetched again
//! over a rate-limited unicast link, either at the broadcast quality or at a
//! quality picked per request from a bandwidth oracle. A player model
//! consumes the resulting delivery schedule and reports live latency and
//! stalls. Every random choice is drawn from a named, seeded stream, so a
//! scenario is a pure function of its configuration.

pub mod broadcast;
pub mod engine;
pub mod error;
pub mod media;
pub mod player;
pub mod rng;
pub mod sarp;
pub mod session;
pub mod unicast;

pub use error::{Error, Result};
