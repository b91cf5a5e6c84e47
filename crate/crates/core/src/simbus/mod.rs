//! Deterministic simulation clock, periodic scheduler and topic bus.
//!
//! Everything runs on one logical thread. Each step executes the callbacks
//! due at that tick in registration order, then delivers every message
//! published during the step, sorted by `(stamp, publisher, seq)`. Sim time
//! never depends on wall time; the speed-up factor only affects how long the
//! scheduler sleeps in [`PacingMode::WallClockScaled`].

mod clock;
mod message;
mod scheduler;
mod trace;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use clock::{
    period_to_ticks, seconds_to_ticks, ticks_to_seconds, PacingMode, SimClock, Tick, BASE_STEP,
};
pub use message::{Field, Message, Payload, SharedMessage};
pub use scheduler::{
    codes, error_payload, schedule_run, topic_matches, BusState, Node, NodeContext, NodeError,
    NodeHandle, Publication, RemapRule, RunOutcome, Scheduler, Severity, StopReason,
    COMMANDS_TOPIC, ERRORS_TOPIC,
};
pub use trace::{RunTrace, TraceEntry};

#[derive(Debug, Error, PartialEq)]
pub enum BusError {
    #[error("speed-up factor must be >= 1, got {0}")]
    InvalidSpeedup(f64),
    #[error("period {0} s is not a positive multiple of the 1 ms base step")]
    InvalidPeriod(f64),
    #[error("node {0} registered after the scheduler was closed")]
    RegistrationClosed(String),
    #[error("duplicate node name {0}")]
    DuplicateNode(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {node} already has a remap rule for {topic}")]
    DuplicateRemap { node: String, topic: String },
    #[error("conflicting schemas published on {0}")]
    SchemaConflict(String),
    #[error("message delivery did not settle at tick {0}")]
    DeliveryLoop(Tick),
}

/// Independent random stream for a named consumer. All randomness in a run
/// derives from the scenario seed through this function.
pub fn stream_rng(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a over the name selects the ChaCha stream.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

#[cfg(test)]
mod tests;
