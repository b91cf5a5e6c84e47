use serde::{Deserialize, Serialize};

use super::BusError;

/// Fixed base step of the scheduler, in seconds.
pub const BASE_STEP: f64 = 0.001;

/// Integer scheduler tick. Sim time is always `tick * BASE_STEP`.
pub type Tick = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PacingMode {
    #[default]
    AsFastAsPossible,
    WallClockScaled,
}

/// Simulation clock. The scheduler is the only writer of `tick`.
#[derive(Debug, Clone)]
pub struct SimClock {
    tick: Tick,
    speedup_factor: f64,
    pacing: PacingMode,
}

impl Default for SimClock {
    fn default() -> Self {
        Self {
            tick: 0,
            speedup_factor: 1.0,
            pacing: PacingMode::AsFastAsPossible,
        }
    }
}

impl SimClock {
    pub fn new(pacing: PacingMode, factor: f64) -> Result<Self, BusError> {
        let mut clock = Self::default();
        clock.set_pacing(pacing, factor)?;
        Ok(clock)
    }

    /// Select pacing mode and speed-up factor. Factors below 1 are rejected.
    pub fn set_pacing(&mut self, mode: PacingMode, factor: f64) -> Result<(), BusError> {
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(BusError::InvalidSpeedup(factor));
        }
        self.pacing = mode;
        self.speedup_factor = factor;
        Ok(())
    }

    pub fn sim_time(&self) -> f64 {
        ticks_to_seconds(self.tick)
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn base_step(&self) -> f64 {
        BASE_STEP
    }

    pub fn speedup_factor(&self) -> f64 {
        self.speedup_factor
    }

    pub fn pacing(&self) -> PacingMode {
        self.pacing
    }

    pub(crate) fn advance(&mut self) {
        self.tick += 1;
    }
}

pub fn ticks_to_seconds(tick: Tick) -> f64 {
    tick as f64 * BASE_STEP
}

/// Convert a period in seconds to ticks. The period must be a positive
/// integer multiple of the base step (to within 1e-9 s).
pub fn period_to_ticks(period: f64) -> Result<Tick, BusError> {
    let ticks = (period / BASE_STEP).round();
    if !(ticks >= 1.0) || (ticks * BASE_STEP - period).abs() > 1e-9 {
        return Err(BusError::InvalidPeriod(period));
    }
    Ok(ticks as Tick)
}

/// Ticks for a duration, rounding to the nearest base step.
pub fn seconds_to_ticks(seconds: f64) -> Tick {
    (seconds / BASE_STEP).round().max(0.0) as Tick
}
