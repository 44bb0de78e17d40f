//! Gait clock: cyclic phase signal and the swing/stance schedule.
//!
//! The clock is one scalar phase in `[0, 1)` encoding position within the
//! gait cycle. Each foot's schedule is derived from the phase and the swing
//! ratio: foot `i` is in swing iff `frac(phase + offset_i) < ratio`, with the
//! left foot at offset 0 and the right foot half a cycle out of phase.
//! Swing occupies the leading sub-interval of each foot's cycle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position within the gait cycle, always in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phase(f64);

impl Phase {
    pub const ZERO: Phase = Phase(0.0);

    /// Wraps any finite value into `[0, 1)`.
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("phase"));
        }
        let mut v = value.rem_euclid(1.0);
        // rem_euclid can return exactly 1.0 for tiny negative inputs
        if v >= 1.0 {
            v = 0.0;
        }
        Ok(Phase(v))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Shortest distance around the unit circle, in `[0, 0.5]`.
    pub fn circular_distance(self, other: Phase) -> f64 {
        let d = (self.0 - other.0).abs();
        d.min(1.0 - d)
    }
}

/// The gait parameter pair commanded to the running controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    /// Stride frequency in Hz (gait cycles per second).
    pub freq: f64,
    /// Fraction of each foot's cycle commanded to swing, in `(0, 1)`.
    pub ratio: f64,
}

impl GaitParams {
    pub fn new(freq: f64, ratio: f64) -> Result<Self> {
        if !freq.is_finite() || freq <= 0.0 {
            return Err(Error::InvalidFreq(freq));
        }
        if !ratio.is_finite() || ratio <= 0.0 || ratio >= 1.0 {
            return Err(Error::InvalidRatio(ratio));
        }
        Ok(GaitParams { freq, ratio })
    }

    /// Commanded stance time per cycle, `(1 - ratio) / freq` seconds.
    pub fn stance_time(&self) -> f64 {
        (1.0 - self.ratio) / self.freq
    }

    /// Commanded duration of one aerial phase. Running gaits (`ratio > 0.5`)
    /// have two aerial windows per cycle, each of this length; zero otherwise.
    pub fn aerial_phase_time(&self) -> f64 {
        commanded_aerial_fraction(self.ratio).unwrap_or(0.0) / (2.0 * self.freq)
    }
}

/// Commanded mode of one foot at a given phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FootMode {
    Swing,
    Stance,
}

pub const LEFT_FOOT_OFFSET: f64 = 0.0;
pub const RIGHT_FOOT_OFFSET: f64 = 0.5;

/// Advance the phase by `dt` seconds at stride frequency `freq`.
pub fn advance(phase: Phase, dt: f64, freq: f64) -> Result<Phase> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidDt(dt));
    }
    if !freq.is_finite() || freq <= 0.0 {
        return Err(Error::InvalidFreq(freq));
    }
    Phase::new(phase.value() + dt * freq)
}

/// Position of one foot within its own cycle, in `[0, 1)`.
fn foot_phase(phase: Phase, offset: f64) -> f64 {
    (phase.value() + offset).rem_euclid(1.0)
}

/// Commanded (left, right) foot modes at the given phase.
///
/// Both feet in swing is legal (aerial window, `ratio > 0.5`); both in
/// stance is legal (double support, `ratio < 0.5`).
pub fn foot_schedule(phase: Phase, ratio: f64) -> Result<(FootMode, FootMode)> {
    if !ratio.is_finite() || ratio <= 0.0 || ratio >= 1.0 {
        return Err(Error::InvalidRatio(ratio));
    }
    let mode = |offset: f64| {
        if foot_phase(phase, offset) < ratio {
            FootMode::Swing
        } else {
            FootMode::Stance
        }
    };
    Ok((mode(LEFT_FOOT_OFFSET), mode(RIGHT_FOOT_OFFSET)))
}

/// Progress through the current swing window for one foot, or `None` in
/// stance. 0 at liftoff, approaching 1 at touchdown.
pub fn swing_progress(phase: Phase, ratio: f64, offset: f64) -> Option<f64> {
    let fp = foot_phase(phase, offset);
    if fp < ratio {
        Some(fp / ratio)
    } else {
        None
    }
}

/// Phase remaining until this foot's swing window ends, in seconds.
pub fn time_to_touchdown(phase: Phase, params: &GaitParams, offset: f64) -> Option<f64> {
    let fp = foot_phase(phase, offset);
    if fp < params.ratio {
        Some((params.ratio - fp) / params.freq)
    } else {
        None
    }
}

/// Fraction of each cycle with both feet commanded to swing:
/// `max(0, 2*ratio - 1)`.
pub fn commanded_aerial_fraction(ratio: f64) -> Result<f64> {
    if !ratio.is_finite() || ratio <= 0.0 || ratio >= 1.0 {
        return Err(Error::InvalidRatio(ratio));
    }
    Ok((2.0 * ratio - 1.0).max(0.0))
}

/// Fraction of each cycle with both feet commanded to stance:
/// `max(0, 1 - 2*ratio)`.
pub fn commanded_double_support_fraction(ratio: f64) -> Result<f64> {
    if !ratio.is_finite() || ratio <= 0.0 || ratio >= 1.0 {
        return Err(Error::InvalidRatio(ratio));
    }
    Ok((1.0 - 2.0 * ratio).max(0.0))
}
