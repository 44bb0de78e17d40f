//! Planar biped running lab.
//!
//! A reduced-order sagittal-plane biped — point-mass torso on two massless
//! telescoping spring-damper legs — simulated at a fixed 2 kHz physics step
//! with controller updates at 40 Hz. On top of the simulator:
//!
//! - [`gait`]: cyclic phase clock and the per-foot swing/stance schedule
//!   derived from the `(freq, ratio)` gait parameters.
//! - [`sim`]: the physics core, rollouts, and trajectory logging.
//! - [`control`]: a clock-driven running controller (Raibert-style foot
//!   placement plus apex-regulating thrust) and a standing controller.
//! - [`optimize`]: grid sweep over gait parameters, four-cost scoring,
//!   top-5 selection per speed, and the cubic speed-to-parameter map.
//! - [`mechanics`]: contact segmentation and per-stride running mechanics
//!   (stride length/frequency, swing/contact/aerial times, effective GRF
//!   and effective impulse).
//! - [`dash`]: the five-stage 100m dash state machine with phase-calibrated
//!   stand-to-run and run-to-stand transitions.

pub mod control;
pub mod dash;
pub mod error;
pub mod gait;
pub mod io;
pub mod mechanics;
pub mod optimize;
pub mod sim;

pub use dash::{DashConfig, DashResult, DashStage, PhaseCalibration, TransitionPolicy};
pub use error::Error;
pub use gait::{FootMode, GaitParams, Phase};
pub use optimize::{BaselineMap, ScoreBreakdown, SpeedParamMap, SweepSpec, SweepTable};
pub use sim::{BipedState, ModelParams, SampleRecord, TrajectoryLog};
