//! Five-stage 100 m dash state machine with phase-calibrated transitions.
//!
//! Swapping from the standing controller into the running clock at an
//! arbitrary phase yanks a loaded foot straight into swing; the safe swap
//! phase is calibrated beforehand as the median ground-reaction-force
//! crossing of a stepping-in-place rollout (the instant the load passes
//! from one foot to the other). The reverse swap waits for a foot-apex
//! phase and runs down under a slightly negative speed command so the
//! standing controller catches a symmetric, nearly stationary hop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControllerGains, RunningController, StandingController};
use crate::error::{Error, Result};
use crate::gait::{self, Phase};
use crate::sim::{
    rollout, BipedState, Controller, LogMeta, ModelParams, Simulator, SpeedSchedule, SpeedToGait,
    StepContext, TrajectoryLog,
};

/// Policy steps in the stepping-in-place calibration rollout (~30 s).
pub const CALIBRATION_STEPS: usize = 1200;

/// COM speed below which the robot counts as standing still [m/s].
pub const STAND_SPEED_EPS: f64 = 0.05;

/// Seconds the COM must stay below [`STAND_SPEED_EPS`] to verify the stand.
pub const STAND_HOLD_TIME: f64 = 2.0;

/// Start-line offset: feet begin behind `x = 0`.
const START_X: f64 = -0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DashStage {
    StandAtLine,
    Accelerate,
    SteadyRun,
    Decelerate,
    StandStop,
}

impl DashStage {
    /// 1-based stage number in the fixed order.
    pub fn number(self) -> u8 {
        match self {
            DashStage::StandAtLine => 1,
            DashStage::Accelerate => 2,
            DashStage::SteadyRun => 3,
            DashStage::Decelerate => 4,
            DashStage::StandStop => 5,
        }
    }
}

/// Phases measured from a stepping-in-place rollout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCalibration {
    /// Stand-to-run swap phase: median GRF crossing of the cluster nearer 0.
    pub start_phase: Phase,
    /// Per-foot median phase of the foot-height apex.
    pub apex_phases: [Phase; 2],
    /// Circular tolerance for the apex wait [phase units].
    pub tolerance: f64,
}

/// Which transition safeguards a dash run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionPolicy {
    /// Apex-phase wait plus the negative stop command.
    Calibrated,
    /// Apex-phase wait, stop command forced to zero.
    ApexWaitOnly,
    /// Swap to standing the moment the stand signal fires.
    ImmediateSwap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DashConfig {
    /// Finish line: COM x crossing stops the timer [m].
    pub course_length: f64,
    /// Cruise speed command, in (0, 5] [m/s].
    pub cruise_speed: f64,
    /// Distance past the finish line at which the stand signal fires [m].
    pub stand_signal_distance: f64,
    /// COM speed the run-down must reach before the stand signal [m/s].
    pub stand_signal_speed: f64,
    /// Run-down speed command, small and negative [m/s].
    pub stop_cmd: f64,
    /// Stage-2 command ramp 0 -> cruise duration [s].
    pub ramp_time: f64,
    /// Scripted operator swap signal: time spent standing at the line [s].
    pub swap_signal_time: f64,
    /// Hard cap on simulated time [s].
    pub max_duration: f64,
    pub seed: u64,
    pub transition: TransitionPolicy,
}

impl Default for DashConfig {
    fn default() -> Self {
        DashConfig {
            course_length: 100.0,
            cruise_speed: 4.0,
            stand_signal_distance: 8.0,
            stand_signal_speed: 0.3,
            stop_cmd: -0.1,
            ramp_time: 2.5,
            swap_signal_time: 2.0,
            max_duration: 60.0,
            seed: 0,
            transition: TransitionPolicy::Calibrated,
        }
    }
}

impl DashConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.course_length > 0.0, "course_length must be positive"),
            (
                self.cruise_speed > 0.0 && self.cruise_speed <= 5.0,
                "cruise_speed must be in (0, 5]",
            ),
            (
                self.stand_signal_distance >= 0.0,
                "stand_signal_distance must be non-negative",
            ),
            (
                self.stand_signal_speed > 0.0,
                "stand_signal_speed must be positive",
            ),
            (self.stop_cmd < 0.0, "stop_cmd must be negative"),
            (self.ramp_time > 0.0, "ramp_time must be positive"),
            (
                self.swap_signal_time >= 0.0,
                "swap_signal_time must be non-negative",
            ),
            (
                self.max_duration > self.swap_signal_time,
                "max_duration must exceed swap_signal_time",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidDashConfig(msg.into()));
            }
        }
        for v in [
            self.course_length,
            self.cruise_speed,
            self.stand_signal_distance,
            self.stand_signal_speed,
            self.stop_cmd,
            self.ramp_time,
            self.swap_signal_time,
            self.max_duration,
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidDashConfig("non-finite field".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: DashStage,
    pub entered_at: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DashResult {
    /// Swap signal to finish-line crossing [s]; None if never crossed.
    pub official_time: Option<f64>,
    /// Stage entries in the order observed (a prefix of the five stages).
    pub stages: Vec<StageRecord>,
    /// Stand-to-run swap phase actually used.
    pub start_phase: Phase,
    /// Run-to-stand swap phase actually used, if the swap happened.
    pub stand_swap_phase: Option<Phase>,
    pub fell: bool,
    pub fall_time: Option<f64>,
    /// COM speed stayed below the stand threshold for the hold time.
    pub standing_verified: bool,
    pub cruise_speed: f64,
    pub course_length: f64,
    pub seed: u64,
}

impl DashResult {
    /// All five stages, no fall, final stand verified.
    pub fn success(&self) -> bool {
        !self.fell && self.standing_verified && self.stages.len() == 5
    }

    /// Course length over official time [m/s].
    pub fn average_speed(&self) -> Option<f64> {
        self.official_time.map(|t| self.course_length / t)
    }
}

/// Stepping-in-place rollout used for phase calibration: the running
/// controller under a zero speed command for [`CALIBRATION_STEPS`] steps.
pub fn step_in_place(
    map: &dyn SpeedToGait,
    gains: &ControllerGains,
    model: &ModelParams,
    seed: u64,
) -> Result<TrajectoryLog> {
    let mut controller = RunningController::new(*gains, *model)?;
    rollout(
        &mut controller,
        map,
        &SpeedSchedule::constant(0.0),
        CALIBRATION_STEPS as f64 * model.policy_period,
        seed,
        model,
    )
}

/// Phases of the policy steps where `sign(GRF_L - GRF_R)` flips. Zero
/// differences (flight, exact ties) carry the previous sign forward.
pub fn find_grf_crossings(log: &TrajectoryLog) -> Vec<Phase> {
    let mut crossings = Vec::new();
    let mut last_sign = 0.0;
    for s in &log.samples {
        let diff = s.grf[0].z - s.grf[1].z;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        if sign != 0.0 {
            if last_sign != 0.0 && sign != last_sign {
                crossings.push(s.phase);
            }
            last_sign = sign;
        }
    }
    crossings
}

/// Signed circular difference `a - b`, wrapped into [-0.5, 0.5).
fn circ_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// Median of phases forming one tight circular cluster: unwrap about the
/// mean direction, then take the scalar median.
fn circular_median(values: &[f64]) -> f64 {
    use std::f64::consts::TAU;
    let (s, c) = values.iter().fold((0.0, 0.0), |(s, c), &v| {
        (s + (TAU * v).sin(), c + (TAU * v).cos())
    });
    let center = s.atan2(c) / TAU;
    let mut unwrapped: Vec<f64> = values.iter().map(|&v| center + circ_diff(v, center)).collect();
    unwrapped.sort_by(f64::total_cmp);
    let n = unwrapped.len();
    let median = if n % 2 == 1 {
        unwrapped[n / 2]
    } else {
        0.5 * (unwrapped[n / 2 - 1] + unwrapped[n / 2])
    };
    median.rem_euclid(1.0)
}

/// Splits crossing phases into the two anti-phase modes and returns the
/// median of the cluster nearer phase 0 (fixed convention).
pub fn cluster_start_phase(crossings: &[Phase]) -> Result<Phase> {
    if crossings.len() < 4 {
        return Err(Error::Calibration(format!(
            "need at least 4 GRF crossings, got {}",
            crossings.len()
        )));
    }
    use std::f64::consts::TAU;
    // doubling the angle folds the two anti-phase clusters onto one mode
    let (s, c) = crossings.iter().fold((0.0, 0.0), |(s, c), p| {
        (s + (2.0 * TAU * p.value()).sin(), c + (2.0 * TAU * p.value()).cos())
    });
    let half = (s.atan2(c) / TAU / 2.0).rem_euclid(0.5);
    let centers = [half, half + 0.5];
    let near = if circ_diff(centers[0], 0.0).abs() <= circ_diff(centers[1], 0.0).abs() {
        centers[0]
    } else {
        centers[1]
    };
    let cluster: Vec<f64> = crossings
        .iter()
        .map(|p| p.value())
        .filter(|&v| circ_diff(v, near).abs() <= 0.25)
        .collect();
    if cluster.is_empty() {
        return Err(Error::Calibration("empty crossing cluster".into()));
    }
    Phase::new(circular_median(&cluster))
}

/// Runs the calibration rollout and returns the stand-to-run swap phase.
pub fn calibrate_start_phase(
    map: &dyn SpeedToGait,
    gains: &ControllerGains,
    model: &ModelParams,
    seed: u64,
) -> Result<Phase> {
    let log = step_in_place(map, gains, model, seed)?;
    cluster_start_phase(&find_grf_crossings(&log))
}

/// Per-foot median phase of strict local maxima of foot height on the
/// policy-rate series.
pub fn find_apex_phases(log: &TrajectoryLog) -> Result<(Phase, Phase)> {
    let mut medians = [Phase::ZERO; 2];
    for foot in 0..2 {
        let z: Vec<f64> = log.samples.iter().map(|s| s.foot_pos[foot].z).collect();
        let mut apexes = Vec::new();
        for k in 1..z.len().saturating_sub(1) {
            if z[k] > z[k - 1] && z[k] > z[k + 1] {
                apexes.push(log.samples[k].phase.value());
            }
        }
        if apexes.is_empty() {
            return Err(Error::Calibration(format!(
                "foot {foot} has no height maxima in the calibration rollout"
            )));
        }
        medians[foot] = Phase::new(circular_median(&apexes))?;
    }
    Ok((medians[0], medians[1]))
}

/// One calibration rollout producing all transition phases. The apex-wait
/// tolerance spans 1.5 policy periods at the stepping gait frequency, so
/// the 40 Hz poll cannot step over the window.
pub fn calibrate(
    map: &dyn SpeedToGait,
    gains: &ControllerGains,
    model: &ModelParams,
    seed: u64,
) -> Result<PhaseCalibration> {
    let log = step_in_place(map, gains, model, seed)?;
    if log.fell() {
        return Err(Error::Calibration("stepping-in-place rollout fell".into()));
    }
    let start_phase = cluster_start_phase(&find_grf_crossings(&log))?;
    let apex = find_apex_phases(&log)?;
    let freq = map.gait_for(0.0).freq;
    Ok(PhaseCalibration {
        start_phase,
        apex_phases: [apex.0, apex.1],
        tolerance: 1.5 * model.policy_period * freq,
    })
}

fn near_apex(phase: Phase, calibration: &PhaseCalibration) -> bool {
    calibration
        .apex_phases
        .iter()
        .any(|a| phase.circular_distance(*a) <= calibration.tolerance)
}

/// Runs one dash through the five-stage state machine.
///
/// Stage flow: stand behind the line until the scripted swap signal; set
/// the phase register to the calibrated start phase and engage the running
/// controller (the timer starts at the signal); ramp the command to cruise;
/// cruise until COM x crosses the course length (the timer stops); drop
/// the command to the stop command; once the stand signal distance is
/// passed, wait for an apex phase (policy permitting) and swap back to the
/// standing controller; verify the stand. A fall ends the run immediately.
pub fn run_dash(
    config: &DashConfig,
    calibration: &PhaseCalibration,
    map: &dyn SpeedToGait,
    gains: &ControllerGains,
    model: &ModelParams,
) -> Result<(DashResult, TrajectoryLog)> {
    config.validate()?;
    let mut state = BipedState::standing_start(model, START_X);
    state.perturb(config.seed);
    let mut sim = Simulator::new(*model, state)?;
    let mut standing = StandingController::new(*gains, *model)?;
    let mut running = RunningController::new(*gains, *model)?;
    standing.on_engage(sim.state());

    let apex_wait = config.transition != TransitionPolicy::ImmediateSwap;
    let stop_cmd = if config.transition == TransitionPolicy::Calibrated {
        config.stop_cmd
    } else {
        0.0
    };

    let dt = model.policy_period;
    let steps = (config.max_duration / dt).ceil() as usize;
    let mut samples = Vec::new();

    let mut stage = DashStage::StandAtLine;
    let mut stages = vec![StageRecord {
        stage,
        entered_at: 0.0,
    }];
    let mut phase = Phase::ZERO;
    let mut timer_start = 0.0;
    let mut official_time = None;
    let mut stand_swap_phase = None;
    let mut still_since: Option<f64> = None;
    let mut standing_verified = false;

    for i in 0..steps {
        let t = i as f64 * dt;
        let st = *sim.state();

        // at most one transition per policy step, in stage order
        let next = match stage {
            DashStage::StandAtLine if t >= config.swap_signal_time => Some(DashStage::Accelerate),
            DashStage::Accelerate if t - timer_start >= config.ramp_time => {
                Some(DashStage::SteadyRun)
            }
            DashStage::SteadyRun if st.com_pos.x >= config.course_length => {
                Some(DashStage::Decelerate)
            }
            DashStage::Decelerate
                if st.com_pos.x >= config.course_length + config.stand_signal_distance
                    && st.com_vel.x.abs() <= config.stand_signal_speed
                    && (!apex_wait || near_apex(phase, calibration)) =>
            {
                Some(DashStage::StandStop)
            }
            _ => None,
        };
        if let Some(entered) = next {
            stage = entered;
            stages.push(StageRecord {
                stage,
                entered_at: t,
            });
            match entered {
                DashStage::Accelerate => {
                    timer_start = t;
                    phase = calibration.start_phase;
                    running.on_engage(&st);
                }
                DashStage::Decelerate => official_time = Some(t - timer_start),
                DashStage::StandStop => {
                    stand_swap_phase = Some(phase);
                    standing.on_engage(&st);
                }
                _ => {}
            }
        }

        let cmd = match stage {
            DashStage::StandAtLine | DashStage::StandStop => 0.0,
            DashStage::Accelerate => {
                config.cruise_speed * ((t - timer_start) / config.ramp_time).clamp(0.0, 1.0)
            }
            DashStage::SteadyRun => config.cruise_speed,
            DashStage::Decelerate => stop_cmd,
        };
        let gait = map.gait_for(cmd);
        let active: &mut dyn Controller = match stage {
            DashStage::StandAtLine | DashStage::StandStop => &mut standing,
            _ => &mut running,
        };
        sim.set_phase(phase);
        let out = active.control(sim.state(), phase, &gait, cmd)?;
        let ctx = StepContext {
            phase,
            cmd_speed: cmd,
            gait,
        };
        match sim.policy_step(&out, ctx) {
            Some(sample) => samples.push(sample),
            None => break,
        }
        if active.clock_driven() {
            phase = gait::advance(phase, dt, gait.freq)?;
        }

        if stage == DashStage::StandStop {
            if sim.state().com_vel.norm() < STAND_SPEED_EPS {
                let anchor = *still_since.get_or_insert(sim.state().time);
                if sim.state().time - anchor >= STAND_HOLD_TIME {
                    standing_verified = true;
                    break;
                }
            } else {
                still_since = None;
            }
        }
    }

    let fell = sim.fallen().is_some();
    let result = DashResult {
        official_time,
        stages,
        start_phase: calibration.start_phase,
        stand_swap_phase,
        fell,
        fall_time: sim.fallen(),
        standing_verified: standing_verified && !fell,
        cruise_speed: config.cruise_speed,
        course_length: config.course_length,
        seed: config.seed,
    };
    let log = TrajectoryLog {
        samples,
        meta: LogMeta {
            seed: config.seed,
            model: *model,
            schedule: SpeedSchedule::External,
            fell,
            fall_time: sim.fallen(),
        },
    };
    Ok((result, log))
}

/// Runs `trials` dashes with seeds `config.seed .. config.seed + trials`,
/// sharing one calibration. Trials run in parallel; results come back in
/// trial order.
pub fn run_trials(
    config: &DashConfig,
    calibration: &PhaseCalibration,
    map: &(dyn SpeedToGait + Sync),
    gains: &ControllerGains,
    model: &ModelParams,
    trials: usize,
) -> Result<Vec<DashResult>> {
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut cfg = *config;
            cfg.seed = config.seed + k as u64;
            run_dash(&cfg, calibration, map, gains, model).map(|(result, _)| result)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControllerGains;
    use crate::gait::GaitParams;
    use crate::optimize::{BaselineMap, Knot};
    use crate::sim::{SampleRecord, Vec2};
    use approx::assert_relative_eq;

    fn model() -> ModelParams {
        ModelParams::default()
    }

    fn gains() -> ControllerGains {
        ControllerGains::default()
    }

    /// Piecewise-linear stand-in for the fitted speed-to-parameter map.
    fn dash_map() -> BaselineMap {
        BaselineMap::new(vec![
            Knot {
                speed: 2.0,
                freq: 2.005,
                ratio: 0.480,
            },
            Knot {
                speed: 3.0,
                freq: 2.031,
                ratio: 0.553,
            },
            Knot {
                speed: 4.0,
                freq: 2.068,
                ratio: 0.630,
            },
        ])
        .unwrap()
    }

    fn synthetic_log(steps: usize, freq: f64, sample: impl Fn(f64) -> ([f64; 2], [f64; 2])) -> TrajectoryLog {
        let m = model();
        let dt = m.policy_period;
        let samples = (0..steps)
            .map(|i| {
                let phase = Phase::new((i as f64 * freq * dt).rem_euclid(1.0)).unwrap();
                let (grf_z, foot_z) = sample(phase.value());
                SampleRecord {
                    time: (i + 1) as f64 * dt,
                    phase,
                    com_pos: Vec2::new(0.0, 0.85),
                    com_vel: Vec2::ZERO,
                    foot_pos: [Vec2::new(0.0, foot_z[0]), Vec2::new(0.0, foot_z[1])],
                    grf: [Vec2::new(0.0, grf_z[0]), Vec2::new(0.0, grf_z[1])],
                    actuator_force: [0.0, 0.0],
                    leg_rate: [0.0, 0.0],
                    swing_rate: [0.0, 0.0],
                    cmd_speed: 0.0,
                    gait: GaitParams::new(freq, 0.5).unwrap(),
                }
            })
            .collect();
        TrajectoryLog {
            samples,
            meta: LogMeta {
                seed: 0,
                model: m,
                schedule: SpeedSchedule::constant(0.0),
                fell: false,
                fall_time: None,
            },
        }
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let base = DashConfig::default();
        assert!(base.validate().is_ok());
        for bad in [
            DashConfig {
                cruise_speed: 0.0,
                ..base
            },
            DashConfig {
                cruise_speed: 5.5,
                ..base
            },
            DashConfig {
                stop_cmd: 0.0,
                ..base
            },
            DashConfig {
                course_length: -1.0,
                ..base
            },
            DashConfig {
                ramp_time: 0.0,
                ..base
            },
            DashConfig {
                max_duration: 1.0,
                ..base
            },
            DashConfig {
                stop_cmd: f64::NAN,
                ..base
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn sine_grf_difference_crosses_at_half_cycle_points() {
        use std::f64::consts::TAU;
        // GRF_L - GRF_R = sin(2 pi phase): sign flips at phases 0 and 0.5
        let log = synthetic_log(400, 1.6, |p| {
            let d = (TAU * p).sin();
            ([400.0 + 200.0 * d, 400.0 - 200.0 * d], [0.0, 0.0])
        });
        let crossings = find_grf_crossings(&log);
        assert!(crossings.len() >= 10);
        let dt_phase = 1.6 * model().policy_period;
        for p in crossings {
            let near_zero = p.circular_distance(Phase::ZERO) <= dt_phase + 1e-12;
            let near_half = p.circular_distance(Phase::new(0.5).unwrap()) <= dt_phase + 1e-12;
            assert!(near_zero || near_half, "crossing at {}", p.value());
        }
    }

    #[test]
    fn constant_grfs_have_no_crossings() {
        let log = synthetic_log(200, 1.6, |_| ([500.0, 300.0], [0.0, 0.0]));
        assert!(find_grf_crossings(&log).is_empty());
        let flight = synthetic_log(200, 1.6, |_| ([0.0, 0.0], [0.0, 0.0]));
        assert!(find_grf_crossings(&flight).is_empty());
    }

    #[test]
    fn cluster_median_picks_mode_nearer_zero() {
        let crossings: Vec<Phase> = [0.09, 0.10, 0.11, 0.59, 0.60, 0.61]
            .iter()
            .map(|&v| Phase::new(v).unwrap())
            .collect();
        let start = cluster_start_phase(&crossings).unwrap();
        assert_relative_eq!(start.value(), 0.10, epsilon = 1e-12);
    }

    #[test]
    fn cluster_median_handles_wraparound() {
        // cluster straddling 0: {0.98, 0.99, 0.02} has circular median 0.997
        let crossings: Vec<Phase> = [0.98, 0.99, 0.02, 0.48, 0.49, 0.52]
            .iter()
            .map(|&v| Phase::new(v).unwrap())
            .collect();
        let start = cluster_start_phase(&crossings).unwrap();
        let d = circ_diff(start.value(), 0.99);
        assert!(d.abs() < 0.02, "got {}", start.value());
    }

    #[test]
    fn cluster_requires_four_crossings() {
        let crossings: Vec<Phase> = [0.1, 0.6, 0.1]
            .iter()
            .map(|&v| Phase::new(v).unwrap())
            .collect();
        assert!(matches!(
            cluster_start_phase(&crossings),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn synthetic_apex_sits_at_quarter_phase() {
        use std::f64::consts::TAU;
        // foot height max(0, sin) peaks at phase 0.25; other foot anti-phase
        let log = synthetic_log(500, 1.6, |p| {
            let z0 = (TAU * p).sin().max(0.0);
            let z1 = (TAU * (p + 0.5)).sin().max(0.0);
            ([0.0, 0.0], [z0, z1])
        });
        let (a0, a1) = find_apex_phases(&log).unwrap();
        let dt_phase = 1.6 * model().policy_period;
        assert!(a0.circular_distance(Phase::new(0.25).unwrap()) <= dt_phase);
        assert!(a1.circular_distance(Phase::new(0.75).unwrap()) <= dt_phase);
        // anti-phase feet sit half a cycle apart
        assert!((a0.circular_distance(a1) - 0.5).abs() <= 2.0 * dt_phase);
    }

    #[test]
    fn flat_foot_height_fails_apex_calibration() {
        let log = synthetic_log(200, 1.6, |_| ([400.0, 400.0], [0.0, 0.0]));
        assert!(matches!(find_apex_phases(&log), Err(Error::Calibration(_))));
    }

    #[test]
    fn calibration_is_deterministic_per_seed() {
        let (map, g, m) = (dash_map(), gains(), model());
        let a = calibrate(&map, &g, &m, 7).unwrap();
        let b = calibrate(&map, &g, &m, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_rollout_crosses_twice_per_stride() {
        let (map, g, m) = (dash_map(), gains(), model());
        let log = step_in_place(&map, &g, &m, 3).unwrap();
        assert!(!log.fell());
        let crossings = find_grf_crossings(&log);
        let strides = CALIBRATION_STEPS as f64 * m.policy_period * map.gait_for(0.0).freq;
        let per_stride = crossings.len() as f64 / strides;
        assert!(
            (per_stride - 2.0).abs() <= 0.2,
            "crossings per stride: {per_stride}"
        );
    }

    #[test]
    fn calibrated_phases_are_anti_symmetric() {
        let (map, g, m) = (dash_map(), gains(), model());
        let cal = calibrate(&map, &g, &m, 0).unwrap();
        let gap = cal.apex_phases[0].circular_distance(cal.apex_phases[1]);
        assert!(
            (gap - 0.5).abs() <= 2.0 * cal.tolerance,
            "apex phases {:?} gap {gap}",
            cal.apex_phases
        );
        assert!(cal.tolerance > m.policy_period * map.gait_for(0.0).freq);
    }

    #[test]
    fn dash_completes_with_consistent_timing() {
        let (map, g, m) = (dash_map(), gains(), model());
        let cal = calibrate(&map, &g, &m, 0).unwrap();
        let config = DashConfig::default();
        let (result, log) = run_dash(&config, &cal, &map, &g, &m).unwrap();
        assert!(result.success(), "{result:?}");
        let time = result.official_time.unwrap();
        assert!(
            time > config.course_length / config.cruise_speed,
            "official {time}"
        );
        assert!(time < 35.0, "official {time}");
        // stage order is the full sequence, timestamps non-decreasing
        let numbers: Vec<u8> = result.stages.iter().map(|s| s.stage.number()).collect();
        assert_eq!(numbers, vec![1, 2, 3, 4, 5]);
        assert!(result
            .stages
            .windows(2)
            .all(|w| w[0].entered_at <= w[1].entered_at));
        // first running-controller step executes at the calibrated phase
        let accel_at = result.stages[1].entered_at;
        let first_run = log
            .samples
            .iter()
            .find(|s| s.time > accel_at)
            .unwrap();
        assert_eq!(first_run.phase, cal.start_phase);
        // timer: stage-4 entry minus stage-2 entry is the official time
        assert_relative_eq!(
            result.stages[3].entered_at - result.stages[1].entered_at,
            time,
            epsilon = 1e-12
        );
    }

    #[test]
    fn apex_gate_bounds_the_stand_swap_phase() {
        let (map, g, m) = (dash_map(), gains(), model());
        let cal = calibrate(&map, &g, &m, 0).unwrap();
        for seed in [0, 1, 2] {
            let config = DashConfig {
                seed,
                ..DashConfig::default()
            };
            let (result, _) = run_dash(&config, &cal, &map, &g, &m).unwrap();
            let swap = result.stand_swap_phase.expect("swap happened");
            assert!(
                cal.apex_phases
                    .iter()
                    .any(|a| swap.circular_distance(*a) <= cal.tolerance),
                "swap phase {} outside both apex windows",
                swap.value()
            );
        }
    }

    #[test]
    fn timeout_without_crossing_reports_no_time() {
        let (map, g, m) = (dash_map(), gains(), model());
        let cal = calibrate(&map, &g, &m, 0).unwrap();
        let config = DashConfig {
            max_duration: 6.0,
            ..DashConfig::default()
        };
        let (result, _) = run_dash(&config, &cal, &map, &g, &m).unwrap();
        assert_eq!(result.official_time, None);
        assert!(!result.success());
        assert!(result.stages.iter().all(|s| s.stage != DashStage::Decelerate));
    }

    #[test]
    fn stage_sequence_is_always_a_prefix() {
        let (map, g, m) = (dash_map(), gains(), model());
        let cal = calibrate(&map, &g, &m, 0).unwrap();
        for (transition, max_duration) in [
            (TransitionPolicy::Calibrated, 8.0),
            (TransitionPolicy::ApexWaitOnly, 60.0),
            (TransitionPolicy::ImmediateSwap, 60.0),
        ] {
            let config = DashConfig {
                transition,
                max_duration,
                seed: 11,
                ..DashConfig::default()
            };
            let (result, _) = run_dash(&config, &cal, &map, &g, &m).unwrap();
            let numbers: Vec<u8> = result.stages.iter().map(|s| s.stage.number()).collect();
            assert_eq!(numbers, (1..=numbers.len() as u8).collect::<Vec<u8>>());
        }
    }

    #[test]
    fn dash_result_json_round_trips() {
        let (map, g, m) = (dash_map(), gains(), model());
        let cal = calibrate(&map, &g, &m, 0).unwrap();
        let config = DashConfig {
            max_duration: 8.0,
            ..DashConfig::default()
        };
        let (result, _) = run_dash(&config, &cal, &map, &g, &m).unwrap();
        let json = serde_json::to_string_pretty(&result).unwrap();
        let back: DashResult = serde_json::from_str(&json).unwrap();
        assert_eq!(result, back);
    }

    #[test]
    fn trials_are_seeded_consecutively_and_reproducible() {
        let (map, g, m) = (dash_map(), gains(), model());
        let cal = calibrate(&map, &g, &m, 0).unwrap();
        let config = DashConfig {
            max_duration: 8.0,
            ..DashConfig::default()
        };
        let a = run_trials(&config, &cal, &map, &g, &m, 3).unwrap();
        let b = run_trials(&config, &cal, &map, &g, &m, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
