//! Planar biped physics: point-mass torso, two massless telescoping
//! spring-damper legs, unilateral contact with the ground plane `z = 0`.
//!
//! Physics integrates at a fixed 2 kHz substep (semi-implicit Euler) while
//! controllers are consulted once per 40 Hz policy step; one policy period
//! is exactly 50 substeps. Stance feet are pinned to the ground and exert
//! an axial spring-damper force (plus a controller feedforward) on the COM;
//! swing feet are massless and follow kinematic trajectories, so the ground
//! reaction force always equals the applied leg force.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{self, GaitParams, Phase};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Sagittal-plane vector (forward x, vertical z).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub z: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, z: 0.0 };

    pub fn new(x: f64, z: f64) -> Self {
        Vec2 { x, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.z * self.z).sqrt()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.z * other.z
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.z - rhs.z)
    }
}

/// Physical constants of the reduced-order model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Torso point mass [kg].
    pub mass: f64,
    /// Rest length of each telescoping leg [m].
    pub leg_rest_length: f64,
    /// Axial leg stiffness [N/m].
    pub leg_stiffness: f64,
    /// Axial leg damping [N·s/m].
    pub leg_damping: f64,
    /// Saturation of the total axial leg force [N].
    pub max_leg_force: f64,
    /// Gravitational acceleration [m/s²].
    pub gravity: f64,
    /// Physics substep [s].
    pub physics_dt: f64,
    /// Controller update period [s]; must be an exact multiple of `physics_dt`.
    pub policy_period: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            mass: 31.0,
            leg_rest_length: 0.9,
            leg_stiffness: 10_000.0,
            leg_damping: 60.0,
            max_leg_force: 1_400.0,
            gravity: 9.81,
            physics_dt: 1.0 / 2000.0,
            policy_period: 1.0 / 40.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let check = |v: f64, name: &str| -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
            Ok(())
        };
        check(self.mass, "mass")?;
        check(self.leg_rest_length, "leg_rest_length")?;
        check(self.leg_stiffness, "leg_stiffness")?;
        check(self.max_leg_force, "max_leg_force")?;
        check(self.gravity, "gravity")?;
        check(self.physics_dt, "physics_dt")?;
        check(self.policy_period, "policy_period")?;
        if !self.leg_damping.is_finite() || self.leg_damping < 0.0 {
            return Err(Error::InvalidModel(format!(
                "leg_damping must be non-negative, got {}",
                self.leg_damping
            )));
        }
        let ratio = self.policy_period / self.physics_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::InvalidModel(format!(
                "policy_period must be an integer multiple of physics_dt ({ratio})"
            )));
        }
        Ok(())
    }

    pub fn substeps_per_policy(&self) -> usize {
        (self.policy_period / self.physics_dt).round() as usize
    }

    /// Body weight `m·g` [N].
    pub fn body_weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// COM height below which the robot counts as fallen.
    pub fn fall_height(&self) -> f64 {
        0.5 * self.leg_rest_length
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootState {
    pub pos: Vec2,
    pub contact: bool,
    /// Telescoping-servo set-length: the spring reference the leg servo
    /// holds. Rest length while the foot is free; latched to the leg
    /// length at touchdown while pinned (retracted touchdown — contact
    /// starts force-free, the spring loads from further compression).
    pub set_len: f64,
}

/// Full simulator state at an instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BipedState {
    pub com_pos: Vec2,
    pub com_vel: Vec2,
    pub feet: [FootState; 2],
    pub time: f64,
    pub phase: Phase,
}

impl BipedState {
    /// Canonical double-support standing pose: COM at the two-leg spring
    /// equilibrium height, feet pinned symmetric about `x = com_x`.
    pub fn standing_start(model: &ModelParams, com_x: f64) -> BipedState {
        let half_stance = 0.1;
        let settle = model.body_weight() / (2.0 * model.leg_stiffness);
        let z = model.leg_rest_length - settle;
        BipedState {
            com_pos: Vec2::new(com_x, z),
            com_vel: Vec2::ZERO,
            feet: [
                FootState {
                    pos: Vec2::new(com_x - half_stance, 0.0),
                    contact: true,
                    set_len: model.leg_rest_length,
                },
                FootState {
                    pos: Vec2::new(com_x + half_stance, 0.0),
                    contact: true,
                    set_len: model.leg_rest_length,
                },
            ],
            time: 0.0,
            phase: Phase::ZERO,
        }
    }

    /// Apply a small seeded perturbation to the COM state. Identical seeds
    /// produce identical perturbations; the draw order is fixed.
    pub fn perturb(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.com_pos.x += rng.gen_range(-0.01..0.01);
        self.com_pos.z += rng.gen_range(-0.005..0.005);
        self.com_vel.x += rng.gen_range(-0.02..0.02);
        self.com_vel.z += rng.gen_range(-0.01..0.01);
    }

    pub fn is_finite(&self) -> bool {
        self.com_pos.is_finite()
            && self.com_vel.is_finite()
            && self.feet.iter().all(|f| f.pos.is_finite())
            && self.time.is_finite()
    }
}

/// True iff the COM has dropped below half the rest leg length or any state
/// component is non-finite.
pub fn detect_fall(state: &BipedState, model: &ModelParams) -> bool {
    !state.is_finite() || state.com_pos.z < model.fall_height()
}

/// Per-leg command for one policy period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LegCommand {
    /// Keep the foot pinned; add `thrust` [N] to the axial servo force.
    Stance { thrust: f64 },
    /// Drive the foot kinematically toward `target` by the end of the
    /// period. `allow_touchdown` permits pinning when the foot meets the
    /// ground while the leg spring would engage.
    SwingTo { target: Vec2, allow_touchdown: bool },
}

/// Controller output for one policy step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutput {
    pub legs: [LegCommand; 2],
}

/// One semi-implicit Euler substep of the COM under gravity plus the given
/// leg forces. Foot handling (pinning, kinematics) is the caller's job.
pub fn integrate_substep(
    state: &BipedState,
    leg_forces: [Vec2; 2],
    dt: f64,
    model: &ModelParams,
) -> BipedState {
    let total = leg_forces[0] + leg_forces[1];
    let accel = Vec2::new(total.x / model.mass, total.z / model.mass - model.gravity);
    let vel = state.com_vel + accel.scale(dt);
    let pos = state.com_pos + vel.scale(dt);
    BipedState {
        com_pos: pos,
        com_vel: vel,
        time: state.time + dt,
        ..*state
    }
}

/// Outcome of resolving one leg's contact force at an instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactResolution {
    /// Whether the foot remains in contact after resolution.
    pub in_contact: bool,
    /// Ground reaction force vector (zero when out of contact).
    pub grf: Vec2,
    /// Total realized axial force along the leg, in `[0, max_leg_force]`.
    pub axial: f64,
}

/// Spring-damper force law for a pinned foot: axial spring about the
/// leg servo's `set_len` plus damping plus commanded thrust. Releases
/// contact when the demanded axial force turns tensile.
///
/// `set_len` is the model rest length for an ordinary touchdown, or the
/// shorter length-at-touch when the swing foot met the ground with the
/// telescope still retracted (contact then starts force-free, so a deep
/// landing cannot fabricate spring energy).
pub fn resolve_contact(
    com_pos: Vec2,
    com_vel: Vec2,
    foot_pos: Vec2,
    set_len: f64,
    thrust: f64,
    model: &ModelParams,
) -> ContactResolution {
    let leg = com_pos - foot_pos;
    let len = leg.norm();
    if len < 1e-9 {
        return ContactResolution {
            in_contact: false,
            grf: Vec2::ZERO,
            axial: 0.0,
        };
    }
    let axis = leg.scale(1.0 / len);
    let len_rate = axis.dot(com_vel); // foot static while pinned
    let demanded =
        model.leg_stiffness * (set_len - len) - model.leg_damping * len_rate + thrust;
    if demanded < 0.0 {
        // unilateral contact: the leg cannot pull
        return ContactResolution {
            in_contact: false,
            grf: Vec2::ZERO,
            axial: 0.0,
        };
    }
    let axial = demanded.min(model.max_leg_force);
    ContactResolution {
        in_contact: true,
        grf: axis.scale(axial),
        axial,
    }
}

/// Per-policy-step sample. Force-like quantities are substep averages over
/// the policy period, so their time integrals are exact; positions and
/// velocities are instantaneous at the end of the step; `phase` and
/// `cmd_speed` are the values the controller acted on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub time: f64,
    pub phase: Phase,
    pub com_pos: Vec2,
    pub com_vel: Vec2,
    pub foot_pos: [Vec2; 2],
    /// Mean ground reaction force per foot; `z` component is never negative.
    pub grf: [Vec2; 2],
    /// Mean realized axial leg force per leg [N].
    pub actuator_force: [f64; 2],
    /// Mean signed leg-length rate per leg [m/s] (extension positive).
    pub leg_rate: [f64; 2],
    /// Mean unsigned leg swing angular rate per leg [rad/s].
    pub swing_rate: [f64; 2],
    pub cmd_speed: f64,
    pub gait: GaitParams,
}

/// Logging context the simulator cannot know on its own.
#[derive(Clone, Copy, Debug)]
pub struct StepContext {
    pub phase: Phase,
    pub cmd_speed: f64,
    pub gait: GaitParams,
}

/// Fixed-step simulator: owns the state and advances one policy period at a
/// time under a [`ControlOutput`].
#[derive(Clone, Debug)]
pub struct Simulator {
    model: ModelParams,
    state: BipedState,
    steps_taken: usize,
    fallen: Option<f64>,
}

impl Simulator {
    pub fn new(model: ModelParams, initial: BipedState) -> Result<Self> {
        model.validate()?;
        Ok(Simulator {
            model,
            state: initial,
            steps_taken: 0,
            fallen: None,
        })
    }

    pub fn state(&self) -> &BipedState {
        &self.state
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    /// Time of the fall, if one has occurred.
    pub fn fallen(&self) -> Option<f64> {
        self.fallen
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Overwrite the gait clock register (used when switching controllers).
    pub fn set_phase(&mut self, phase: Phase) {
        self.state.phase = phase;
    }

    /// Advance one policy period (50 substeps at defaults). Returns the
    /// sample for the step, or `None` if the robot fell during it (the
    /// partial step is not logged; see [`Simulator::fallen`]).
    pub fn policy_step(&mut self, out: &ControlOutput, ctx: StepContext) -> Option<SampleRecord> {
        let n_sub = self.model.substeps_per_policy();
        let dt = self.model.physics_dt;
        let step_start = self.steps_taken as f64 * self.model.policy_period;

        // A pinned foot commanded into swing is lifted by the controller.
        let mut thrust = [0.0f64; 2];
        let mut deltas = [Vec2::ZERO; 2];
        let mut allow_touchdown = [false; 2];
        for i in 0..2 {
            match out.legs[i] {
                LegCommand::Stance { thrust: t } => thrust[i] = t,
                LegCommand::SwingTo {
                    target,
                    allow_touchdown: allow,
                } => {
                    self.state.feet[i].contact = false;
                    self.state.feet[i].set_len = self.model.leg_rest_length;
                    allow_touchdown[i] = allow;
                    let clamped = Vec2::new(target.x, target.z.max(0.0));
                    deltas[i] = (clamped - self.state.feet[i].pos).scale(1.0 / n_sub as f64);
                }
            }
        }

        let mut grf_sum = [Vec2::ZERO; 2];
        let mut axial_sum = [0.0f64; 2];
        let mut leg_rate_sum = [0.0f64; 2];
        let mut swing_rate_sum = [0.0f64; 2];

        for sub in 0..n_sub {
            let before: [Vec2; 2] = [
                self.state.com_pos - self.state.feet[0].pos,
                self.state.com_pos - self.state.feet[1].pos,
            ];

            // Leg forces from the current geometry.
            let mut forces = [Vec2::ZERO; 2];
            for i in 0..2 {
                if self.state.feet[i].contact {
                    let res = resolve_contact(
                        self.state.com_pos,
                        self.state.com_vel,
                        self.state.feet[i].pos,
                        self.state.feet[i].set_len,
                        thrust[i],
                        &self.model,
                    );
                    self.state.feet[i].contact = res.in_contact;
                    if !res.in_contact {
                        self.state.feet[i].set_len = self.model.leg_rest_length;
                    }
                    forces[i] = res.grf;
                    grf_sum[i] = grf_sum[i] + res.grf;
                    axial_sum[i] += res.axial;
                }
            }

            self.state = integrate_substep(&self.state, forces, dt, &self.model);

            // Kinematic feet follow their per-step interpolation.
            for i in 0..2 {
                if !self.state.feet[i].contact {
                    let mut p = self.state.feet[i].pos + deltas[i];
                    p.z = p.z.max(0.0);
                    self.state.feet[i].pos = p;

                    // Touchdown: at the ground, moving down (or resting on
                    // it), commanded to accept contact, and within the
                    // telescope's reach. The servo latches its set-length
                    // to the length at touch (retracted touchdown).
                    if allow_touchdown[i] && p.z <= 1e-9 && deltas[i].z <= 1e-12 {
                        let leg_len = (self.state.com_pos - p).norm();
                        if leg_len <= self.model.leg_rest_length {
                            self.state.feet[i].pos.z = 0.0;
                            self.state.feet[i].contact = true;
                            self.state.feet[i].set_len = leg_len.min(self.model.leg_rest_length);
                            deltas[i] = Vec2::ZERO;
                        }
                    }
                }
            }

            // Motor-motion proxies from finite differences of leg geometry.
            for i in 0..2 {
                let after = self.state.com_pos - self.state.feet[i].pos;
                let (l0, l1) = (before[i].norm(), after.norm());
                leg_rate_sum[i] += (l1 - l0) / dt;
                if l0 > 1e-6 && l1 > 1e-6 {
                    let a0 = before[i].x.atan2(before[i].z);
                    let a1 = after.x.atan2(after.z);
                    swing_rate_sum[i] += (a1 - a0).abs() / dt;
                }
            }

            if detect_fall(&self.state, &self.model) {
                self.fallen = Some(step_start + (sub + 1) as f64 * dt);
                return None;
            }
        }

        self.steps_taken += 1;
        // Exact multiples of the policy period, immune to substep drift.
        self.state.time = self.steps_taken as f64 * self.model.policy_period;

        let inv = 1.0 / n_sub as f64;
        Some(SampleRecord {
            time: self.state.time,
            phase: ctx.phase,
            com_pos: self.state.com_pos,
            com_vel: self.state.com_vel,
            foot_pos: [self.state.feet[0].pos, self.state.feet[1].pos],
            grf: [grf_sum[0].scale(inv), grf_sum[1].scale(inv)],
            actuator_force: [axial_sum[0] * inv, axial_sum[1] * inv],
            leg_rate: [leg_rate_sum[0] * inv, leg_rate_sum[1] * inv],
            swing_rate: [swing_rate_sum[0] * inv, swing_rate_sum[1] * inv],
            cmd_speed: ctx.cmd_speed,
            gait: ctx.gait,
        })
    }
}

/// Speed command as a function of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedSchedule {
    Constant { speed: f64 },
    /// Step-hold segments: from `at` seconds onward the command is `speed`.
    Steps { steps: Vec<ScheduleStep> },
    /// Commanded externally (e.g. by the dash state machine); the per-sample
    /// `cmd_speed` column carries the actual commands.
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub at: f64,
    pub speed: f64,
}

impl SpeedSchedule {
    pub fn constant(speed: f64) -> Self {
        SpeedSchedule::Constant { speed }
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        match self {
            SpeedSchedule::Constant { speed } => *speed,
            SpeedSchedule::Steps { steps } => steps
                .iter()
                .take_while(|s| s.at <= t)
                .last()
                .map(|s| s.speed)
                .unwrap_or(0.0),
            SpeedSchedule::External => 0.0,
        }
    }
}

/// Log metadata serialized as the JSON sidecar of the trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub seed: u64,
    pub model: ModelParams,
    pub schedule: SpeedSchedule,
    pub fell: bool,
    pub fall_time: Option<f64>,
}

/// Policy-rate trajectory of one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub samples: Vec<SampleRecord>,
    pub meta: LogMeta,
}

impl TrajectoryLog {
    pub fn fell(&self) -> bool {
        self.meta.fell
    }

    /// Mean forward speed over the trailing `window` seconds.
    pub fn mean_speed_last(&self, window: f64) -> Option<f64> {
        let t_end = self.samples.last()?.time;
        let cut = t_end - window;
        let tail: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.time > cut)
            .map(|s| s.com_vel.x)
            .collect();
        if tail.is_empty() {
            return None;
        }
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// A 40 Hz policy: produces one [`ControlOutput`] per policy period.
///
/// Implementations must be deterministic: identical call sequences produce
/// identical outputs.
pub trait Controller {
    /// Whether the gait clock advances while this controller is active.
    fn clock_driven(&self) -> bool;

    /// Called once when the harness hands control to this controller.
    fn on_engage(&mut self, _state: &BipedState) {}

    fn control(
        &mut self,
        state: &BipedState,
        phase: Phase,
        gait: &GaitParams,
        cmd: f64,
    ) -> Result<ControlOutput>;
}

/// Maps a speed command to the gait parameters to run at that speed.
pub trait SpeedToGait {
    fn gait_for(&self, speed: f64) -> GaitParams;
}

/// Always the same parameters regardless of speed.
#[derive(Clone, Copy, Debug)]
pub struct FixedGait(pub GaitParams);

impl SpeedToGait for FixedGait {
    fn gait_for(&self, _speed: f64) -> GaitParams {
        self.0
    }
}

/// Run a controller for `duration` seconds from an explicit initial state,
/// logging one sample per policy step. The initial `state.phase` is taken
/// as-is. A fall truncates the log.
pub fn rollout_from(
    initial: BipedState,
    controller: &mut dyn Controller,
    gait_map: &dyn SpeedToGait,
    schedule: &SpeedSchedule,
    duration: f64,
    seed: u64,
    model: &ModelParams,
) -> Result<TrajectoryLog> {
    let mut sim = Simulator::new(*model, initial)?;
    let steps = (duration / model.policy_period).round() as usize;
    let mut samples = Vec::with_capacity(steps);
    controller.on_engage(sim.state());

    let mut phase = sim.state().phase;
    for i in 0..steps {
        let t = i as f64 * model.policy_period;
        let cmd = schedule.speed_at(t);
        let gait = gait_map.gait_for(cmd);
        sim.set_phase(phase);
        let out = controller.control(sim.state(), phase, &gait, cmd)?;
        let ctx = StepContext {
            phase,
            cmd_speed: cmd,
            gait,
        };
        match sim.policy_step(&out, ctx) {
            Some(sample) => samples.push(sample),
            None => break,
        }
        if controller.clock_driven() {
            phase = gait::advance(phase, model.policy_period, gait.freq)?;
        }
    }

    Ok(TrajectoryLog {
        samples,
        meta: LogMeta {
            seed,
            model: *model,
            schedule: schedule.clone(),
            fell: sim.fallen().is_some(),
            fall_time: sim.fallen(),
        },
    })
}

/// Run a controller for `duration` seconds from the canonical standing
/// start (perturbed by `seed`). Identical inputs produce bit-identical
/// logs. Clock-driven controllers start at the left foot's touchdown phase
/// so one foot begins in stance under the COM.
pub fn rollout(
    controller: &mut dyn Controller,
    gait_map: &dyn SpeedToGait,
    schedule: &SpeedSchedule,
    duration: f64,
    seed: u64,
    model: &ModelParams,
) -> Result<TrajectoryLog> {
    let mut state = BipedState::standing_start(model, 0.0);
    state.perturb(seed);
    if controller.clock_driven() {
        let gait0 = gait_map.gait_for(schedule.speed_at(0.0));
        state.phase = Phase::new(gait0.ratio)?;
    }
    rollout_from(state, controller, gait_map, schedule, duration, seed, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> ModelParams {
        ModelParams::default()
    }

    fn airborne_state(z: f64) -> BipedState {
        BipedState {
            com_pos: Vec2::new(0.0, z),
            com_vel: Vec2::ZERO,
            feet: [
                FootState {
                    pos: Vec2::new(-0.1, 0.2),
                    contact: false,
                    set_len: 0.9,
                },
                FootState {
                    pos: Vec2::new(0.1, 0.2),
                    contact: false,
                    set_len: 0.9,
                },
            ],
            time: 0.0,
            phase: Phase::ZERO,
        }
    }

    #[test]
    fn free_fall_single_substep() {
        let m = model();
        let s0 = airborne_state(1.0);
        let s1 = integrate_substep(&s0, [Vec2::ZERO; 2], m.physics_dt, &m);
        assert_relative_eq!(s1.com_vel.z, -m.gravity * m.physics_dt, epsilon = 1e-15);
        assert_eq!(s1.com_vel.x, 0.0);
    }

    #[test]
    fn force_balance_holds_velocity() {
        let m = model();
        let s0 = airborne_state(1.0);
        let weight = Vec2::new(0.0, m.body_weight());
        let s1 = integrate_substep(&s0, [weight, Vec2::ZERO], m.physics_dt, &m);
        assert_relative_eq!(s1.com_vel.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hookean_grf_from_compression() {
        let mut m = model();
        m.leg_stiffness = 5000.0;
        m.leg_damping = 0.0;
        // vertical leg compressed 0.1 m, static COM
        let com = Vec2::new(0.0, m.leg_rest_length - 0.1);
        let res = resolve_contact(com, Vec2::ZERO, Vec2::ZERO, m.leg_rest_length, 0.0, &m);
        assert!(res.in_contact);
        assert_relative_eq!(res.grf.z, 500.0, epsilon = 1e-9);
        assert_relative_eq!(res.grf.x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tensile_demand_releases_contact() {
        let m = model();
        // COM far above rest length: spring stretched, would pull
        let com = Vec2::new(0.0, m.leg_rest_length + 0.2);
        let res = resolve_contact(com, Vec2::ZERO, Vec2::ZERO, m.leg_rest_length, 0.0, &m);
        assert!(!res.in_contact);
        assert_eq!(res.grf, Vec2::ZERO);
        assert_eq!(res.axial, 0.0);
    }

    #[test]
    fn stance_force_passes_through() {
        let mut m = model();
        m.leg_damping = 0.0;
        // choose compression so the demanded force is exactly 800 N
        let compression = 800.0 / m.leg_stiffness;
        let com = Vec2::new(0.0, m.leg_rest_length - compression);
        let res = resolve_contact(com, Vec2::ZERO, Vec2::ZERO, m.leg_rest_length, 0.0, &m);
        assert!(res.in_contact);
        assert_relative_eq!(res.grf.z, 800.0, epsilon = 1e-9);
    }

    #[test]
    fn axial_force_saturates_at_max() {
        let m = model();
        let com = Vec2::new(0.0, m.leg_rest_length - 0.5);
        let res = resolve_contact(com, Vec2::ZERO, Vec2::ZERO, m.leg_rest_length, 0.0, &m);
        assert_eq!(res.axial, m.max_leg_force);
    }

    #[test]
    fn fall_detection_thresholds() {
        let m = model();
        let mut s = airborne_state(m.leg_rest_length);
        assert!(!detect_fall(&s, &m));
        s.com_pos.z = 0.3 * m.leg_rest_length;
        assert!(detect_fall(&s, &m));
        s.com_pos.z = m.leg_rest_length;
        s.com_vel.x = f64::NAN;
        assert!(detect_fall(&s, &m));
    }

    #[test]
    fn foot_above_ground_has_no_contact_force() {
        let m = model();
        let mut sim = Simulator::new(m, airborne_state(1.2)).unwrap();
        let out = ControlOutput {
            legs: [
                LegCommand::SwingTo {
                    target: Vec2::new(-0.1, 0.25),
                    allow_touchdown: false,
                },
                LegCommand::SwingTo {
                    target: Vec2::new(0.1, 0.25),
                    allow_touchdown: false,
                },
            ],
        };
        let ctx = StepContext {
            phase: Phase::ZERO,
            cmd_speed: 0.0,
            gait: GaitParams::new(1.25, 0.4).unwrap(),
        };
        let sample = sim.policy_step(&out, ctx).unwrap();
        assert_eq!(sample.grf[0], Vec2::ZERO);
        assert_eq!(sample.grf[1], Vec2::ZERO);
        assert_eq!(sample.actuator_force, [0.0, 0.0]);
    }

    #[test]
    fn grf_vertical_component_never_negative() {
        let m = model();
        let mut state = BipedState::standing_start(&m, 0.0);
        state.com_vel = Vec2::new(0.4, 0.3);
        let mut sim = Simulator::new(m, state).unwrap();
        let out = ControlOutput {
            legs: [LegCommand::Stance { thrust: 0.0 }, LegCommand::Stance { thrust: 0.0 }],
        };
        let ctx = StepContext {
            phase: Phase::ZERO,
            cmd_speed: 0.0,
            gait: GaitParams::new(1.25, 0.4).unwrap(),
        };
        for _ in 0..40 {
            if let Some(sample) = sim.policy_step(&out, ctx) {
                assert!(sample.grf[0].z >= 0.0);
                assert!(sample.grf[1].z >= 0.0);
            }
        }
    }

    #[test]
    fn policy_step_timestamps_are_exact_multiples() {
        let m = model();
        let mut sim = Simulator::new(m, BipedState::standing_start(&m, 0.0)).unwrap();
        let out = ControlOutput {
            legs: [LegCommand::Stance { thrust: 0.0 }, LegCommand::Stance { thrust: 0.0 }],
        };
        let ctx = StepContext {
            phase: Phase::ZERO,
            cmd_speed: 0.0,
            gait: GaitParams::new(1.25, 0.4).unwrap(),
        };
        for i in 1..=10 {
            let s = sim.policy_step(&out, ctx).unwrap();
            assert_eq!(s.time, i as f64 * m.policy_period);
        }
    }

    #[test]
    fn schedule_step_holds() {
        let sched = SpeedSchedule::Steps {
            steps: vec![
                ScheduleStep { at: 0.0, speed: 1.0 },
                ScheduleStep { at: 2.0, speed: 3.0 },
            ],
        };
        assert_eq!(sched.speed_at(0.0), 1.0);
        assert_eq!(sched.speed_at(1.99), 1.0);
        assert_eq!(sched.speed_at(2.0), 3.0);
        assert_eq!(sched.speed_at(10.0), 3.0);
    }

    struct BothStance;

    impl Controller for BothStance {
        fn clock_driven(&self) -> bool {
            true
        }

        fn control(
            &mut self,
            _state: &BipedState,
            _phase: Phase,
            _gait: &GaitParams,
            _cmd: f64,
        ) -> Result<ControlOutput> {
            Ok(ControlOutput {
                legs: [LegCommand::Stance { thrust: 0.0 }, LegCommand::Stance { thrust: 0.0 }],
            })
        }
    }

    #[test]
    fn zero_duration_rollout_is_empty() {
        let m = model();
        let gait = FixedGait(GaitParams::new(1.25, 0.4).unwrap());
        let sched = SpeedSchedule::constant(0.0);
        let log = rollout(&mut BothStance, &gait, &sched, 0.0, 1, &m).unwrap();
        assert!(log.samples.is_empty());
        assert!(!log.fell());
    }

    #[test]
    fn seeded_perturbation_is_reproducible() {
        let m = model();
        let mut a = BipedState::standing_start(&m, 0.0);
        let mut b = BipedState::standing_start(&m, 0.0);
        a.perturb(7);
        b.perturb(7);
        assert_eq!(a, b);
        let mut c = BipedState::standing_start(&m, 0.0);
        c.perturb(8);
        assert_ne!(a, c);
    }
}
