//! 40 Hz controllers: a clock-driven Raibert-style running controller and a
//! standing balance controller.
//!
//! The running controller tracks a forward speed command under externally
//! supplied gait parameters: stance legs get a spring-preload thrust that
//! regulates hop apex height (so realized timing tracks the clock), swing
//! legs follow a cycloidal trajectory to a Raibert touchdown target
//! `x_td = hip_x + x_dot*T_st/2 + k_v*(x_dot - cmd)`.
//!
//! The standing controller holds the COM over the midpoint of the planted
//! feet with a PD law distributed to the two axial leg forces. If exactly
//! one foot is airborne when control begins, that foot is driven once
//! toward a capture point offset `x_dot*sqrt(rest_length/g)`; the foot
//! descends while it travels, so a foot that starts low touches down short
//! of the target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{self, FootMode, GaitParams, Phase};
use crate::sim::{BipedState, ControlOutput, Controller, LegCommand, ModelParams, Vec2};

use std::f64::consts::TAU;

/// Commanded speed band the running controller accepts [m/s].
pub const CMD_SPEED_MIN: f64 = -0.2;
pub const CMD_SPEED_MAX: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    /// Raibert placement gain k_v [s].
    pub placement_gain: f64,
    /// Cap on the velocity-error correction term alone [m]; bounds the
    /// lunge when the command steps far from the current speed.
    pub max_correction: f64,
    /// Reach limit on the touchdown offset from the hip [m].
    pub max_placement_offset: f64,
    /// Swing foot clearance height [m].
    pub swing_clearance: f64,
    /// Hop-energy thrust gain [N/m of apex error].
    pub thrust_gain: f64,
    /// Thrust saturation [N].
    pub max_thrust: f64,
    /// Desired hop apex as a fraction of rest leg length (grounded gaits).
    pub apex_height_frac: f64,
    /// Forward drift added to near-zero commands [m/s]; models the running
    /// policy's bias toward slow forward motion at zero command.
    pub cmd_bias: f64,
    /// Command magnitude at which the drift bias has faded to zero [m/s].
    pub bias_fade_speed: f64,
    /// Descent rate of a foot awaiting touchdown [m/s].
    pub touchdown_speed: f64,
    /// Slew rate on the tracked command [m/s^2]. A step command is chased
    /// at this rate so stance work stays split between forward acceleration
    /// and vertical support instead of draining hop energy all at once.
    pub cmd_slew: f64,
    /// Standing COM PD gains (x: horizontal over support midpoint,
    /// z: height hold).
    pub stand_kp_x: f64,
    pub stand_kd_x: f64,
    pub stand_kp_z: f64,
    pub stand_kd_z: f64,
    /// Standing COM height as a fraction of rest leg length.
    pub stand_height_frac: f64,
    /// Horizontal speed of the standing capture placement foot [m/s].
    pub place_speed: f64,
    /// Force floor keeping planted standing feet loaded [N].
    pub min_stance_force: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            placement_gain: 0.20,
            max_correction: 0.22,
            max_placement_offset: 0.45,
            swing_clearance: 0.10,
            thrust_gain: 2000.0,
            max_thrust: 600.0,
            apex_height_frac: 0.95,
            cmd_bias: 0.12,
            bias_fade_speed: 0.5,
            touchdown_speed: 1.2,
            cmd_slew: 1.5,
            stand_kp_x: 8.0,
            stand_kd_x: 5.0,
            stand_kp_z: 60.0,
            stand_kd_z: 15.0,
            stand_height_frac: 0.96,
            place_speed: 3.0,
            min_stance_force: 10.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            (self.placement_gain, "placement_gain", false),
            (self.max_correction, "max_correction", true),
            (self.max_placement_offset, "max_placement_offset", true),
            (self.swing_clearance, "swing_clearance", true),
            (self.thrust_gain, "thrust_gain", false),
            (self.max_thrust, "max_thrust", false),
            (self.apex_height_frac, "apex_height_frac", true),
            (self.cmd_bias, "cmd_bias", false),
            (self.bias_fade_speed, "bias_fade_speed", true),
            (self.touchdown_speed, "touchdown_speed", true),
            (self.cmd_slew, "cmd_slew", true),
            (self.stand_kp_x, "stand_kp_x", false),
            (self.stand_kd_x, "stand_kd_x", false),
            (self.stand_kp_z, "stand_kp_z", false),
            (self.stand_kd_z, "stand_kd_z", false),
            (self.stand_height_frac, "stand_height_frac", true),
            (self.place_speed, "place_speed", true),
            (self.min_stance_force, "min_stance_force", false),
        ];
        for (v, name, strictly_positive) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidGains(format!("{name} must be finite, got {v}")));
            }
            if strictly_positive && v <= 0.0 {
                return Err(Error::InvalidGains(format!("{name} must be positive, got {v}")));
            }
            if !strictly_positive && v < 0.0 {
                return Err(Error::InvalidGains(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Speed command after the zero-command drift bias. The bias fades linearly
/// with |cmd| and vanishes at `bias_fade_speed`, so a small negative command
/// nearly cancels the drift while large commands are untouched.
pub fn effective_command(cmd: f64, gains: &ControllerGains) -> f64 {
    cmd + gains.cmd_bias * (1.0 - cmd.abs() / gains.bias_fade_speed).max(0.0)
}

/// Raibert touchdown target: neutral point (half the stance travel) plus a
/// velocity-error correction, reach-clamped about the hip.
pub fn raibert_target(
    hip_x: f64,
    vx: f64,
    cmd: f64,
    gait: &GaitParams,
    gains: &ControllerGains,
) -> f64 {
    let neutral = vx * gait.stance_time() / 2.0;
    let correction = (gains.placement_gain * (vx - cmd))
        .clamp(-gains.max_correction, gains.max_correction);
    let offset = (neutral + correction)
        .clamp(-gains.max_placement_offset, gains.max_placement_offset);
    hip_x + offset
}

/// Capture-point offset for the standing placement: `vx * sqrt(l0 / g)`.
pub fn capture_offset(vx: f64, model: &ModelParams) -> f64 {
    vx * (model.leg_rest_length / model.gravity).sqrt()
}

/// Height of the fully extended leg's foot above ground for a hip one
/// policy period ahead and a foot at `foot_x`. A descending foot held on
/// this surface meets the ground exactly when the leg reaches full
/// extension, which keeps touchdown geometry consistent at every speed.
fn extension_surface_z(state: &BipedState, foot_x: f64, model: &ModelParams) -> f64 {
    let dt = model.policy_period;
    let hip_x = state.com_pos.x + state.com_vel.x * dt;
    let hip_z = state.com_pos.z + state.com_vel.z * dt;
    let dx = foot_x - hip_x;
    let reach2 = model.leg_rest_length * model.leg_rest_length - dx * dx;
    if reach2 <= 0.0 {
        return 0.0;
    }
    (hip_z - reach2.sqrt()).max(0.0)
}

#[derive(Clone, Copy, Debug)]
struct SwingLatch {
    liftoff: Vec2,
    s0: f64,
}

/// Clock-driven running controller.
#[derive(Clone, Debug)]
pub struct RunningController {
    gains: ControllerGains,
    model: ModelParams,
    swing: [Option<SwingLatch>; 2],
    prev_vz: f64,
    last_apex: f64,
    /// Running estimate of COM height at touchdown; anchors the apex target
    /// so realized flight time tracks the clock's aerial window.
    touchdown_height: f64,
    prev_contact: [bool; 2],
    /// Slew-limited command the placement law actually tracks.
    tracked_cmd: Option<f64>,
}

impl RunningController {
    pub fn new(gains: ControllerGains, model: ModelParams) -> Result<Self> {
        gains.validate()?;
        model.validate()?;
        let h0 = gains.apex_height_frac * model.leg_rest_length;
        Ok(RunningController {
            gains,
            model,
            swing: [None, None],
            prev_vz: 0.0,
            last_apex: h0,
            touchdown_height: h0,
            prev_contact: [true, true],
            tracked_cmd: None,
        })
    }

    fn desired_apex(&self, gait: &GaitParams) -> f64 {
        // touchdown height plus the ballistic rise that makes the flight
        // last the commanded aerial time: g*t_a^2/8 for a symmetric arc
        let t_a = gait.aerial_phase_time();
        let base = self
            .touchdown_height
            .max(self.gains.apex_height_frac * self.model.leg_rest_length);
        base + self.model.gravity * t_a * t_a / 8.0
    }
}

impl Controller for RunningController {
    fn clock_driven(&self) -> bool {
        true
    }

    fn on_engage(&mut self, state: &BipedState) {
        self.swing = [None, None];
        self.prev_vz = state.com_vel.z;
        self.last_apex = state.com_pos.z;
        self.touchdown_height = state.com_pos.z;
        self.prev_contact = [state.feet[0].contact, state.feet[1].contact];
        self.tracked_cmd = None;
    }

    fn control(
        &mut self,
        state: &BipedState,
        phase: Phase,
        gait: &GaitParams,
        cmd: f64,
    ) -> Result<ControlOutput> {
        if !cmd.is_finite() || !(CMD_SPEED_MIN..=CMD_SPEED_MAX).contains(&cmd) {
            return Err(Error::SpeedOutOfBand(cmd, CMD_SPEED_MIN, CMD_SPEED_MAX));
        }
        // chase the requested command at the slew rate, starting from the
        // actual speed so a step input becomes a feasible ramp
        let prev = self
            .tracked_cmd
            .unwrap_or_else(|| state.com_vel.x.clamp(CMD_SPEED_MIN, CMD_SPEED_MAX));
        let step = self.gains.cmd_slew * self.model.policy_period;
        let tracked = prev + (cmd - prev).clamp(-step, step);
        self.tracked_cmd = Some(tracked);
        let cmd_eff = effective_command(tracked, &self.gains);

        // apex register: latch COM height when vertical velocity crosses
        // positive-to-nonpositive
        let vz = state.com_vel.z;
        if self.prev_vz > 0.0 && vz <= 0.0 {
            self.last_apex = state.com_pos.z;
        }
        self.prev_vz = vz;

        // touchdown-height estimate updates on fresh contacts
        for i in 0..2 {
            if state.feet[i].contact && !self.prev_contact[i] {
                self.touchdown_height =
                    0.7 * self.touchdown_height + 0.3 * state.com_pos.z;
            }
            self.prev_contact[i] = state.feet[i].contact;
        }

        // signed: positive pumps the hop, negative softens push-off to
        // bleed excess height (the servo still clamps total force >= 0)
        let apex_err = self.desired_apex(gait) - self.last_apex;
        let thrust_cmd =
            (self.gains.thrust_gain * apex_err).clamp(-self.gains.max_thrust, self.gains.max_thrust);

        let (left, right) = gait::foot_schedule(phase, gait.ratio)?;
        let modes = [left, right];
        let offsets = [gait::LEFT_FOOT_OFFSET, gait::RIGHT_FOOT_OFFSET];
        let mut legs = [LegCommand::Stance { thrust: 0.0 }; 2];

        for i in 0..2 {
            let foot = state.feet[i];
            legs[i] = match modes[i] {
                FootMode::Stance => {
                    self.swing[i] = None;
                    if foot.contact {
                        // inject energy only while the leg extends, so the
                        // thrust does net positive work per hop
                        let leg = state.com_pos - foot.pos;
                        let len = leg.norm();
                        let extending =
                            len > 1e-9 && leg.scale(1.0 / len).dot(state.com_vel) > 0.0;
                        LegCommand::Stance {
                            thrust: if extending { thrust_cmd } else { 0.0 },
                        }
                    } else {
                        // stance commanded but still airborne: hold x and ride
                        // the full-extension surface down so the leg meets the
                        // ground at rest length rather than retracted
                        let z_ext = extension_surface_z(state, foot.pos.x, &self.model);
                        let sink = self.gains.touchdown_speed.max(-1.5 * state.com_vel.z);
                        let floor = foot.pos.z - sink * self.model.policy_period;
                        LegCommand::SwingTo {
                            target: Vec2::new(foot.pos.x, z_ext.max(floor).max(0.0)),
                            allow_touchdown: true,
                        }
                    }
                }
                // stumble guard: never release the only loaded support while
                // the COM is descending; the clock reclaims the foot once the
                // hop re-energizes or the other leg lands
                FootMode::Swing
                    if foot.contact
                        && !state.feet[(i + 1) % 2].contact
                        && state.com_vel.z < 0.0 =>
                {
                    self.swing[i] = None;
                    let leg = state.com_pos - foot.pos;
                    let len = leg.norm();
                    let extending = len > 1e-9 && leg.scale(1.0 / len).dot(state.com_vel) > 0.0;
                    LegCommand::Stance {
                        thrust: if extending { thrust_cmd } else { 0.0 },
                    }
                }
                FootMode::Swing => {
                    let s = gait::swing_progress(phase, gait.ratio, offsets[i]).unwrap_or(0.0);
                    let latch = self.swing[i].get_or_insert(SwingLatch {
                        liftoff: foot.pos,
                        s0: s,
                    });
                    let x_td =
                        raibert_target(state.com_pos.x, state.com_vel.x, cmd_eff, gait, &self.gains);
                    // progress within this swing, 0 at latch, 1 at touchdown
                    let span = (1.0 - latch.s0).max(1e-6);
                    let tau = ((s - latch.s0) / span).clamp(0.0, 1.0);
                    let ds = self.model.policy_period * gait.freq / gait.ratio;
                    let tau_next = ((s + ds - latch.s0) / span).clamp(0.0, 1.0);
                    // cycloid: smooth horizontal blend, cosine clearance arc
                    let sigma = tau_next - (TAU * tau_next).sin() / TAU;
                    let x = latch.liftoff.x + (x_td - latch.liftoff.x) * sigma;
                    let z_arc = latch.liftoff.z * (1.0 - tau_next)
                        + self.gains.swing_clearance * (1.0 - (TAU * tau_next).cos()) / 2.0;
                    // late swing extends the leg onto the full-extension
                    // surface so touchdown happens at rest length
                    let z_ext = extension_surface_z(state, x, &self.model);
                    // emergency catch: hip descending, ground already in
                    // reach, foot far enough forward to take load. Flying
                    // out the arc on the clock would ground the foot under
                    // a hip that has fallen further, so commit now.
                    let catch = tau >= 0.5
                        && state.com_vel.z < 0.0
                        && z_ext <= 0.0
                        && foot.pos.x >= state.com_pos.x - 0.05;
                    let w = if catch {
                        1.0
                    } else {
                        ((tau_next - 0.55) / 0.35).clamp(0.0, 1.0)
                    };
                    let z = (1.0 - w) * z_arc + w * z_ext;
                    LegCommand::SwingTo {
                        target: Vec2::new(x, z),
                        allow_touchdown: tau >= 0.75 || catch,
                    }
                }
            };
        }
        Ok(ControlOutput { legs })
    }
}

/// Net COM force demanded by the standing PD law, gravity included.
fn standing_force_demand(
    state: &BipedState,
    support_mid_x: f64,
    gains: &ControllerGains,
    model: &ModelParams,
) -> Vec2 {
    let z_des = gains.stand_height_frac * model.leg_rest_length;
    let fx = model.mass
        * (gains.stand_kp_x * (support_mid_x - state.com_pos.x)
            - gains.stand_kd_x * state.com_vel.x);
    let fz = model.mass
        * (gains.stand_kp_z * (z_des - state.com_pos.z) - gains.stand_kd_z * state.com_vel.z)
        + model.body_weight();
    Vec2::new(fx, fz)
}

/// Split a demanded COM force between two planted legs along their axes.
///
/// The exact 2x2 solve amplifies the vertical demand by 1/det, so legs
/// within ~10 cm of parallel (det below 0.12) fall back to a pure
/// vertical split: support is preserved and the horizontal component is
/// simply not actuated, rather than being bought with huge canceling
/// axial forces that the clamps then turn into a net launch.
pub fn split_support_forces(com_pos: Vec2, feet: [Vec2; 2], demand: Vec2) -> [f64; 2] {
    let u: Vec<Vec2> = feet
        .iter()
        .map(|f| {
            let leg = com_pos - *f;
            let n = leg.norm().max(1e-9);
            leg.scale(1.0 / n)
        })
        .collect();
    let det = u[0].x * u[1].z - u[1].x * u[0].z;
    if det.abs() < 0.12 {
        let denom = (u[0].z + u[1].z).max(1e-6);
        let f = demand.z / denom;
        return [f, f];
    }
    let f0 = (demand.x * u[1].z - demand.z * u[1].x) / det;
    let f1 = (u[0].x * demand.z - demand.x * u[0].z) / det;
    [f0, f1]
}

/// Standing balance controller. The gait clock is frozen while it runs.
#[derive(Clone, Debug)]
pub struct StandingController {
    gains: ControllerGains,
    model: ModelParams,
    /// Latched capture target x for the one foot airborne at engage.
    placement: [Option<f64>; 2],
}

impl StandingController {
    pub fn new(gains: ControllerGains, model: ModelParams) -> Result<Self> {
        gains.validate()?;
        model.validate()?;
        Ok(StandingController {
            gains,
            model,
            placement: [None, None],
        })
    }

    fn stance_force(&self, state: &BipedState, planted: &[usize]) -> [f64; 2] {
        let mid_x = planted.iter().map(|&i| state.feet[i].pos.x).sum::<f64>()
            / planted.len().max(1) as f64;
        let demand = standing_force_demand(state, mid_x, &self.gains, &self.model);
        let mut forces = [0.0; 2];
        match planted {
            [a, b] => {
                let split = split_support_forces(
                    state.com_pos,
                    [state.feet[*a].pos, state.feet[*b].pos],
                    demand,
                );
                forces[*a] = split[0];
                forces[*b] = split[1];
            }
            [a] => {
                let leg = state.com_pos - state.feet[*a].pos;
                let n = leg.norm().max(1e-9);
                forces[*a] = leg.scale(1.0 / n).dot(demand);
            }
            _ => {}
        }
        for f in &mut forces {
            *f = f.clamp(self.gains.min_stance_force, self.model.max_leg_force);
        }
        forces
    }
}

impl Controller for StandingController {
    fn clock_driven(&self) -> bool {
        false
    }

    fn on_engage(&mut self, state: &BipedState) {
        self.placement = [None, None];
        let airborne: Vec<usize> = (0..2).filter(|&i| !state.feet[i].contact).collect();
        if let [leg] = airborne[..] {
            // straddle the predicted stop point: the stance midpoint (where
            // the COM PD settles) lands on it, and the stance stays wide
            // enough that the two-leg force split keeps horizontal authority
            let support = state.feet[1 - leg].pos.x;
            let stop_x = state.com_pos.x + capture_offset(state.com_vel.x, &self.model);
            let sep = 2.0 * (stop_x - support);
            let min_sep = 0.16;
            let dir = if sep.abs() >= min_sep {
                sep.signum()
            } else {
                // stop point too close to the support foot to pick the side:
                // plant on the COM's side, which the leg can reach at once
                let side = state.com_pos.x - support;
                if side != 0.0 {
                    side.signum()
                } else {
                    1.0
                }
            };
            self.placement[leg] = Some(support + dir * sep.abs().max(min_sep));
        }
    }

    fn control(
        &mut self,
        state: &BipedState,
        _phase: Phase,
        _gait: &GaitParams,
        _cmd: f64,
    ) -> Result<ControlOutput> {
        let planted: Vec<usize> = (0..2).filter(|&i| state.feet[i].contact).collect();
        let desired = self.stance_force(state, &planted);

        let mut legs = [LegCommand::Stance { thrust: 0.0 }; 2];
        for i in 0..2 {
            let foot = state.feet[i];
            if foot.contact {
                self.placement[i] = None;
                // feedforward so the realized axial force equals desired:
                // subtract what the servo spring-damper already provides
                // about its current set-length
                let leg = state.com_pos - foot.pos;
                let len = leg.norm().max(1e-9);
                let axis = leg.scale(1.0 / len);
                let spring = self.model.leg_stiffness * (foot.set_len - len)
                    - self.model.leg_damping * axis.dot(state.com_vel);
                legs[i] = LegCommand::Stance {
                    thrust: desired[i] - spring,
                };
            } else {
                // travel toward the latched straddle target (if any), holding
                // a hair of clearance en route so touchdown happens at the
                // target rather than wherever the ground first interrupts
                let dt = self.model.policy_period;
                let (x, arrived) = match self.placement[i] {
                    Some(tx) => {
                        let step = self.gains.place_speed * dt;
                        let nx = foot.pos.x + (tx - foot.pos.x).clamp(-step, step);
                        (nx, (tx - nx).abs() < 1e-9)
                    }
                    None => (foot.pos.x, true),
                };
                let z_ext = extension_surface_z(state, x, &self.model);
                let sink = self.gains.touchdown_speed.max(-1.5 * state.com_vel.z);
                let z = (foot.pos.z - sink * dt).max(z_ext).max(0.0);
                legs[i] = LegCommand::SwingTo {
                    target: Vec2::new(x, if arrived { z } else { z.max(0.02) }),
                    allow_touchdown: arrived,
                };
            }
        }
        Ok(ControlOutput { legs })
    }
}
