//! Running-mechanics analysis of trajectory logs: contact segmentation,
//! per-stride metrics (stride length and frequency, swing/contact/aerial
//! times, effective GRF and effective impulse), and speed-swept averages.

use serde::{Deserialize, Serialize};

use crate::control::{ControllerGains, RunningController};
use crate::error::{Error, Result};
use crate::gait::GaitParams;
use crate::io::fmt_float;
use crate::optimize::{settle_steps, SCORED_STEPS};
use crate::sim::{rollout, FixedGait, ModelParams, SpeedSchedule, TrajectoryLog};

/// Contact threshold as a fraction of body weight: robust to numerical
/// dust, far below any real stance load.
pub const GRF_THRESHOLD_FRAC: f64 = 0.01;

/// Default segmentation threshold [N] for a model.
pub fn default_grf_threshold(model: &ModelParams) -> f64 {
    GRF_THRESHOLD_FRAC * model.body_weight()
}

/// Body weight wrapper for the effective-GRF normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyConstants {
    f_weight: f64,
}

impl BodyConstants {
    pub fn new(f_weight: f64) -> Result<Self> {
        if !f_weight.is_finite() || f_weight <= 0.0 {
            return Err(Error::InvalidBodyWeight(f_weight));
        }
        Ok(BodyConstants { f_weight })
    }

    pub fn from_model(model: &ModelParams) -> Result<Self> {
        BodyConstants::new(model.body_weight())
    }

    pub fn f_weight(&self) -> f64 {
        self.f_weight
    }
}

/// Mean vertical GRF expressed in body weights above hover:
/// (GRF - F_weight) / F_weight. Zero means the contact exactly supports
/// the body; -1 is free flight.
pub fn grf_effective(mean_grf: f64, constants: &BodyConstants) -> f64 {
    (mean_grf - constants.f_weight) / constants.f_weight
}

/// One maximal loaded interval of a single foot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub foot: usize,
    pub touchdown: f64,
    pub liftoff: f64,
    pub mean_grf: f64,
}

impl ContactEvent {
    pub fn duration(&self) -> f64 {
        self.liftoff - self.touchdown
    }
}

/// Per-foot maximal intervals where vertical GRF exceeds `grf_threshold`.
/// Events shorter than two policy steps are discarded as chatter. The
/// liftoff timestamp is one policy period past the last loaded sample.
pub fn segment_contacts(log: &TrajectoryLog, grf_threshold: f64) -> Vec<ContactEvent> {
    let dt = log.meta.model.policy_period;
    let mut events = Vec::new();
    for foot in 0..2 {
        let mut run_start: Option<usize> = None;
        for i in 0..=log.samples.len() {
            let loaded = i < log.samples.len() && log.samples[i].grf[foot].z > grf_threshold;
            match (run_start, loaded) {
                (None, true) => run_start = Some(i),
                (Some(a), false) => {
                    run_start = None;
                    let len = i - a;
                    if len >= 2 {
                        let mean_grf = log.samples[a..i]
                            .iter()
                            .map(|s| s.grf[foot].z)
                            .sum::<f64>()
                            / len as f64;
                        events.push(ContactEvent {
                            foot,
                            touchdown: log.samples[a].time,
                            liftoff: log.samples[i - 1].time + dt,
                            mean_grf,
                        });
                    }
                }
                _ => {}
            }
        }
    }
    events.sort_by(|a, b| {
        a.touchdown
            .partial_cmp(&b.touchdown)
            .expect("times are finite")
            .then(a.foot.cmp(&b.foot))
    });
    events
}

/// Stride-level mechanics for one same-foot touchdown-to-touchdown cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanicsRecord {
    pub foot: usize,
    pub touchdown: f64,
    /// Mean COM forward speed over the stride [m/s].
    pub speed: f64,
    pub stride_length: f64,
    pub stride_freq: f64,
    pub swing_time: f64,
    pub contact_time: f64,
    /// Mean duration of the aerial phases inside the stride [s]; 0 when the
    /// gait keeps at least one foot loaded throughout (walking).
    pub aerial_time: f64,
    /// Stance-average vertical GRF in body weights above hover.
    pub grf_eff: f64,
    /// grf_eff x contact_time [body-weight seconds], by construction.
    pub effective_impulse: f64,
}

impl MechanicsRecord {
    pub fn is_walking(&self) -> bool {
        self.aerial_time <= 0.0
    }
}

fn sample_index(time: f64, dt: f64) -> usize {
    ((time / dt).round() as usize).saturating_sub(1)
}

/// Per-stride records for both feet, chronological by touchdown. A stride
/// spans one same-foot touchdown to the next; feet with fewer than two
/// touchdowns contribute nothing.
pub fn stride_metrics(events: &[ContactEvent], log: &TrajectoryLog) -> Result<Vec<MechanicsRecord>> {
    let constants = BodyConstants::from_model(&log.meta.model)?;
    let dt = log.meta.model.policy_period;
    let mut records = Vec::new();

    for foot in 0..2 {
        let own: Vec<&ContactEvent> = events.iter().filter(|e| e.foot == foot).collect();
        for pair in own.windows(2) {
            let (start, next) = (pair[0], pair[1]);
            let period = next.touchdown - start.touchdown;
            if period <= 0.0 {
                continue;
            }
            let a = sample_index(start.touchdown, dt);
            let b = sample_index(next.touchdown, dt);
            let window = &log.samples[a..b];
            if window.is_empty() {
                continue;
            }

            let stride_length =
                log.samples[b].com_pos.x - log.samples[a].com_pos.x;
            let speed = window.iter().map(|s| s.com_vel.x).sum::<f64>() / window.len() as f64;
            let contact_time = start.duration();

            // aerial phases: gaps left between the (chatter-filtered)
            // contact intervals of either foot inside the stride, reported
            // as the mean gap duration; zero when contacts tile the stride
            let mut covered: Vec<(f64, f64)> = events
                .iter()
                .filter(|e| e.liftoff > start.touchdown && e.touchdown < next.touchdown)
                .map(|e| {
                    (
                        e.touchdown.max(start.touchdown),
                        e.liftoff.min(next.touchdown),
                    )
                })
                .collect();
            covered.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut aerial_gaps: Vec<f64> = Vec::new();
            let mut frontier = start.touchdown;
            for (s, e) in covered {
                if s - frontier > 1e-9 {
                    aerial_gaps.push(s - frontier);
                }
                frontier = frontier.max(e);
            }
            if next.touchdown - frontier > 1e-9 {
                aerial_gaps.push(next.touchdown - frontier);
            }
            let aerial_time = if aerial_gaps.is_empty() {
                0.0
            } else {
                aerial_gaps.iter().sum::<f64>() / aerial_gaps.len() as f64
            };

            let grf_eff = grf_effective(start.mean_grf, &constants);
            records.push(MechanicsRecord {
                foot,
                touchdown: start.touchdown,
                speed,
                stride_length,
                stride_freq: 1.0 / period,
                swing_time: period - contact_time,
                contact_time,
                aerial_time,
                grf_eff,
                effective_impulse: grf_eff * contact_time,
            });
        }
    }

    records.sort_by(|a, b| {
        a.touchdown
            .partial_cmp(&b.touchdown)
            .expect("times are finite")
            .then(a.foot.cmp(&b.foot))
    });
    Ok(records)
}

/// One averaged row of the speed-swept mechanics table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanicsRow {
    pub speed: f64,
    pub stride_length: f64,
    pub stride_freq: f64,
    pub swing_time: f64,
    pub contact_time: f64,
    pub aerial_time: f64,
    pub grf_eff: f64,
    pub effective_impulse: f64,
    pub walking: bool,
    /// Parameter sets at this speed whose rollout fell (excluded from the
    /// averages).
    pub excluded_falls: usize,
}

/// Averaged mechanics table plus its CSV form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanicsTable {
    pub rows: Vec<MechanicsRow>,
}

pub const MECHANICS_CSV_HEADER: &str =
    "speed,stride_len,stride_freq,swing_t,contact_t,aerial_t,grf_eff,impulse_eff,walking_flag";

impl MechanicsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(MECHANICS_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let fields = [
                r.speed,
                r.stride_length,
                r.stride_freq,
                r.swing_time,
                r.contact_time,
                r.aerial_time,
                r.grf_eff,
                r.effective_impulse,
                if r.walking { 1.0 } else { 0.0 },
            ];
            let line: Vec<String> = fields.iter().map(|&v| fmt_float(v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Average the per-stride records of several parameter sets at each speed.
/// Each set is rolled out with the evaluation protocol (settle + scored
/// steps); only strides touching down inside the scored window count.
/// Fallen rollouts are excluded and tallied per row.
pub fn mechanics_sweep(
    param_sets: &[(f64, Vec<GaitParams>)],
    model: &ModelParams,
    gains: &ControllerGains,
    seed: u64,
) -> Result<MechanicsTable> {
    let mut rows = Vec::with_capacity(param_sets.len());
    let threshold = default_grf_threshold(model);

    for (speed, sets) in param_sets {
        let settle = settle_steps(*speed)?;
        let duration = (settle + SCORED_STEPS) as f64 * model.policy_period;
        let window_start = settle as f64 * model.policy_period;

        let mut pooled: Vec<MechanicsRecord> = Vec::new();
        let mut excluded = 0usize;
        for &params in sets {
            let mut controller = RunningController::new(gains.clone(), *model)?;
            let log = rollout(
                &mut controller,
                &FixedGait(params),
                &SpeedSchedule::constant(*speed),
                duration,
                seed,
                model,
            )?;
            if log.fell() {
                excluded += 1;
                continue;
            }
            let events = segment_contacts(&log, threshold);
            pooled.extend(
                stride_metrics(&events, &log)?
                    .into_iter()
                    .filter(|r| r.touchdown >= window_start),
            );
        }

        let n = pooled.len() as f64;
        let mean = |f: fn(&MechanicsRecord) -> f64| -> f64 {
            if pooled.is_empty() {
                0.0
            } else {
                pooled.iter().map(f).sum::<f64>() / n
            }
        };
        let aerial_time = mean(|r| r.aerial_time);
        rows.push(MechanicsRow {
            speed: *speed,
            stride_length: mean(|r| r.stride_length),
            stride_freq: mean(|r| r.stride_freq),
            swing_time: mean(|r| r.swing_time),
            contact_time: mean(|r| r.contact_time),
            aerial_time,
            grf_eff: mean(|r| r.grf_eff),
            effective_impulse: mean(|r| r.effective_impulse),
            walking: aerial_time <= 0.0,
            excluded_falls: excluded,
        });
    }

    Ok(MechanicsTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{LogMeta, SampleRecord, Vec2};
    use approx::assert_relative_eq;

    fn model() -> ModelParams {
        ModelParams::default()
    }

    fn gains() -> ControllerGains {
        ControllerGains::default()
    }

    fn constants() -> BodyConstants {
        BodyConstants::from_model(&model()).unwrap()
    }

    /// Synthetic log with per-foot vertical GRFs given by `grf(step, foot)`
    /// and the COM translating at `vx`.
    fn synthetic_log(steps: usize, vx: f64, grf: impl Fn(usize, usize) -> f64) -> TrajectoryLog {
        let m = model();
        let dt = m.policy_period;
        let samples = (0..steps)
            .map(|i| {
                let t = (i + 1) as f64 * dt;
                SampleRecord {
                    time: t,
                    phase: crate::gait::Phase::new(0.0).unwrap(),
                    com_pos: Vec2::new(vx * t, 0.85),
                    com_vel: Vec2::new(vx, 0.0),
                    foot_pos: [Vec2::ZERO, Vec2::ZERO],
                    grf: [
                        Vec2::new(0.0, grf(i, 0)),
                        Vec2::new(0.0, grf(i, 1)),
                    ],
                    actuator_force: [0.0, 0.0],
                    leg_rate: [0.0, 0.0],
                    swing_rate: [0.0, 0.0],
                    cmd_speed: vx,
                    gait: GaitParams::new(1.5, 0.5).unwrap(),
                }
            })
            .collect();
        TrajectoryLog {
            samples,
            meta: LogMeta {
                seed: 0,
                model: m,
                schedule: SpeedSchedule::constant(vx),
                fell: false,
                fall_time: None,
            },
        }
    }

    fn steady_log_with(cmd: f64, g: GaitParams) -> TrajectoryLog {
        let m = model();
        let mut c = RunningController::new(gains(), m).unwrap();
        let steps = settle_steps(cmd).unwrap() + SCORED_STEPS;
        rollout(
            &mut c,
            &FixedGait(g),
            &SpeedSchedule::constant(cmd),
            steps as f64 * m.policy_period,
            5,
            &m,
        )
        .unwrap()
    }

    fn window_records(
        cmd: f64,
        g: GaitParams,
    ) -> (TrajectoryLog, Vec<ContactEvent>, Vec<MechanicsRecord>) {
        let log = steady_log_with(cmd, g);
        assert!(!log.fell(), "steady rollout at cmd {cmd} fell");
        let thr = default_grf_threshold(&model());
        let events = segment_contacts(&log, thr);
        let start = settle_steps(cmd).unwrap() as f64 * model().policy_period;
        let records: Vec<MechanicsRecord> = stride_metrics(&events, &log)
            .unwrap()
            .into_iter()
            .filter(|r| r.touchdown >= start)
            .collect();
        assert!(records.len() >= 4, "too few strides at cmd {cmd}");
        (log, events, records)
    }

    /// Ramped defaults: the grid-search center at each commanded speed.
    fn steady_window(cmd: f64) -> (TrajectoryLog, Vec<ContactEvent>, Vec<MechanicsRecord>) {
        let g = GaitParams::new(1.25 + 0.125 * cmd, 0.4 + 0.08 * cmd).unwrap();
        window_records(cmd, g)
    }

    /// Gaits near the tuned speed-to-parameter curve: clean flight phases.
    fn running_window(cmd: f64) -> (TrajectoryLog, Vec<ContactEvent>, Vec<MechanicsRecord>) {
        let (freq, ratio) = match cmd as i64 {
            2 => (2.005, 0.480),
            3 => (2.031, 0.553),
            4 => (2.068, 0.630),
            _ => panic!("no tuned gait pinned for cmd {cmd}"),
        };
        window_records(cmd, GaitParams::new(freq, ratio).unwrap())
    }

    #[test]
    fn effective_grf_hover_double_and_flight() {
        let c = constants();
        assert_eq!(grf_effective(c.f_weight(), &c), 0.0);
        assert_eq!(grf_effective(2.0 * c.f_weight(), &c), 1.0);
        assert_eq!(grf_effective(0.0, &c), -1.0);
    }

    #[test]
    fn effective_grf_is_linear_in_body_weights() {
        let c = constants();
        for k in 0..=20 {
            let a = 0.25 * k as f64;
            assert_relative_eq!(grf_effective(a * c.f_weight(), &c), a - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn body_constants_reject_nonpositive_weight() {
        assert!(BodyConstants::new(0.0).is_err());
        assert!(BodyConstants::new(-5.0).is_err());
        assert!(BodyConstants::new(f64::NAN).is_err());
    }

    #[test]
    fn flight_log_has_no_contacts() {
        let log = synthetic_log(100, 1.0, |_, _| 0.0);
        assert!(segment_contacts(&log, 3.0).is_empty());
    }

    #[test]
    fn square_wave_contacts_recover_duration() {
        // 0.2 s on / 0.3 s off at 40 Hz: 8 loaded samples, 12 unloaded
        let log = synthetic_log(200, 1.0, |i, foot| {
            if foot == 0 && i % 20 < 8 {
                400.0
            } else {
                0.0
            }
        });
        let events = segment_contacts(&log, 3.0);
        assert!(events.len() >= 9);
        let dt = model().policy_period;
        for e in &events {
            assert_eq!(e.foot, 0);
            assert!((e.duration() - 0.2).abs() <= dt + 1e-12);
            assert_relative_eq!(e.mean_grf, 400.0);
        }
    }

    #[test]
    fn single_sample_blips_are_chatter() {
        let log = synthetic_log(100, 1.0, |i, foot| {
            if foot == 1 && i % 10 == 0 {
                500.0
            } else {
                0.0
            }
        });
        assert!(segment_contacts(&log, 3.0).is_empty());
    }

    #[test]
    fn synthetic_alternating_gait_satisfies_identities() {
        // period 0.5 s (20 samples): L loaded steps 0..8, R loaded 10..18,
        // aerial gaps 8..10 and 18..20 (0.05 s each)
        let w = model().body_weight();
        let amp = w * 1.25;
        let log = synthetic_log(400, 2.0, move |i, foot| {
            let k = i % 20;
            if foot == 0 && k < 8 {
                amp
            } else if foot == 1 && (10..18).contains(&k) {
                amp
            } else {
                0.0
            }
        });
        let thr = default_grf_threshold(&model());
        let events = segment_contacts(&log, thr);
        let records = stride_metrics(&events, &log).unwrap();
        assert!(records.len() > 10);
        let dt = model().policy_period;
        for r in &records {
            assert_relative_eq!(r.stride_freq, 2.0, max_relative = 1e-9);
            assert_relative_eq!(r.contact_time, 0.2, epsilon = 1e-12);
            assert_relative_eq!(r.swing_time, 0.3, epsilon = 1e-12);
            // swing = contact + 2 x aerial within two policy periods
            assert!((r.swing_time - r.contact_time - 2.0 * r.aerial_time).abs() <= 2.0 * dt);
            // impulse balance: grf_eff = T/(2 t_c) - 1 for this loading
            assert_relative_eq!(r.grf_eff, 0.5 / 0.4 - 1.0, max_relative = 1e-9);
            assert_relative_eq!(r.effective_impulse, r.grf_eff * r.contact_time);
            // stride length consistent with mean speed and period
            assert_relative_eq!(r.stride_length, r.speed / r.stride_freq, max_relative = 0.02);
        }
    }

    #[test]
    fn steady_rollout_alternates_feet_without_long_gaps() {
        let (_, events, _) = steady_window(3.0);
        let start = settle_steps(3.0).unwrap() as f64 * model().policy_period;
        let steady: Vec<&ContactEvent> =
            events.iter().filter(|e| e.touchdown >= start).collect();
        assert!(steady.len() >= 8);
        let stride = 1.0 / (1.25 + 0.125 * 3.0);
        for pair in steady.windows(2) {
            assert_ne!(pair[0].foot, pair[1].foot, "feet must alternate");
            assert!(pair[1].touchdown - pair[0].touchdown < stride);
        }
    }

    #[test]
    fn steady_rollout_balances_vertical_impulse() {
        // exact per-stride balance: net vertical impulse equals the momentum
        // change over the same samples, and gravity dominates on average
        for cmd in [2.0, 3.0, 4.0] {
            let (log, _, records) = steady_window(cmd);
            let m = model();
            let dt = m.policy_period;
            let w = m.body_weight();
            let mut ratios = Vec::new();
            for r in &records {
                let a = sample_index(r.touchdown, dt);
                let b = sample_index(r.touchdown + 1.0 / r.stride_freq, dt);
                let span = (b - a) as f64 * dt;
                let impulse: f64 = log.samples[a + 1..=b]
                    .iter()
                    .map(|s| (s.grf[0].z + s.grf[1].z) * dt)
                    .sum();
                let dvz = log.samples[b].com_vel.z - log.samples[a].com_vel.z;
                assert!(
                    (impulse - w * span - m.mass * dvz).abs() <= 1e-9 * w * span,
                    "momentum residual at cmd {cmd}: impulse {impulse}, span {span}"
                );
                ratios.push(impulse / (w * span));
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            assert!(
                (mean - 1.0).abs() <= 0.02,
                "mean impulse ratio at cmd {cmd}: {mean}"
            );
        }
    }

    #[test]
    fn steady_rollout_swing_decomposition() {
        let dt = model().policy_period;
        for cmd in [2.0, 3.0, 4.0] {
            let (_, _, records) = running_window(cmd);
            for r in &records {
                let gap = r.swing_time - r.contact_time - 2.0 * r.aerial_time;
                assert!(
                    gap.abs() <= 2.0 * dt + 1e-12,
                    "decomposition gap {gap} at cmd {cmd}: swing {} contact {} aerial {}",
                    r.swing_time,
                    r.contact_time,
                    r.aerial_time
                );
            }
        }
    }

    #[test]
    fn stride_length_matches_speed_over_period() {
        let (_, _, records) = steady_window(3.0);
        for r in &records {
            assert_relative_eq!(
                r.stride_freq * r.stride_length,
                r.speed,
                max_relative = 0.02
            );
        }
    }

    #[test]
    fn degenerate_sweep_equals_direct_average() {
        let speed = 2.5;
        let params = GaitParams::new(1.5625, 0.6).unwrap();
        let table = mechanics_sweep(
            &[(speed, vec![params])],
            &model(),
            &gains(),
            5,
        )
        .unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = table.rows[0];
        assert_eq!(row.excluded_falls, 0);

        let m = model();
        let mut c = RunningController::new(gains(), m).unwrap();
        let steps = settle_steps(speed).unwrap() + SCORED_STEPS;
        let log = rollout(
            &mut c,
            &FixedGait(params),
            &SpeedSchedule::constant(speed),
            steps as f64 * m.policy_period,
            5,
            &m,
        )
        .unwrap();
        let thr = default_grf_threshold(&m);
        let events = segment_contacts(&log, thr);
        let start = settle_steps(speed).unwrap() as f64 * m.policy_period;
        let records: Vec<MechanicsRecord> = stride_metrics(&events, &log)
            .unwrap()
            .into_iter()
            .filter(|r| r.touchdown >= start)
            .collect();
        let mean_len =
            records.iter().map(|r| r.stride_length).sum::<f64>() / records.len() as f64;
        assert_relative_eq!(row.stride_length, mean_len, epsilon = 1e-12);
    }

    #[test]
    fn overlapping_contacts_report_walking() {
        // double support, never airborne: L loaded 0..12, R loaded 10..20 of
        // each 20-sample cycle, so some foot is always on the ground
        let w = model().body_weight();
        let log = synthetic_log(400, 1.0, move |i, foot| {
            let k = i % 20;
            if (foot == 0 && k < 12) || (foot == 1 && (10..20).contains(&k)) {
                w * 0.8
            } else {
                0.0
            }
        });
        let thr = default_grf_threshold(&model());
        let events = segment_contacts(&log, thr);
        let records = stride_metrics(&events, &log).unwrap();
        assert!(records.len() > 10);
        for r in &records {
            assert_eq!(r.aerial_time, 0.0);
            assert!(r.is_walking());
            let expect_tc = if r.foot == 0 { 0.3 } else { 0.25 };
            assert_relative_eq!(r.contact_time, expect_tc, epsilon = 1e-12);
            assert_relative_eq!(r.swing_time, 0.5 - expect_tc, epsilon = 1e-12);
        }
    }

    #[test]
    fn mechanics_csv_schema() {
        let table = MechanicsTable {
            rows: vec![MechanicsRow {
                speed: 2.0,
                stride_length: 1.2,
                stride_freq: 1.6,
                swing_time: 0.3,
                contact_time: 0.2,
                aerial_time: 0.05,
                grf_eff: 0.4,
                effective_impulse: 0.08,
                walking: false,
                excluded_falls: 0,
            }],
        };
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), MECHANICS_CSV_HEADER);
        assert_eq!(lines.next().unwrap().split(',').count(), 9);
    }
}
