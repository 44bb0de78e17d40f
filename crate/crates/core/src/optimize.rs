//! Gait-parameter grid search: rollout scoring with four normalized costs,
//! per-speed top-k selection, and the degree-3 polynomial regression that
//! turns the winners into a speed-to-parameter map.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControllerGains, RunningController};
use crate::error::{Error, Result};
use crate::gait::GaitParams;
use crate::io::fmt_float;
use crate::sim::{rollout, FixedGait, ModelParams, SpeedSchedule, SpeedToGait, TrajectoryLog};

/// Policy steps scored at the end of every evaluation rollout.
pub const SCORED_STEPS: usize = 100;
/// Winners kept per speed.
pub const DEFAULT_TOP_K: usize = 5;

/// One breakpoint of the hand-tuned speed-to-gait mapping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub speed: f64,
    pub freq: f64,
    pub ratio: f64,
}

/// Piecewise-linear speed-to-(freq, ratio) mapping used as the center of
/// the sweep grid. The default ramps freq 1.25 -> 1.875 Hz and ratio
/// 0.4 -> 0.8 linearly over 0 -> 5 m/s; outputs clamp at the end knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineMap {
    knots: Vec<Knot>,
}

impl Default for BaselineMap {
    fn default() -> Self {
        BaselineMap {
            knots: vec![
                Knot {
                    speed: 0.0,
                    freq: 1.25,
                    ratio: 0.4,
                },
                Knot {
                    speed: 5.0,
                    freq: 1.875,
                    ratio: 0.8,
                },
            ],
        }
    }
}

impl BaselineMap {
    pub fn new(knots: Vec<Knot>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidSweep("baseline map needs >= 1 knot".into()));
        }
        for k in &knots {
            if !(k.speed.is_finite() && k.freq.is_finite() && k.ratio.is_finite()) {
                return Err(Error::InvalidSweep("baseline knot is non-finite".into()));
            }
            GaitParams::new(k.freq, k.ratio)?;
        }
        if knots.windows(2).any(|w| w[1].speed <= w[0].speed) {
            return Err(Error::InvalidSweep(
                "baseline knots must have strictly increasing speeds".into(),
            ));
        }
        Ok(BaselineMap { knots })
    }

    pub fn eval(&self, speed: f64) -> GaitParams {
        let first = self.knots.first().expect("validated non-empty");
        let last = self.knots.last().expect("validated non-empty");
        if speed <= first.speed {
            return GaitParams::new(first.freq, first.ratio).expect("validated knot");
        }
        if speed >= last.speed {
            return GaitParams::new(last.freq, last.ratio).expect("validated knot");
        }
        let seg = self
            .knots
            .windows(2)
            .find(|w| speed <= w[1].speed)
            .expect("speed is interior");
        let t = (speed - seg[0].speed) / (seg[1].speed - seg[0].speed);
        let freq = seg[0].freq + t * (seg[1].freq - seg[0].freq);
        let ratio = seg[0].ratio + t * (seg[1].ratio - seg[0].ratio);
        GaitParams::new(freq, ratio).expect("interpolation stays inside knot bounds")
    }
}

impl SpeedToGait for BaselineMap {
    fn gait_for(&self, speed: f64) -> GaitParams {
        self.eval(speed)
    }
}

/// Per-cost weights applied to the normalized costs before scoring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub speed_error: f64,
    pub cost_of_transport: f64,
    pub torque: f64,
    pub motor_velocity: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            speed_error: 1.0,
            cost_of_transport: 1.0,
            torque: 1.0,
            motor_velocity: 1.0,
        }
    }
}

impl CostWeights {
    /// Variant scoring that ranks purely by tracking fidelity.
    pub fn speed_only() -> Self {
        CostWeights {
            speed_error: 1.0,
            cost_of_transport: 0.0,
            torque: 0.0,
            motor_velocity: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.speed_error, "speed_error"),
            (self.cost_of_transport, "cost_of_transport"),
            (self.torque, "torque"),
            (self.motor_velocity, "motor_velocity"),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidSweep(format!(
                    "weight {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Grid-search specification: speeds to visit and the offset box sampled
/// around the baseline mapping at each speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub speeds: Vec<f64>,
    /// Half-width of the freq band around the baseline [Hz].
    pub freq_offset: f64,
    /// Half-width of the ratio band around the baseline.
    pub ratio_offset: f64,
    /// Samples per grid axis.
    pub grid_per_axis: usize,
    pub seed: u64,
    pub baseline: BaselineMap,
    pub weights: CostWeights,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            speeds: vec![2.0, 2.5, 3.0, 3.5, 4.0],
            freq_offset: 0.625,
            ratio_offset: 0.2,
            grid_per_axis: 9,
            seed: 208,
            baseline: BaselineMap::default(),
            weights: CostWeights::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.speeds.is_empty() {
            return Err(Error::InvalidSweep("speed list is empty".into()));
        }
        for &s in &self.speeds {
            if !s.is_finite() || !(0.0..=5.0).contains(&s) {
                return Err(Error::InvalidSweep(format!(
                    "sweep speed {s} outside supported band [0, 5] m/s"
                )));
            }
        }
        if !(self.freq_offset.is_finite() && self.freq_offset > 0.0) {
            return Err(Error::InvalidSweep(format!(
                "freq_offset must be positive, got {}",
                self.freq_offset
            )));
        }
        if !(self.ratio_offset.is_finite() && self.ratio_offset > 0.0) {
            return Err(Error::InvalidSweep(format!(
                "ratio_offset must be positive, got {}",
                self.ratio_offset
            )));
        }
        if self.grid_per_axis == 0 {
            return Err(Error::InvalidSweep("grid_per_axis must be >= 1".into()));
        }
        self.weights.validate()
    }

    /// Grid cells for one speed, in (freq index, ratio index) order.
    /// Ratio samples are clamped into (0, 1) and freq samples kept positive,
    /// so edge cells near the band limits may coincide.
    pub fn cells_at(&self, speed: f64) -> Vec<GaitParams> {
        let center = self.baseline.eval(speed);
        let freqs = axis_samples(center.freq, self.freq_offset, self.grid_per_axis);
        let ratios = axis_samples(center.ratio, self.ratio_offset, self.grid_per_axis);
        let mut cells = Vec::with_capacity(freqs.len() * ratios.len());
        for &f in &freqs {
            for &r in &ratios {
                let f = f.max(1e-3);
                let r = r.clamp(1e-3, 1.0 - 1e-3);
                cells.push(GaitParams::new(f, r).expect("clamped into valid range"));
            }
        }
        cells
    }
}

fn axis_samples(center: f64, half_width: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![center];
    }
    (0..n)
        .map(|i| center - half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
        .collect()
}

/// Four raw costs, their normalized forms, and the compiled score for one
/// grid cell. A fall forces score 0; otherwise score = exp(-sum of
/// weighted normalized costs) lies in (0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub speed_error: f64,
    pub cost_of_transport: f64,
    pub torque_cost: f64,
    pub motor_velocity: f64,
    pub norm_speed_error: f64,
    pub norm_cost_of_transport: f64,
    pub norm_torque_cost: f64,
    pub norm_motor_velocity: f64,
    pub score: f64,
    pub fell: bool,
}

/// Per-speed normalization constants (medians over non-fallen cells).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostNorms {
    pub speed_error: f64,
    pub cost_of_transport: f64,
    pub torque: f64,
    pub motor_velocity: f64,
}

impl CostNorms {
    pub fn unit() -> Self {
        CostNorms {
            speed_error: 1.0,
            cost_of_transport: 1.0,
            torque: 1.0,
            motor_velocity: 1.0,
        }
    }
}

impl ScoreBreakdown {
    /// Recompute the normalized costs and score from the raw costs.
    pub fn rescore(&mut self, norms: &CostNorms, weights: &CostWeights) {
        let div = |x: f64, n: f64| x / n.max(1e-12);
        self.norm_speed_error = div(self.speed_error, norms.speed_error);
        self.norm_cost_of_transport = div(self.cost_of_transport, norms.cost_of_transport);
        self.norm_torque_cost = div(self.torque_cost, norms.torque);
        self.norm_motor_velocity = div(self.motor_velocity, norms.motor_velocity);
        self.score = if self.fell {
            0.0
        } else {
            let total = weights.speed_error * self.norm_speed_error
                + weights.cost_of_transport * self.norm_cost_of_transport
                + weights.torque * self.norm_torque_cost
                + weights.motor_velocity * self.norm_motor_velocity;
            // cap keeps exp strictly positive: a standing (non-fallen) cell
            // must outrank every fallen one no matter how costly
            (-total.min(700.0)).exp()
        };
    }
}

/// Policy steps allowed for the transient before scoring starts: 50 at
/// 0 m/s rising linearly to 250 at 5 m/s.
pub fn settle_steps(cmd: f64) -> Result<usize> {
    if !cmd.is_finite() || !(0.0..=5.0).contains(&cmd) {
        return Err(Error::SpeedOutOfBand(cmd, 0.0, 5.0));
    }
    Ok(50 + (40.0 * cmd).round() as usize)
}

fn window_costs(
    log: &TrajectoryLog,
    cmd: f64,
    settle: usize,
    model: &ModelParams,
    gains: &ControllerGains,
) -> (f64, f64, f64, f64) {
    let window = log.samples.get(settle..).unwrap_or(&[]);
    if window.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let n = window.len() as f64;
    let dt = model.policy_period;

    let speed_error = window.iter().map(|s| (s.com_vel.x - cmd).abs()).sum::<f64>() / n;

    let mut positive_work = 0.0;
    let mut torque_sum = 0.0;
    let mut motor_sum = 0.0;
    for s in window {
        for i in 0..2 {
            positive_work += (s.actuator_force[i] * s.leg_rate[i]).max(0.0) * dt;
            torque_sum += s.actuator_force[i].abs();
            motor_sum += s.leg_rate[i].abs() + gains.swing_clearance * s.swing_rate[i];
        }
    }
    let distance = (window.last().expect("non-empty").com_pos.x - window[0].com_pos.x).max(1e-9);
    let cot = positive_work / (model.mass * model.gravity * distance);
    let torque_cost = torque_sum / (2.0 * n);
    let motor_velocity = motor_sum / (2.0 * n);
    (speed_error, cot, torque_cost, motor_velocity)
}

/// Score one grid cell: roll out settle + scored steps from the shared
/// standing start (perturbed by `seed`) and cost the final window. The
/// normalized costs here use unit norms; `sweep` rescales them by the
/// per-speed medians. Falls are data (score 0), not errors.
pub fn evaluate_cell(
    cmd: f64,
    params: GaitParams,
    seed: u64,
    model: &ModelParams,
    gains: &ControllerGains,
    weights: &CostWeights,
) -> Result<ScoreBreakdown> {
    let settle = settle_steps(cmd)?;
    let duration = (settle + SCORED_STEPS) as f64 * model.policy_period;
    let mut controller = RunningController::new(gains.clone(), *model)?;
    let log = rollout(
        &mut controller,
        &FixedGait(params),
        &SpeedSchedule::constant(cmd),
        duration,
        seed,
        model,
    )?;
    let (speed_error, cot, torque_cost, motor_velocity) =
        window_costs(&log, cmd, settle, model, gains);
    let mut breakdown = ScoreBreakdown {
        speed_error,
        cost_of_transport: cot,
        torque_cost,
        motor_velocity,
        norm_speed_error: 0.0,
        norm_cost_of_transport: 0.0,
        norm_torque_cost: 0.0,
        norm_motor_velocity: 0.0,
        score: 0.0,
        fell: log.fell(),
    };
    breakdown.rescore(&CostNorms::unit(), weights);
    Ok(breakdown)
}

/// One scored grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub speed: f64,
    pub params: GaitParams,
    pub breakdown: ScoreBreakdown,
}

/// Full sweep result, rows in deterministic (speed, freq, ratio) key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "speed,freq,ratio,score,fell,speed_err,cot,torque,\
                                    motor_vel,norm_speed_err,norm_cot,norm_torque,norm_motor_vel";

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let b = &r.breakdown;
            let fields = [
                r.speed,
                r.params.freq,
                r.params.ratio,
                b.score,
                if b.fell { 1.0 } else { 0.0 },
                b.speed_error,
                b.cost_of_transport,
                b.torque_cost,
                b.motor_velocity,
                b.norm_speed_error,
                b.norm_cost_of_transport,
                b.norm_torque_cost,
                b.norm_motor_velocity,
            ];
            let line: Vec<String> = fields.iter().map(|&v| fmt_float(v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("costs are finite"));
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Evaluate every grid cell at every sweep speed. Cells are independent
/// rollouts dispatched in parallel; rows are assembled in (speed, freq,
/// ratio) key order so the table is schedule-independent. Each raw cost is
/// then normalized by its per-speed median over non-fallen cells and the
/// scores compiled.
pub fn sweep(spec: &SweepSpec, model: &ModelParams, gains: &ControllerGains) -> Result<SweepTable> {
    spec.validate()?;
    model.validate()?;
    gains.validate()?;

    let mut jobs: Vec<(f64, GaitParams)> = Vec::new();
    for &speed in &spec.speeds {
        for params in spec.cells_at(speed) {
            jobs.push((speed, params));
        }
    }

    let rows: Result<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(speed, params)| {
            let breakdown =
                evaluate_cell(speed, params, spec.seed, model, gains, &spec.weights)?;
            Ok(SweepRow {
                speed,
                params,
                breakdown,
            })
        })
        .collect();
    let mut rows = rows?;

    for &speed in &spec.speeds {
        let at_speed: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].speed == speed)
            .collect();
        let collect_cost = |f: fn(&ScoreBreakdown) -> f64| -> Vec<f64> {
            at_speed
                .iter()
                .filter(|&&i| !rows[i].breakdown.fell)
                .map(|&i| f(&rows[i].breakdown))
                .collect()
        };
        let norms = CostNorms {
            speed_error: median(&mut collect_cost(|b| b.speed_error)).unwrap_or(1.0),
            cost_of_transport: median(&mut collect_cost(|b| b.cost_of_transport)).unwrap_or(1.0),
            torque: median(&mut collect_cost(|b| b.torque_cost)).unwrap_or(1.0),
            motor_velocity: median(&mut collect_cost(|b| b.motor_velocity)).unwrap_or(1.0),
        };
        for &i in &at_speed {
            rows[i].breakdown.rescore(&norms, &spec.weights);
        }
    }

    Ok(SweepTable { rows })
}

/// Top-k winners at one sweep speed.
#[derive(Clone, Debug, PartialEq)]
pub struct TopK {
    pub entries: Vec<SweepRow>,
    /// Set when fewer than k non-fallen cells existed at this speed.
    pub short: bool,
}

/// Highest-scoring non-fallen cells at `speed`; ties broken by lower cost
/// of transport, then lower freq. Returns fewer than `k` entries (flagged)
/// when the table runs short, and an empty flagged list when every cell at
/// the speed fell.
pub fn top_k(table: &SweepTable, speed: f64, k: usize) -> TopK {
    let mut entries: Vec<SweepRow> = table
        .rows
        .iter()
        .filter(|r| r.speed == speed && !r.breakdown.fell)
        .copied()
        .collect();
    entries.sort_by(|a, b| {
        b.breakdown
            .score
            .partial_cmp(&a.breakdown.score)
            .expect("scores are finite")
            .then(
                a.breakdown
                    .cost_of_transport
                    .partial_cmp(&b.breakdown.cost_of_transport)
                    .expect("costs are finite"),
            )
            .then(
                a.params
                    .freq
                    .partial_cmp(&b.params.freq)
                    .expect("freqs are finite"),
            )
    });
    let short = entries.len() < k;
    entries.truncate(k);
    TopK { entries, short }
}

/// Evaluation clamps applied by `SpeedParamMap::eval`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapClamps {
    pub freq: [f64; 2],
    pub ratio: [f64; 2],
}

impl Default for MapClamps {
    fn default() -> Self {
        MapClamps {
            freq: [0.2, 4.0],
            ratio: [0.02, 0.98],
        }
    }
}

/// Degree-3 polynomial mapping from speed command to gait parameters,
/// fitted over the sweep winners. Coefficients are in ascending powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedParamMap {
    pub degree: usize,
    pub freq_coeffs: Vec<f64>,
    pub ratio_coeffs: Vec<f64>,
    /// Speeds outside this range evaluate at the nearest endpoint.
    pub speed_range: [f64; 2],
    pub clamps: MapClamps,
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

impl SpeedParamMap {
    pub fn eval(&self, speed: f64) -> GaitParams {
        let v = speed.clamp(self.speed_range[0], self.speed_range[1]);
        let freq = poly_eval(&self.freq_coeffs, v).clamp(self.clamps.freq[0], self.clamps.freq[1]);
        let ratio =
            poly_eval(&self.ratio_coeffs, v).clamp(self.clamps.ratio[0], self.clamps.ratio[1]);
        GaitParams::new(freq, ratio).expect("clamps keep parameters valid")
    }
}

impl SpeedToGait for SpeedParamMap {
    fn gait_for(&self, speed: f64) -> GaitParams {
        self.eval(speed)
    }
}

fn lsq_fit(speeds: &[f64], values: &[f64], degree: usize) -> Result<Vec<f64>> {
    let a = DMatrix::from_fn(speeds.len(), degree + 1, |r, c| speeds[r].powi(c as i32));
    let b = DVector::from_column_slice(values);
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidSweep(format!("polynomial fit failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

/// Least-squares degree-3 fit of (speed -> freq) and (speed -> ratio) over
/// the pooled winner points. Needs at least degree + 1 distinct speeds for
/// full rank.
pub fn fit_map(points: &[(f64, GaitParams)], degree: usize) -> Result<SpeedParamMap> {
    let mut speeds: Vec<f64> = points.iter().map(|p| p.0).collect();
    speeds.sort_by(|a, b| a.partial_cmp(b).expect("speeds are finite"));
    speeds.dedup();
    if speeds.len() < degree + 1 {
        return Err(Error::InsufficientSpeeds {
            need: degree + 1,
            got: speeds.len(),
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let freqs: Vec<f64> = points.iter().map(|p| p.1.freq).collect();
    let ratios: Vec<f64> = points.iter().map(|p| p.1.ratio).collect();
    Ok(SpeedParamMap {
        degree,
        freq_coeffs: lsq_fit(&xs, &freqs, degree)?,
        ratio_coeffs: lsq_fit(&xs, &ratios, degree)?,
        speed_range: [
            *speeds.first().expect("non-empty after dedup"),
            *speeds.last().expect("non-empty after dedup"),
        ],
        clamps: MapClamps::default(),
    })
}

/// Winner points pooled across speeds, ready for `fit_map`.
pub fn pool_top_k(table: &SweepTable, speeds: &[f64], k: usize) -> Vec<(f64, GaitParams)> {
    let mut points = Vec::new();
    for &speed in speeds {
        for row in top_k(table, speed, k).entries {
            points.push((speed, row.params));
        }
    }
    points
}
