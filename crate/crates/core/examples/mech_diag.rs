//! Mechanics diagnostic: event and stride tables for a steady rollout.

use stridelab::control::{ControllerGains, RunningController};
use stridelab::gait::GaitParams;
use stridelab::mechanics::{default_grf_threshold, segment_contacts, stride_metrics};
use stridelab::optimize::{settle_steps, SCORED_STEPS};
use stridelab::sim::{rollout, FixedGait, ModelParams, SpeedSchedule};

fn main() {
    let cmd: f64 = std::env::var("CMD")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(3.0);
    let ratio: f64 = std::env::var("RATIO")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0.4 + 0.08 * cmd);
    let freq: f64 = std::env::var("FREQ")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1.25 + 0.125 * cmd);

    let m = ModelParams::default();
    let g = GaitParams::new(freq, ratio).unwrap();
    let mut c = RunningController::new(ControllerGains::default(), m).unwrap();
    let steps = settle_steps(cmd).unwrap() + SCORED_STEPS;
    let log = rollout(
        &mut c,
        &FixedGait(g),
        &SpeedSchedule::constant(cmd),
        steps as f64 * m.policy_period,
        5,
        &m,
    )
    .unwrap();
    println!("fell: {}", log.fell());

    let thr = default_grf_threshold(&m);
    let events = segment_contacts(&log, thr);
    let start = settle_steps(cmd).unwrap() as f64 * m.policy_period;
    println!("threshold {thr:.2} N, window starts {start:.2} s");
    println!("events (last 16):");
    for e in events.iter().rev().take(16).rev() {
        println!(
            "  foot {} td {:.3} lo {:.3} dur {:.3} mean {:.0}",
            e.foot,
            e.touchdown,
            e.liftoff,
            e.duration(),
            e.mean_grf
        );
    }
    let records = stride_metrics(&events, &log).unwrap();
    println!("strides in window:");
    for r in records.iter().filter(|r| r.touchdown >= start) {
        let t = 1.0 / r.stride_freq;
        println!(
            "  foot {} td {:.3} T {:.3} len {:.3} v {:.3} tc {:.3} tsw {:.3} ta {:.4} grf_eff {:.3} oracle {:.3}",
            r.foot,
            r.touchdown,
            t,
            r.stride_length,
            r.speed,
            r.contact_time,
            r.swing_time,
            r.aerial_time,
            r.grf_eff,
            t / (2.0 * r.contact_time) - 1.0
        );
    }

    // sampled impulse balance: same window for numerator and denominator
    let dtp = m.policy_period;
    let w = m.mass * m.gravity;
    println!("sampled per-stride impulse ratios:");
    let tds: Vec<f64> = records
        .iter()
        .filter(|r| r.foot == 0 && r.touchdown >= start)
        .map(|r| r.touchdown)
        .collect();
    for pair in tds.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let sum: f64 = log
            .samples
            .iter()
            .filter(|s| s.time >= a && s.time < b)
            .map(|s| (s.grf[0].z + s.grf[1].z) * dtp)
            .sum();
        println!("  [{a:.3}, {b:.3}) ratio {:.4}", sum / (w * (b - a)));
    }

    let n = records.iter().filter(|r| r.touchdown >= start).count() as f64;
    let mean = |f: fn(&stridelab::mechanics::MechanicsRecord) -> f64| {
        records
            .iter()
            .filter(|r| r.touchdown >= start)
            .map(f)
            .sum::<f64>()
            / n
    };
    let (mt, mtc, mge) = (
        1.0 / mean(|r| r.stride_freq),
        mean(|r| r.contact_time),
        mean(|r| r.grf_eff),
    );
    println!(
        "averaged: T {mt:.4} tc {mtc:.4} grf_eff {mge:.4} oracle {:.4}",
        mt / (2.0 * mtc) - 1.0
    );
}
