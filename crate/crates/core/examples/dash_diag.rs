// Scratch tuning harness; not part of the shipped API.
use stridelab::control::ControllerGains;
use stridelab::dash::{calibrate, run_dash, run_trials, DashConfig, TransitionPolicy};
use stridelab::optimize::{BaselineMap, Knot};
use stridelab::sim::ModelParams;

fn batch(cruise: f64, transition: TransitionPolicy, n: usize) {
    let model = ModelParams::default();
    let gains = ControllerGains::default();
    let map = BaselineMap::new(vec![
        Knot { speed: 2.0, freq: 2.005, ratio: 0.480 },
        Knot { speed: 3.0, freq: 2.031, ratio: 0.553 },
        Knot { speed: 4.0, freq: 2.068, ratio: 0.630 },
    ])
    .unwrap();
    let cal = calibrate(&map, &gains, &model, 0).unwrap();
    let config = DashConfig { cruise_speed: cruise, transition, ..DashConfig::default() };
    let results = run_trials(&config, &cal, &map, &gains, &model, n).unwrap();
    let ok = results.iter().filter(|r| r.success()).count();
    let times: Vec<f64> = results.iter().filter_map(|r| r.official_time).collect();
    let tmin = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let tmax = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "cruise {cruise} {transition:?}: {ok}/{n} success, times {tmin:.3}..{tmax:.3}"
    );
    for (k, r) in results.iter().enumerate() {
        if !r.success() {
            println!(
                "  seed {k}: fell {} at {:?}, stages {}, verified {}, time {:?}",
                r.fell,
                r.fall_time,
                r.stages.len(),
                r.standing_verified,
                r.official_time
            );
        }
    }
}

fn main() {
    if std::env::var("BATCH").is_ok() {
        for &cruise in &[4.0, 5.0] {
            for &t in &[
                TransitionPolicy::Calibrated,
                TransitionPolicy::ApexWaitOnly,
                TransitionPolicy::ImmediateSwap,
            ] {
                batch(cruise, t, 20);
            }
        }
        return;
    }

    let model = ModelParams::default();
    let gains = ControllerGains::default();
    let map = BaselineMap::new(vec![
        Knot { speed: 2.0, freq: 2.005, ratio: 0.480 },
        Knot { speed: 3.0, freq: 2.031, ratio: 0.553 },
        Knot { speed: 4.0, freq: 2.068, ratio: 0.630 },
    ])
    .unwrap();

    let cal = calibrate(&map, &gains, &model, 0).unwrap();
    println!(
        "calibration: start {:.4} apexes [{:.4}, {:.4}] tol {:.4}",
        cal.start_phase.value(),
        cal.apex_phases[0].value(),
        cal.apex_phases[1].value(),
        cal.tolerance
    );

    let seed: u64 = std::env::var("SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(0);
    let cruise: f64 = std::env::var("CRUISE").ok().and_then(|v| v.parse().ok()).unwrap_or(4.0);
    let transition = match std::env::var("VARIANT").as_deref() {
        Ok("apex") => TransitionPolicy::ApexWaitOnly,
        Ok("swap") => TransitionPolicy::ImmediateSwap,
        _ => TransitionPolicy::Calibrated,
    };
    let config = DashConfig { seed, cruise_speed: cruise, transition, ..DashConfig::default() };
    let (result, log) = run_dash(&config, &cal, &map, &gains, &model).unwrap();
    println!(
        "seed {seed}: success {} fell {} time {:?} verified {} swap_phase {:?}",
        result.success(),
        result.fell,
        result.official_time,
        result.standing_verified,
        result.stand_swap_phase.map(|p| p.value())
    );
    for s in &result.stages {
        println!("  stage {:?} at {:.3}", s.stage, s.entered_at);
    }

    let focus: f64 = result
        .stages
        .last()
        .map(|s| s.entered_at)
        .unwrap_or(0.0);
    let from = focus - 0.5;
    let to = log.samples.last().map(|s| s.time).unwrap_or(0.0);
    println!("samples {from:.2}..{to:.2}:");
    println!("  t      cmd    vx     vz     comz   ph     f0x/z (c)      f1x/z (c)     grf0   grf1");
    for s in &log.samples {
        if s.time < from {
            continue;
        }
        let c0 = if s.grf[0].z > 3.0 { '*' } else { ' ' };
        let c1 = if s.grf[1].z > 3.0 { '*' } else { ' ' };
        println!(
            "  {:6.3} {:5.2} {:6.3} {:6.3} {:6.3} {:5.3} {:6.3}/{:5.3}{} {:6.3}/{:5.3}{} {:6.0} {:6.0}",
            s.time,
            s.cmd_speed,
            s.com_vel.x,
            s.com_vel.z,
            s.com_pos.z,
            s.phase.value(),
            s.foot_pos[0].x - s.com_pos.x,
            s.foot_pos[0].z,
            c0,
            s.foot_pos[1].x - s.com_pos.x,
            s.foot_pos[1].z,
            c1,
            s.grf[0].z,
            s.grf[1].z
        );
    }
}
