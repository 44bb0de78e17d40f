// Scratch tuning harness; not part of the shipped API.
use stridelab::control::{ControllerGains, RunningController};
use stridelab::gait::GaitParams;
use stridelab::sim::{rollout, FixedGait, ModelParams, SpeedSchedule};

fn baseline(v: f64) -> GaitParams {
    let v = v.clamp(0.0, 5.0);
    GaitParams::new(1.25 + 0.125 * v, 0.4 + 0.08 * v).unwrap()
}

fn main() {
    let model = ModelParams::default();
    let gains = ControllerGains::default();
    println!("cmd    fell  t_fall   vx_mean  vx_sd    z_mean   apex_sd%  grf_max");
    for &cmd in &[0.0, 0.5, 1.0, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0] {
        let mut ctl = RunningController::new(gains, model).unwrap();
        let gait = FixedGait(baseline(cmd));
        let sched = SpeedSchedule::constant(cmd);
        let settle = 50 + (40.0 * cmd).round() as usize;
        let steps = settle + 100;
        let dur = steps as f64 * model.policy_period;
        let log = rollout(&mut ctl, &gait, &sched, dur, 42, &model).unwrap();
        let n = log.samples.len();
        if let Ok(tc) = std::env::var("TRACE_CMD") {
            if tc.parse::<f64>().ok() == Some(cmd) {
                let lo = n.saturating_sub(80);
                println!("step   t      phase  com_z   vx     vz     lz     rz    cL cR  grfL  grfR");
                for (k, s) in log.samples[lo..].iter().enumerate() {
                    println!(
                        "{:>4} {:>6.3}  {:>5.3}  {:>5.3}  {:>5.2}  {:>5.2}  {:>5.3} {:>5.3}  {}  {}  {:>5.0} {:>5.0}",
                        lo + k,
                        s.time,
                        s.phase.value(),
                        s.com_pos.z,
                        s.com_vel.x,
                        s.com_vel.z,
                        s.foot_pos[0].z,
                        s.foot_pos[1].z,
                        (s.grf[0].z > 3.0) as u8,
                        (s.grf[1].z > 3.0) as u8,
                        s.grf[0].z,
                        s.grf[1].z
                    );
                }
            }
        }
        if log.fell() || n < steps {
            println!(
                "{:<6} yes   {:>6.2}  (reached {} of {} steps)",
                cmd,
                log.meta.fall_time.unwrap_or(-1.0),
                n,
                steps
            );
            continue;
        }
        let tail = &log.samples[n - 100..];
        let vx: Vec<f64> = tail.iter().map(|s| s.com_vel.x).collect();
        let vx_mean = vx.iter().sum::<f64>() / vx.len() as f64;
        let vx_sd =
            (vx.iter().map(|v| (v - vx_mean).powi(2)).sum::<f64>() / vx.len() as f64).sqrt();
        let z: Vec<f64> = tail.iter().map(|s| s.com_pos.z).collect();
        let z_mean = z.iter().sum::<f64>() / z.len() as f64;
        // apex series: local maxima of z
        let mut apexes = vec![];
        for i in 1..z.len() - 1 {
            if z[i] > z[i - 1] && z[i] > z[i + 1] {
                apexes.push(z[i]);
            }
        }
        let apex_mean = apexes.iter().sum::<f64>() / apexes.len().max(1) as f64;
        let apex_sd = (apexes.iter().map(|a| (a - apex_mean).powi(2)).sum::<f64>()
            / apexes.len().max(1) as f64)
            .sqrt();
        let grf_max = tail
            .iter()
            .map(|s| s.grf[0].z.max(s.grf[1].z))
            .fold(0.0f64, f64::max);
        println!(
            "{:<6} no    {:>6}  {:>7.3}  {:>6.3}  {:>7.3}  {:>7.2}  {:>7.0}",
            cmd,
            "-",
            vx_mean,
            vx_sd,
            z_mean,
            100.0 * apex_sd / apex_mean.max(1e-9),
            grf_max
        );
    }
}
