//! Full-sweep diagnostic: timing, per-speed fall counts, top-5 tracking,
//! and the fitted speed-to-parameter map.

use stridelab::control::ControllerGains;
use stridelab::optimize::{self, SweepSpec};
use stridelab::sim::ModelParams;

fn main() {
    let spec = SweepSpec::default();
    let model = ModelParams::default();
    let gains = ControllerGains::default();

    let t0 = std::time::Instant::now();
    let table = optimize::sweep(&spec, &model, &gains).expect("sweep");
    println!(
        "sweep: {} rows in {:.1}s",
        table.rows.len(),
        t0.elapsed().as_secs_f64()
    );

    for &speed in &spec.speeds {
        let fallen = table
            .rows
            .iter()
            .filter(|r| r.speed == speed && r.breakdown.fell)
            .count();
        let total = table.rows.iter().filter(|r| r.speed == speed).count();
        let top = optimize::top_k(&table, speed, 5);
        println!("speed {speed}: {fallen}/{total} fell{}", if top.short { " SHORT" } else { "" });
        for e in &top.entries {
            println!(
                "  f={:.3} r={:.3} score={:.4} err={:+.3} cot={:.3} tq={:.0} mv={:.2}",
                e.params.freq,
                e.params.ratio,
                e.breakdown.score,
                e.breakdown.speed_error,
                e.breakdown.cost_of_transport,
                e.breakdown.torque_cost,
                e.breakdown.motor_velocity,
            );
        }
    }

    let points = optimize::pool_top_k(&table, &spec.speeds, 5);
    match optimize::fit_map(&points, 3) {
        Ok(map) => {
            println!("freq coeffs:  {:?}", map.freq_coeffs);
            println!("ratio coeffs: {:?}", map.ratio_coeffs);
            for v in [2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0] {
                let g = map.eval(v);
                println!("map({v}) -> freq {:.3} ratio {:.3}", g.freq, g.ratio);
            }
        }
        Err(e) => println!("fit failed: {e}"),
    }
}
