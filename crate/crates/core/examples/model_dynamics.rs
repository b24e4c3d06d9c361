//! One-day dynamics and the equilibrium reproduction number, without noise.
//!
//!     cargo run --example model_dynamics

use epistate::model::{r0e, simulate_deterministic, step, CompartmentState, DailyRates, StepNoise};

fn main() {
    let rates = DailyRates {
        beta_u: 0.3,
        tau: 0.5,
        alpha: 1.0 / 3.0,
        eta: 0.2,
        rho: 0.1,
        nu: 1.0 / 7.0,
        gamma: 1.0 / 21.0,
        delta: 0.005,
    };
    let init = CompartmentState {
        s: 9_900.0,
        e: 40.0,
        i_u: 50.0,
        r_u: 0.0,
        i_d: 10.0,
        u_d: 0.0,
        r_d: 0.0,
        d_d: 0.0,
    };
    println!("R0e = {:.4}", r0e(&rates, 1.0).unwrap());
    for eta in [0.0, 0.05, 0.2, 1.0, 10.0] {
        let r = DailyRates { eta, ..rates };
        println!("  eta = {eta:<5} -> R0e = {:.4}", r0e(&r, 1.0).unwrap());
    }

    let next = step(&init, &rates, &StepNoise::UNIT).unwrap();
    println!("after one day: {next:?}");

    let path = simulate_deterministic(&init, &vec![rates; 120], 120).unwrap();
    let peak = path
        .iter()
        .enumerate()
        .max_by(|a, b| (a.1.i_u + a.1.i_d).total_cmp(&(b.1.i_u + b.1.i_d)))
        .unwrap();
    println!(
        "infectious peak on day {} ({:.0}); final susceptible {:.0}, deaths {:.1}",
        peak.0,
        peak.1.i_u + peak.1.i_d,
        path[120].s,
        path[120].d_d
    );
}
