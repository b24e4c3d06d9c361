//! Draws one synthetic epidemic from the desk-scale scenario and prints the
//! latent and observed series.
//!
//!     cargo run --release --example simulate_epidemic -- [seed]

use epistate::model::r0e;
use epistate::scenario::Scenario;
use epistate::stochastic::stream_rng;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scenario = Scenario::desk_scale();
    let design = scenario.design().expect("valid design");
    let sim = scenario.simulate(&mut stream_rng(seed, 0)).expect("simulation");
    let p = &sim.true_params;

    println!("day   S         I_u      I_d      D_d     mu_c    cases  mu_d   deaths  R0e");
    for t in (0..scenario.n_days).step_by(5) {
        let x = &sim.states[t + 1];
        let r = r0e(&design.rates(t, p).unwrap(), p.eps_c[t]).unwrap();
        println!(
            "{:>3} {:>9.0} {:>8.1} {:>8.1} {:>7.1} {:>7.1} {:>6} {:>5.2} {:>6}  {:.2}",
            t + 1,
            x.s,
            x.i_u,
            x.i_d,
            x.d_d,
            sim.mu_c[t],
            sim.observed_cases[t],
            sim.mu_d[t],
            sim.observed_deaths[t],
            r
        );
    }
    let totals: Vec<f64> = sim.states.iter().map(|s| s.total()).collect();
    let drift = totals.iter().map(|n| (n - totals[0]).abs()).fold(0.0, f64::max);
    println!(
        "observed {} cases and {} deaths; population drift {drift:.1e}",
        sim.observed_cases.iter().sum::<u64>(),
        sim.observed_deaths.iter().sum::<u64>()
    );
}
