//! Simulates the desk-scale epidemic, fits it, and checks what the posterior
//! recovers: the covariate coefficient, the reproduction-number trajectory,
//! and convergence. Writes the summary CSVs to a temporary directory.
//!
//!     cargo run --release --example parameter_recovery -- [seed] [warmup] [samples]

use std::time::Instant;

use epistate::analysis::{mobility_coefficient_summary, r0e_trajectory, write_summaries, Posterior};
use epistate::likelihood::{EpiModel, PriorConfig};
use epistate::model::r0e;
use epistate::sampler::{run_nuts, DiagnosticsReport, SamplerConfig};
use epistate::scenario::Scenario;
use epistate::stochastic::stream_rng;

fn arg(i: usize, default: u64) -> u64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let seed = arg(1, 1);
    let scenario = Scenario::desk_scale();
    let design = scenario.design().unwrap();
    let sim = scenario.simulate(&mut stream_rng(seed, 0)).unwrap();
    let truth = &sim.true_params;
    let true_r0e: Vec<f64> = (0..scenario.n_days)
        .map(|t| r0e(&design.rates(t, truth).unwrap(), truth.eps_c[t]).unwrap())
        .collect();

    let data = scenario.observations(&sim);
    let model = EpiModel::new(data.clone(), design.clone(), &PriorConfig::default()).unwrap();
    let config = SamplerConfig {
        n_chains: 2,
        n_warmup: arg(2, 500) as usize,
        n_samples: arg(3, 500) as usize,
        seed,
        ..SamplerConfig::default()
    };
    let started = Instant::now();
    let draws = run_nuts(&model, &config).unwrap();
    let report = DiagnosticsReport::new(&draws, &config, None).unwrap();
    println!("sampling took {:.0} s", started.elapsed().as_secs_f64());

    let dates: Vec<_> = (0..scenario.n_days as u64)
        .map(|t| chrono::NaiveDate::from_ymd_opt(2020, 3, 15).unwrap() + chrono::Days::new(t))
        .collect();
    let post = Posterior::new(&draws, design, dates).unwrap();
    let band = r0e_trajectory(&post).unwrap();
    let coef = &mobility_coefficient_summary(&post)[0];
    println!(
        "covariate coefficient: truth 0.4, mean {:.3}, 95% [{:.3}, {:.3}]",
        coef.mean, coef.lower, coef.upper
    );
    println!(
        "true R0e inside the 95% band on {:.0}% of days",
        100.0 * band.coverage(&true_r0e)
    );
    println!(
        "R-hat <= 1.05 for {:.1}% of {} parameters, {} divergences",
        100.0 * report.fraction_rhat_below(1.05),
        report.parameters.len(),
        report.divergences
    );

    let dir = tempfile::tempdir().unwrap();
    for path in write_summaries(&post, &data, dir.path()).unwrap() {
        let text = std::fs::read_to_string(&path).unwrap();
        println!("{}: {} rows", path.file_name().unwrap().to_string_lossy(), text.lines().count() - 1);
    }
}
