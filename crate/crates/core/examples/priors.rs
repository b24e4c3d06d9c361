//! The default priors, their moments, and the case-count scaling rule.
//!
//!     cargo run --example priors -- [scale_ratio]

use epistate::likelihood::PriorConfig;
use epistate::stochastic::stream_rng;

fn main() {
    let ratio: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let base = PriorConfig::default();
    let scaled = PriorConfig {
        scale_ratio: ratio,
        ..base.clone()
    }
    .resolved()
    .unwrap();

    let mut rng = stream_rng(11, 0);
    println!("{:<12} {:>9} {:>9} {:>11} {:>12}", "parameter", "mean", "sd", "MC mean", format!("sd (r={ratio})"));
    for ((name, prior), (_, s)) in base.entries().iter().zip(scaled.entries()) {
        let n = 50_000;
        let mc = (0..n).map(|_| prior.sample(&mut rng)).sum::<f64>() / n as f64;
        println!(
            "{name:<12} {:>9.4} {:>9.4} {:>11.4} {:>12.4}",
            prior.mean(),
            prior.sd(),
            mc,
            s.sd()
        );
    }
    println!("{}", serde_json::to_string_pretty(&base.alpha).unwrap());
}
