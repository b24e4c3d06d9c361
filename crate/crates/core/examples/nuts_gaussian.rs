//! The sampler on a correlated Gaussian, with convergence diagnostics.
//!
//!     cargo run --release --example nuts_gaussian

use epistate::sampler::{run_nuts, DensityError, DiagnosticsReport, LogDensity, SamplerConfig};

/// Bivariate normal with unit variances and correlation `r`, plus
/// independent coordinates with growing scales.
struct Target {
    r: f64,
    scales: Vec<f64>,
}

impl LogDensity for Target {
    fn dim(&self) -> usize {
        2 + self.scales.len()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DensityError> {
        let k = 1.0 / (1.0 - self.r * self.r);
        let (a, b) = (x[0], x[1]);
        let mut lp = -0.5 * k * (a * a - 2.0 * self.r * a * b + b * b);
        grad[0] = -k * (a - self.r * b);
        grad[1] = -k * (b - self.r * a);
        for (i, s) in self.scales.iter().enumerate() {
            let z = x[2 + i];
            lp -= 0.5 * z * z / (s * s);
            grad[2 + i] = -z / (s * s);
        }
        Ok(lp)
    }
}

fn main() {
    let target = Target {
        r: 0.9,
        scales: vec![0.1, 1.0, 10.0],
    };
    let config = SamplerConfig {
        n_chains: 4,
        n_warmup: 500,
        n_samples: 1000,
        target_accept: 0.8,
        seed: 3,
        ..SamplerConfig::default()
    };
    let draws = run_nuts(&target, &config).unwrap();
    let report = DiagnosticsReport::new(&draws, &config, None).unwrap();
    println!("{:<6} {:>8} {:>8} {:>7} {:>9} {:>9}", "param", "mean", "sd", "R-hat", "ESS bulk", "ESS tail");
    for p in &report.parameters {
        println!(
            "{:<6} {:>8.3} {:>8.3} {:>7.3} {:>9.0} {:>9.0}",
            p.name,
            p.mean,
            p.sd,
            p.rhat,
            p.ess_bulk.unwrap_or(f64::NAN),
            p.ess_tail.unwrap_or(f64::NAN)
        );
    }
    for c in &report.chains {
        println!(
            "chain {}: step {:.3}, accept {:.3}, {} divergences, metric {:?}",
            c.chain,
            c.step_size,
            c.mean_accept_stat,
            c.divergences,
            c.inv_metric.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()
        );
    }
}
