//! Fast invariant checks run by `epistate validate`: conservation,
//! reproduction-number analytics, gradient correctness, prior and
//! observation-model moments.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::likelihood::{EpiModel, Prior, PriorConfig};
use crate::model::{self, CompartmentState, DailyRates, ModelError, StepNoise};
use crate::scenario::Scenario;
use crate::stochastic::{sample_observation, stream_rng, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> CheckResult {
        CheckResult {
            name: name.to_owned(),
            passed,
            detail,
        }
    }
}

/// Signature of an equilibrium reproduction number implementation, so the
/// analytic checks can be pointed at a deliberately broken one.
pub type R0eFn = fn(&DailyRates, f64) -> Result<f64, ModelError>;

pub fn random_state(rng: &mut SimRng) -> CompartmentState {
    let mut a = [0.0; 8];
    for x in a.iter_mut() {
        *x = if rng.random_bool(0.2) {
            0.0
        } else {
            10f64.powf(rng.random_range(-2.0..6.0))
        };
    }
    a[0] += 1.0;
    CompartmentState::from_array(a)
}

/// Rates that may push outflows past the compartment size, exercising the
/// clamp.
pub fn random_rates(rng: &mut SimRng) -> DailyRates {
    DailyRates {
        beta_u: rng.random_range(0.0..3.0),
        tau: rng.random_range(0.0..1.0),
        alpha: rng.random_range(0.0..1.2),
        eta: rng.random_range(0.0..1.2),
        rho: rng.random_range(0.0..1.2),
        nu: rng.random_range(0.0..1.2),
        gamma: rng.random_range(0.0..0.6),
        delta: rng.random_range(0.0..0.6),
    }
}

pub fn random_noise(rng: &mut SimRng) -> StepNoise {
    StepNoise {
        eps_c: rng.random_range(0.2..3.0),
        eps_d: rng.random_range(0.2..3.0),
    }
}

/// Total population is conserved by every step.
pub fn check_conservation(n: usize, seed: u64) -> CheckResult {
    let mut rng = stream_rng(seed, 1);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..n {
        let state = random_state(&mut rng);
        let rates = random_rates(&mut rng);
        let noise = random_noise(&mut rng);
        match model::step(&state, &rates, &noise) {
            Ok(next) => {
                let rel = (next.total() - state.total()).abs() / state.total();
                worst = worst.max(rel);
                if next.as_array().iter().any(|x| *x < 0.0) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    CheckResult::new(
        "conservation",
        worst <= 1e-12 && failures == 0,
        format!("{n} random steps, worst relative drift {worst:.2e}, {failures} failures"),
    )
}

/// Hand values, monotonicity in the detection rate and both limits.
pub fn check_r0e(r0e: R0eFn) -> CheckResult {
    let rates = |beta_u, eta, rho, tau, nu| DailyRates {
        beta_u,
        tau,
        eta,
        rho,
        nu,
        ..DailyRates::zero()
    };
    let mut problems = Vec::new();
    let hand = [
        (rates(0.3, 0.0, 0.1, 0.5, 0.2), 1.0, 3.0),
        (rates(0.4, 0.2, 0.1, 0.5, 0.2), 1.0, 2.0),
        (rates(0.4, 0.2, 0.1, 0.5, 0.2), 1.5, 1.75),
    ];
    for (r, eps, want) in &hand {
        match r0e(r, *eps) {
            Ok(got) if (got - want).abs() <= 1e-12 * want => {}
            other => problems.push(format!("hand value {want}: got {other:?}")),
        }
    }
    // rho < nu / tau on the whole grid.
    let mut violations = 0;
    let mut points = 0;
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                let tau = 0.05 + 0.9 * i as f64 / 9.0;
                let nu = 0.05 + 0.5 * j as f64 / 9.0;
                let rho = 0.99 * (nu / tau).min(2.0) * (k as f64 + 0.5) / 10.0;
                let eta = 0.01 + 0.1 * k as f64;
                let r = rates(0.3, eta, rho, tau, nu);
                let r_up = rates(0.3, eta + 1e-4, rho, tau, nu);
                points += 1;
                match (r0e(&r, 1.0), r0e(&r_up, 1.0)) {
                    (Ok(a), Ok(b)) if b < a => {}
                    _ => violations += 1,
                }
            }
        }
    }
    if violations > 0 {
        problems.push(format!("not decreasing in eta at {violations}/{points} grid points"));
    }
    let base = rates(0.3, 1e-12, 0.1, 0.5, 0.2);
    match r0e(&base, 1.0) {
        Ok(v) if (v - 3.0).abs() < 1e-9 => {}
        other => problems.push(format!("eta -> 0 limit: {other:?}")),
    }
    let big = rates(0.3, 1e6, 0.1, 0.5, 0.2);
    let limit = 0.3 * 0.5 / 0.2;
    match r0e(&big, 1.0) {
        Ok(v) if (v - limit).abs() <= 0.01 * limit => {}
        other => problems.push(format!("eta -> inf limit {limit}: {other:?}")),
    }
    CheckResult::new(
        "r0e analytics",
        problems.is_empty(),
        if problems.is_empty() {
            format!("3 hand values, {points}-point monotonicity grid, both limits")
        } else {
            problems.join("; ")
        },
    )
}

/// Largest relative error between the exact gradient and central
/// differences (step 1e-5) at `n_points` jittered points around the truth of
/// an `n_days` synthetic problem. The denominator is floored at 1.
pub fn gradient_error(n_days: usize, n_points: usize, seed: u64) -> Result<f64, String> {
    let scenario = Scenario::with_days(n_days);
    let sim = scenario
        .simulate(&mut stream_rng(seed, 0))
        .map_err(|e| e.to_string())?;
    let design = scenario.design().map_err(|e| e.to_string())?;
    let model = EpiModel::new(scenario.observations(&sim), design, &PriorConfig::default())
        .map_err(|e| e.to_string())?;
    let base = model
        .layout
        .unconstrain(&sim.true_params)
        .map_err(|e| e.to_string())?;
    let jitter = Normal::new(0.0, 0.2).expect("valid normal");
    let mut rng = stream_rng(seed, 2);
    let mut worst = 0.0f64;
    let f = |u: &[f64]| model.log_density(u).map_err(|e| e.to_string());
    for _ in 0..n_points {
        let u: Vec<f64> = base.iter().map(|x| x + jitter.sample(&mut rng)).collect();
        let mut grad = vec![0.0; u.len()];
        model
            .log_density_grad(&u, &mut grad)
            .map_err(|e| e.to_string())?;
        let mut probe = u.clone();
        for i in 0..u.len() {
            let h = 1e-5;
            probe[i] = u[i] + h;
            let up = f(&probe)?;
            probe[i] = u[i] - h;
            let down = f(&probe)?;
            probe[i] = u[i];
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(1.0));
        }
    }
    Ok(worst)
}

pub fn check_gradient(seed: u64) -> CheckResult {
    match gradient_error(30, 3, seed) {
        Ok(worst) => CheckResult::new(
            "gradient",
            worst < 1e-5,
            format!("30-day problem, 3 points, worst relative error {worst:.2e}"),
        ),
        Err(e) => CheckResult::new("gradient", false, e),
    }
}

/// Monte Carlo mean and SD of `n` draws.
pub fn sample_moments<F: FnMut() -> f64>(n: usize, mut draw: F) -> (f64, f64) {
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 1..=n {
        let x = draw();
        let d = x - mean;
        mean += d / k as f64;
        m2 += d * (x - mean);
    }
    (mean, (m2 / (n - 1) as f64).sqrt())
}

/// Prior means and SDs as stated alongside the prior tables. Uniform and
/// normal priors are checked against their defining moments.
pub fn stated_prior_moments() -> Vec<(&'static str, Prior, f64, f64)> {
    let p = PriorConfig::default();
    vec![
        ("kappa", p.kappa, 5.0, 1.0),
        ("e_frac", p.e_frac, 0.5, (1.0f64 / 12.0).sqrt()),
        ("tau", p.tau, 0.5, (1.0f64 / 12.0).sqrt()),
        ("alpha", p.alpha, 1.0 / 2.9, 0.05),
        ("eta0", p.eta0, 1.0 / 2.8, 0.05),
        ("nu", p.nu, 1.0 / 7.0, 0.05),
        ("gamma0", p.gamma0, 1.0 / 21.0, 0.01),
        ("delta0", p.delta0, 1.0 / 14.0, 0.01),
        ("a_psi", p.a_psi, 0.75, 0.05),
        ("psi_ratio", p.psi_ratio, 0.5, (1.0f64 / 12.0).sqrt()),
        ("c_psi", p.c_psi, 0.05, 5f64.sqrt() / 100.0),
        ("zeta_beta", p.zeta_beta, 0.0, 1.0),
        ("zeta_omega", p.zeta_omega, -1.0, 1.0),
        ("phi_c", p.phi_c, 0.5, 50f64.sqrt() / 100.0),
        ("phi_d", p.phi_d, 0.5, 50f64.sqrt() / 100.0),
    ]
}

pub fn check_prior_moments(seed: u64) -> CheckResult {
    let mut rng = stream_rng(seed, 3);
    let mut problems = Vec::new();
    let entries = stated_prior_moments();
    for (name, prior, mean, sd) in &entries {
        let (m, s) = sample_moments(200_000, || prior.sample(&mut rng));
        // Mean tolerance is absolute in SD units where the mean is 0.
        let mean_ok = (m - mean).abs() <= 0.02 * mean.abs().max(*sd);
        if !mean_ok || (s - sd).abs() > 0.02 * sd {
            problems.push(format!("{name}: mean {m:.4} (want {mean:.4}), sd {s:.4} (want {sd:.4})"));
        }
    }
    CheckResult::new(
        "prior moments",
        problems.is_empty(),
        if problems.is_empty() {
            format!("{} priors, 2e5 draws each, within 2%", entries.len())
        } else {
            problems.join("; ")
        },
    )
}

pub fn check_observation_moments(seed: u64) -> CheckResult {
    let mut rng = stream_rng(seed, 4);
    let mut problems = Vec::new();
    for mu in [1.0, 10.0, 100.0] {
        for phi in [0.5, 5.0, 50.0] {
            let (m, s) = sample_moments(200_000, || sample_observation(mu, phi, &mut rng) as f64);
            let var = mu * (1.0 + mu / phi);
            if (m - mu).abs() > 0.02 * mu || (s * s - var).abs() > 0.05 * var {
                problems.push(format!("mu={mu} phi={phi}: mean {m:.3}, var {:.3} (want {var:.3})", s * s));
            }
        }
    }
    CheckResult::new(
        "observation moments",
        problems.is_empty(),
        if problems.is_empty() {
            "9 (mu, phi) pairs, 2e5 draws each".to_string()
        } else {
            problems.join("; ")
        },
    )
}

/// Every check, in order, with wall-clock seconds.
pub fn run_all(seed: u64) -> Vec<(CheckResult, f64)> {
    let timed = |f: &dyn Fn() -> CheckResult| {
        let start = Instant::now();
        let r = f();
        (r, start.elapsed().as_secs_f64())
    };
    vec![
        timed(&|| check_conservation(10_000, seed)),
        timed(&|| check_r0e(model::r0e::<f64>)),
        timed(&|| check_gradient(seed)),
        timed(&|| check_prior_moments(seed)),
        timed(&|| check_observation_moments(seed)),
    ]
}
