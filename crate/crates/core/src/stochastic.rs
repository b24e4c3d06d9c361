//! Random generation: multiplicative process noise, negative-binomial
//! observations and whole synthetic epidemics.
//!
//! Every sampler takes an explicit RNG. [`SimRng`] is a ChaCha stream cipher
//! generator; independent replicate streams come from [`stream_rng`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, Design};
use crate::likelihood::EpiParams;
use crate::model::{self, CompartmentState, ModelError, StepNoise};

pub type SimRng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`. Streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("infeasible initial state: {0}")]
    InitialState(String),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("horizon must be at least 1 and at most the design window of {n_days} days, got {horizon}")]
    Horizon { horizon: usize, n_days: usize },
}

/// Standard deviations of the mean-one gamma noise on the detection and death
/// flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub v_c: f64,
    pub v_d: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { v_c: 0.1, v_d: 0.1 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(self.v_c > 0.0 && self.v_d > 0.0) || !self.v_c.is_finite() || !self.v_d.is_finite() {
            return Err(SimulationError::InvalidNoise(format!(
                "v_c and v_d must be positive, got {} and {}",
                self.v_c, self.v_d
            )));
        }
        Ok(())
    }

    /// `(shape, rate)` of the gamma law for `eps_c`; both equal `1 / v_c^2`.
    pub fn shape_rate_c(&self) -> (f64, f64) {
        let k = 1.0 / (self.v_c * self.v_c);
        (k, k)
    }

    pub fn shape_rate_d(&self) -> (f64, f64) {
        let k = 1.0 / (self.v_d * self.v_d);
        (k, k)
    }
}

fn gamma_mean_one<R: Rng + ?Sized>(v: f64, rng: &mut R) -> f64 {
    let k = 1.0 / (v * v);
    Gamma::new(k, 1.0 / k)
        .expect("validated noise spec")
        .sample(rng)
}

pub fn sample_step_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> StepNoise {
    StepNoise {
        eps_c: gamma_mean_one(spec.v_c, rng),
        eps_d: gamma_mean_one(spec.v_d, rng),
    }
}

/// Negative-binomial draw with mean `mu` and variance `mu (1 + mu / phi)`,
/// as a Poisson-gamma mixture. `mu = 0` is a point mass at zero.
pub fn sample_observation<R: Rng + ?Sized>(mu: f64, phi: f64, rng: &mut R) -> u64 {
    assert!(mu >= 0.0 && phi > 0.0, "mu >= 0 and phi > 0 required");
    if mu == 0.0 {
        return 0;
    }
    let lambda = Gamma::new(phi, mu / phi).expect("phi > 0").sample(rng);
    if !(lambda > 0.0) {
        return 0;
    }
    Poisson::new(lambda).expect("lambda > 0").sample(rng) as u64
}

/// Ground truth of one simulated epidemic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEpidemic {
    /// `horizon + 1` states, the first being the initial state.
    pub states: Vec<CompartmentState>,
    pub noises: Vec<StepNoise>,
    /// Latent new detections `mu_c(t)` (noise included).
    pub mu_c: Vec<f64>,
    /// Latent new deaths `mu_d(t)`.
    pub mu_d: Vec<f64>,
    pub observed_cases: Vec<u64>,
    pub observed_deaths: Vec<u64>,
    /// Generating parameters, with the drawn noise written into
    /// `eps_c` / `eps_d`.
    pub true_params: EpiParams,
}

impl SyntheticEpidemic {
    pub fn horizon(&self) -> usize {
        self.observed_cases.len()
    }
}

/// Simulates `horizon` days: draws the process noise, advances the states
/// and draws negative-binomial counts around the latent flows.
pub fn simulate_epidemic<R: Rng + ?Sized>(
    params: &EpiParams,
    design: &Design,
    init: &CompartmentState,
    horizon: usize,
    noise_spec: &NoiseSpec,
    rng: &mut R,
) -> Result<SyntheticEpidemic, SimulationError> {
    noise_spec.validate()?;
    init.validate()?;
    if horizon == 0 || horizon > design.n_days() {
        return Err(SimulationError::Horizon {
            horizon,
            n_days: design.n_days(),
        });
    }
    let noises: Vec<StepNoise> = (0..horizon)
        .map(|_| sample_step_noise(noise_spec, rng))
        .collect();
    let mut truth = params.clone();
    truth.eps_c = noises.iter().map(|n| n.eps_c).collect();
    truth.eps_d = noises.iter().map(|n| n.eps_d).collect();

    let mut states = Vec::with_capacity(horizon + 1);
    let mut mu_c = Vec::with_capacity(horizon);
    let mut mu_d = Vec::with_capacity(horizon);
    let mut observed_cases = Vec::with_capacity(horizon);
    let mut observed_deaths = Vec::with_capacity(horizon);
    let mut state = *init;
    states.push(state);
    for (t, noise) in noises.iter().enumerate() {
        let rates = design.rates(t, &truth)?;
        let (next, flows) = model::step_with_flows(&state, &rates, noise)?;
        mu_c.push(flows.detection);
        mu_d.push(flows.death);
        observed_cases.push(sample_observation(flows.detection, truth.phi_c, rng));
        observed_deaths.push(sample_observation(flows.death, truth.phi_d, rng));
        states.push(next);
        state = next;
    }
    Ok(SyntheticEpidemic {
        states,
        noises,
        mu_c,
        mu_d,
        observed_cases,
        observed_deaths,
        true_params: truth,
    })
}
