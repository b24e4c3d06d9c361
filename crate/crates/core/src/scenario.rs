//! Ready-made synthetic scenarios with known ground truth, for recovery
//! experiments, examples and the `simulate` command.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisError, DetectionCurveParams, Design};
use crate::likelihood::{build_initial_state, EpiParams, LikelihoodError, Observations, ParamLayout};
use crate::model::CompartmentState;
use crate::stochastic::{simulate_epidemic, NoiseSpec, SimulationError, SyntheticEpidemic};

/// Everything needed to generate a synthetic epidemic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_days: usize,
    pub population: f64,
    pub i_d0: f64,
    pub df_beta: usize,
    pub df_omega: usize,
    /// Standardized covariate series, one per covariate.
    pub covariates: Vec<Vec<f64>>,
    pub noise: NoiseSpec,
    /// Generating parameters; the noise vectors are redrawn on simulation.
    pub params: EpiParams,
}

/// Rescales to mean 0 and (sample) SD 1.
pub fn standardize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    xs.iter().map(|x| (x - mean) / sd).collect()
}

/// A mobility-like covariate: a standardized oscillation whose zero crossings
/// sit on the interior knots of a linear transmission spline with `df` basis
/// functions over `n_days`. A piecewise-linear curve through those knots cannot
/// follow it, so its coefficient is identified by the data rather than traded
/// off against the spline.
pub fn mobility_like_covariate(n_days: usize, df: usize) -> Vec<f64> {
    let spacing = (n_days - 1) as f64 / df as f64;
    let raw: Vec<f64> = (0..n_days)
        .map(|t| (PI * t as f64 / spacing).sin())
        .collect();
    standardize(&raw)
}

impl Scenario {
    /// Ninety days in a population of 100,000 with one covariate whose true
    /// coefficient is 0.4. Transmission starts near R0e = 1.8, drops below 1
    /// around day 35 and drifts back to about 1.
    pub fn desk_scale() -> Scenario {
        Scenario::with_days(90)
    }

    /// The desk-scale scenario over a window of `n_days` (at least 12).
    pub fn with_days(n_days: usize) -> Scenario {
        Scenario::with_design(n_days, 10.min(n_days / 3), 5.min(n_days / 3))
    }

    /// The desk-scale transmission profile and parameters on a design with
    /// `df_beta` transmission and `df_omega` death-fraction basis functions.
    pub fn with_design(n_days: usize, df_beta: usize, df_omega: usize) -> Scenario {
        // Relative transmission at the interior and end knots, as multiples of
        // the day-0 level.
        let profile = [1.0, 0.95, 0.75, 0.53, 0.47, 0.5, 0.58, 0.64, 0.61, 0.56];
        let xi_beta = (0..df_beta)
            .map(|k| {
                let pos = (k + 1) as f64 / df_beta as f64 * (profile.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(profile.len() - 1);
                let w = pos - lo as f64;
                ((1.0 - w) * profile[lo] + w * profile[hi]).ln()
            })
            .collect();
        let params = EpiParams {
            kappa: 5.0,
            e_frac: 0.4,
            tau: 0.5,
            alpha: 0.35,
            eta0: 1.0 / 2.8,
            nu: 1.0 / 7.0,
            gamma0: 1.0 / 21.0,
            delta0: 1.0 / 14.0,
            detection: DetectionCurveParams {
                a_psi: 0.75,
                b_psi: 0.375,
                c_psi: 0.05,
            },
            zeta_beta: (1.8f64 / 7.4).ln(),
            xi_beta,
            xi_theta: vec![0.4],
            sigma_beta: 0.5,
            zeta_omega: -1.0,
            xi_omega: (0..df_omega).map(|k| 0.1 * k as f64 - 0.2).collect(),
            sigma_omega: 0.5,
            phi_c: 0.5,
            phi_d: 0.5,
            eps_c: vec![1.0; n_days],
            eps_d: vec![1.0; n_days],
        };
        Scenario {
            n_days,
            population: 1e5,
            i_d0: 20.0,
            df_beta,
            df_omega,
            covariates: vec![mobility_like_covariate(n_days, df_beta)],
            noise: NoiseSpec::default(),
            params,
        }
    }

    pub fn design(&self) -> Result<Design, BasisError> {
        Design::new(self.n_days, self.df_beta, self.df_omega, self.covariates.clone())
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.n_days, self.df_beta, self.covariates.len(), self.df_omega)
    }

    pub fn initial_state(&self) -> Result<CompartmentState, LikelihoodError> {
        build_initial_state(self.i_d0, self.population, self.params.kappa, self.params.e_frac)
    }

    /// Draws one epidemic: fresh process noise and observations.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SyntheticEpidemic, SimulationError> {
        let init = self
            .initial_state()
            .map_err(|e| SimulationError::InitialState(e.to_string()))?;
        simulate_epidemic(&self.params, &self.design()?, &init, self.n_days, &self.noise, rng)
    }

    /// Observed series of a simulated epidemic in the form the likelihood
    /// takes.
    pub fn observations(&self, sim: &SyntheticEpidemic) -> Observations {
        Observations {
            cases: sim.observed_cases.clone(),
            deaths: sim.observed_deaths.clone(),
            population: self.population,
            i_d0: self.i_d0,
        }
    }
}
