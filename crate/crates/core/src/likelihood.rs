//! Parameter vector, priors, the unconstrained parameterization and the
//! joint log-posterior with its exact gradient.

use std::cell::RefCell;

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, Normal as NormalDist};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StdNormal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::ad::{Real, Tape, Var};
use crate::basis::{BasisError, DetectionCurveParams, Design};
use crate::model::{self, CompartmentState, ModelError, StepNoise};
use crate::sampler::{DensityError, LogDensity};
use crate::stochastic::{NoiseSpec, SimRng};

#[derive(Debug, Error)]
pub enum LikelihoodError {
    #[error("population {n0} cannot hold (1 + kappa) * I^d(0) = {needed}")]
    InfeasiblePopulation { n0: f64, needed: f64 },
    #[error("parameter vector has length {got}, layout expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("data has {got} days, design expects {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("non-finite log-posterior: {0}")]
    NonFinite(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Prior distribution of one scalar parameter. Gamma is shape/rate;
/// `PositiveNormal` is a normal restricted to `(0, inf)` and normalized there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Prior {
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, rate: f64 },
    Normal { mean: f64, sd: f64 },
    PositiveNormal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

fn truncated_normal_moments(mu: f64, sigma: f64) -> (f64, f64) {
    let z = StdNormal::standard();
    let alpha = -mu / sigma;
    let tail = z.sf(alpha);
    let lambda = z.pdf(alpha) / tail;
    let mean = mu + sigma * lambda;
    let var = sigma * sigma * (1.0 + alpha * lambda - lambda * lambda);
    (mean, var.max(0.0).sqrt())
}

impl Prior {
    pub fn validate(&self) -> Result<(), LikelihoodError> {
        let ok = match *self {
            Prior::Beta { a, b } => a > 0.0 && b > 0.0,
            Prior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            Prior::Normal { mean, sd } | Prior::PositiveNormal { mean, sd } => {
                mean.is_finite() && sd > 0.0
            }
            Prior::Uniform { lo, hi } => lo < hi,
        };
        if ok && self.mean().is_finite() && self.sd().is_finite() {
            Ok(())
        } else {
            Err(LikelihoodError::InvalidPrior(format!("{self:?}")))
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            Prior::Beta { .. } => x > 0.0 && x < 1.0,
            Prior::Gamma { .. } | Prior::PositiveNormal { .. } => x > 0.0 && x.is_finite(),
            Prior::Normal { .. } => x.is_finite(),
            Prior::Uniform { lo, hi } => x > lo && x < hi,
        }
    }

    /// Log-density at `x`, assumed inside the support.
    pub fn ln_pdf<T: Real>(&self, x: T) -> T {
        match *self {
            Prior::Beta { a, b } => {
                x.ln() * (a - 1.0) + (T::cst(1.0) - x).ln() * (b - 1.0) - ln_beta(a, b)
            }
            Prior::Gamma { shape, rate } => {
                x.ln() * (shape - 1.0) - x * rate + (shape * rate.ln() - ln_gamma(shape))
            }
            Prior::Normal { mean, sd } => {
                ((x - mean) / sd).square() * -0.5 - (sd.ln() + HALF_LN_2PI)
            }
            Prior::PositiveNormal { mean, sd } => {
                let mass = StdNormal::standard().sf(-mean / sd);
                ((x - mean) / sd).square() * -0.5 - (sd.ln() + HALF_LN_2PI + mass.ln())
            }
            Prior::Uniform { lo, hi } => T::cst(-(hi - lo).ln()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Prior::Beta { a, b } => a / (a + b),
            Prior::Gamma { shape, rate } => shape / rate,
            Prior::Normal { mean, .. } => mean,
            Prior::PositiveNormal { mean, sd } => truncated_normal_moments(mean, sd).0,
            Prior::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Prior::Beta { a, b } => ((a * b) / ((a + b).powi(2) * (a + b + 1.0))).sqrt(),
            Prior::Gamma { shape, rate } => shape.sqrt() / rate,
            Prior::Normal { sd, .. } => sd,
            Prior::PositiveNormal { mean, sd } => truncated_normal_moments(mean, sd).1,
            Prior::Uniform { lo, hi } => (hi - lo) / 12f64.sqrt(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Beta { a, b } => BetaDist::new(a, b).expect("validated prior").sample(rng),
            Prior::Gamma { shape, rate } => GammaDist::new(shape, 1.0 / rate)
                .expect("validated prior")
                .sample(rng),
            Prior::Normal { mean, sd } => NormalDist::new(mean, sd)
                .expect("validated prior")
                .sample(rng),
            Prior::PositiveNormal { mean, sd } => {
                let normal = NormalDist::new(mean, sd).expect("validated prior");
                loop {
                    let x = normal.sample(rng);
                    if x > 0.0 {
                        return x;
                    }
                }
            }
            Prior::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }

    /// Same family with the same mean and the standard deviation divided by
    /// `sqrt(ratio)`; hyperparameters are re-solved from the two moments.
    pub fn scaled(&self, ratio: f64) -> Result<Prior, LikelihoodError> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(LikelihoodError::InvalidPrior(format!(
                "scale ratio must be positive, got {ratio}"
            )));
        }
        let (m, s) = (self.mean(), self.sd() / ratio.sqrt());
        let scaled = match *self {
            Prior::Beta { .. } => {
                let k = m * (1.0 - m) / (s * s) - 1.0;
                Prior::Beta {
                    a: m * k,
                    b: (1.0 - m) * k,
                }
            }
            Prior::Gamma { .. } => Prior::Gamma {
                shape: (m / s).powi(2),
                rate: m / (s * s),
            },
            Prior::Normal { mean, .. } => Prior::Normal { mean, sd: s },
            Prior::PositiveNormal { mean, sd } => {
                let (mu, sigma) = solve_truncated_normal(m, s, mean, sd / ratio.sqrt())?;
                Prior::PositiveNormal { mean: mu, sd: sigma }
            }
            Prior::Uniform { .. } => {
                let half = s * 3f64.sqrt();
                Prior::Uniform {
                    lo: m - half,
                    hi: m + half,
                }
            }
        };
        scaled.validate()?;
        Ok(scaled)
    }
}

/// Location and scale of the normal whose restriction to `(0, inf)` has the
/// given mean and standard deviation (Newton iteration on log-scale).
fn solve_truncated_normal(
    target_mean: f64,
    target_sd: f64,
    mu0: f64,
    sigma0: f64,
) -> Result<(f64, f64), LikelihoodError> {
    let (mut mu, mut log_sigma) = (mu0, sigma0.ln());
    let residual = |mu: f64, ls: f64| {
        let (m, s) = truncated_normal_moments(mu, ls.exp());
        [m - target_mean, s - target_sd]
    };
    for _ in 0..100 {
        let r = residual(mu, log_sigma);
        if r[0].abs().max(r[1].abs()) < 1e-12 * target_mean.abs().max(target_sd) {
            return Ok((mu, log_sigma.exp()));
        }
        let h = 1e-7;
        let rm = residual(mu + h, log_sigma);
        let rs = residual(mu, log_sigma + h);
        let j = [
            [(rm[0] - r[0]) / h, (rs[0] - r[0]) / h],
            [(rm[1] - r[1]) / h, (rs[1] - r[1]) / h],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        mu -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        log_sigma -= (j[0][0] * r[1] - j[1][0] * r[0]) / det;
    }
    Err(LikelihoodError::InvalidPrior(format!(
        "no positive-normal prior has mean {target_mean} and sd {target_sd}"
    )))
}

/// One prior per scalar parameter plus the process-noise scale used for the
/// per-day noise factors. Defaults follow the published prior tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub kappa: Prior,
    pub e_frac: Prior,
    pub tau: Prior,
    pub alpha: Prior,
    pub eta0: Prior,
    pub nu: Prior,
    pub gamma0: Prior,
    pub delta0: Prior,
    pub a_psi: Prior,
    /// Prior on `b_psi / a_psi`.
    pub psi_ratio: Prior,
    pub c_psi: Prior,
    pub zeta_beta: Prior,
    pub sigma_beta: Prior,
    pub zeta_omega: Prior,
    pub sigma_omega: Prior,
    pub phi_c: Prior,
    pub phi_d: Prior,
    pub noise: NoiseSpec,
    /// Case-count ratio `r`; clinical priors get their SD divided by
    /// `sqrt(r)`.
    pub scale_ratio: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let unit = Prior::Uniform { lo: 0.0, hi: 1.0 };
        let spread = Prior::PositiveNormal { mean: 0.5, sd: 0.1 };
        let dispersion = Prior::Gamma {
            shape: 50.0,
            rate: 100.0,
        };
        PriorConfig {
            kappa: Prior::Gamma {
                shape: 25.0,
                rate: 5.0,
            },
            e_frac: unit,
            tau: unit,
            alpha: Prior::Beta { a: 31.5, b: 58.5 },
            eta0: Prior::Beta { a: 32.4, b: 58.4 },
            nu: Prior::Beta { a: 6.9, b: 41.1 },
            gamma0: Prior::Beta { a: 21.5, b: 431.0 },
            delta0: Prior::Beta { a: 47.3, b: 615.0 },
            a_psi: Prior::Beta { a: 55.5, b: 18.5 },
            psi_ratio: unit,
            c_psi: Prior::Gamma {
                shape: 5.0,
                rate: 100.0,
            },
            zeta_beta: Prior::Normal { mean: 0.0, sd: 1.0 },
            sigma_beta: spread,
            zeta_omega: Prior::Normal {
                mean: -1.0,
                sd: 1.0,
            },
            sigma_omega: spread,
            phi_c: dispersion,
            phi_d: dispersion,
            noise: NoiseSpec::default(),
            scale_ratio: 1.0,
        }
    }
}

impl PriorConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Named entries in a stable order.
    pub fn entries(&self) -> [(&'static str, Prior); 17] {
        [
            ("kappa", self.kappa),
            ("e_frac", self.e_frac),
            ("tau", self.tau),
            ("alpha", self.alpha),
            ("eta0", self.eta0),
            ("nu", self.nu),
            ("gamma0", self.gamma0),
            ("delta0", self.delta0),
            ("a_psi", self.a_psi),
            ("psi_ratio", self.psi_ratio),
            ("c_psi", self.c_psi),
            ("zeta_beta", self.zeta_beta),
            ("sigma_beta", self.sigma_beta),
            ("zeta_omega", self.zeta_omega),
            ("sigma_omega", self.sigma_omega),
            ("phi_c", self.phi_c),
            ("phi_d", self.phi_d),
        ]
    }

    pub fn validate(&self) -> Result<(), LikelihoodError> {
        for (_, p) in self.entries() {
            p.validate()?;
        }
        self.noise
            .validate()
            .map_err(|e| LikelihoodError::InvalidPrior(e.to_string()))?;
        if !(self.scale_ratio > 0.0 && self.scale_ratio.is_finite()) {
            return Err(LikelihoodError::InvalidPrior(format!(
                "scale ratio must be positive, got {}",
                self.scale_ratio
            )));
        }
        Ok(())
    }

    /// The configuration with the clinical priors (alpha, eta0, nu, gamma0,
    /// delta0, a_psi) rescaled by `scale_ratio`, which is then reset to 1.
    pub fn resolved(&self) -> Result<PriorConfig, LikelihoodError> {
        self.validate()?;
        let r = self.scale_ratio;
        Ok(PriorConfig {
            alpha: self.alpha.scaled(r)?,
            eta0: self.eta0.scaled(r)?,
            nu: self.nu.scaled(r)?,
            gamma0: self.gamma0.scaled(r)?,
            delta0: self.delta0.scaled(r)?,
            a_psi: self.a_psi.scaled(r)?,
            scale_ratio: 1.0,
            ..self.clone()
        })
    }
}

/// The full parameter set. `eps_c` / `eps_d` hold one noise factor per
/// modeled day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpiParams<T = f64> {
    pub kappa: T,
    pub e_frac: T,
    pub tau: T,
    pub alpha: T,
    pub eta0: T,
    pub nu: T,
    pub gamma0: T,
    pub delta0: T,
    pub detection: DetectionCurveParams<T>,
    pub zeta_beta: T,
    pub xi_beta: Vec<T>,
    pub xi_theta: Vec<T>,
    pub sigma_beta: T,
    pub zeta_omega: T,
    pub xi_omega: Vec<T>,
    pub sigma_omega: T,
    pub phi_c: T,
    pub phi_d: T,
    pub eps_c: Vec<T>,
    pub eps_d: Vec<T>,
}

impl<T: Real> EpiParams<T> {
    /// Removal rate of never-detected infectious individuals,
    /// `(1/eta0 + 1/nu)^-1`.
    pub fn rho0(&self) -> T {
        self.eta0 * self.nu / (self.eta0 + self.nu)
    }

    pub fn noise(&self, t: usize) -> StepNoise<T> {
        StepNoise {
            eps_c: self.eps_c[t],
            eps_d: self.eps_d[t],
        }
    }

    pub fn values(&self) -> EpiParams<f64> {
        let v = |xs: &[T]| xs.iter().map(|x| x.value()).collect::<Vec<_>>();
        EpiParams {
            kappa: self.kappa.value(),
            e_frac: self.e_frac.value(),
            tau: self.tau.value(),
            alpha: self.alpha.value(),
            eta0: self.eta0.value(),
            nu: self.nu.value(),
            gamma0: self.gamma0.value(),
            delta0: self.delta0.value(),
            detection: DetectionCurveParams {
                a_psi: self.detection.a_psi.value(),
                b_psi: self.detection.b_psi.value(),
                c_psi: self.detection.c_psi.value(),
            },
            zeta_beta: self.zeta_beta.value(),
            xi_beta: v(&self.xi_beta),
            xi_theta: v(&self.xi_theta),
            sigma_beta: self.sigma_beta.value(),
            zeta_omega: self.zeta_omega.value(),
            xi_omega: v(&self.xi_omega),
            sigma_omega: self.sigma_omega.value(),
            phi_c: self.phi_c.value(),
            phi_d: self.phi_d.value(),
            eps_c: v(&self.eps_c),
            eps_d: v(&self.eps_d),
        }
    }
}

impl EpiParams<f64> {
    /// One draw from the priors, with the noise factors drawn from their
    /// gamma laws.
    pub fn sample_prior<R: Rng + ?Sized>(
        layout: &ParamLayout,
        priors: &PriorConfig,
        rng: &mut R,
    ) -> EpiParams {
        let sigma_beta = priors.sigma_beta.sample(rng);
        let sigma_omega = priors.sigma_omega.sample(rng);
        let normals = |n: usize, sd: f64, rng: &mut R| {
            let d = NormalDist::new(0.0, sd).expect("positive sd");
            (0..n).map(|_| d.sample(rng)).collect::<Vec<_>>()
        };
        let a_psi = priors.a_psi.sample(rng);
        let psi_ratio = priors.psi_ratio.sample(rng);
        let mut p = EpiParams {
            kappa: priors.kappa.sample(rng),
            e_frac: priors.e_frac.sample(rng),
            tau: priors.tau.sample(rng),
            alpha: priors.alpha.sample(rng),
            eta0: priors.eta0.sample(rng),
            nu: priors.nu.sample(rng),
            gamma0: priors.gamma0.sample(rng),
            delta0: priors.delta0.sample(rng),
            detection: DetectionCurveParams {
                a_psi,
                b_psi: a_psi * psi_ratio,
                c_psi: priors.c_psi.sample(rng),
            },
            zeta_beta: priors.zeta_beta.sample(rng),
            xi_beta: normals(layout.n_beta, sigma_beta, rng),
            xi_theta: normals(layout.n_theta, sigma_beta, rng),
            sigma_beta,
            zeta_omega: priors.zeta_omega.sample(rng),
            xi_omega: normals(layout.n_omega, sigma_omega, rng),
            sigma_omega,
            phi_c: priors.phi_c.sample(rng),
            phi_d: priors.phi_d.sample(rng),
            eps_c: Vec::new(),
            eps_d: Vec::new(),
        };
        let (kc, _) = priors.noise.shape_rate_c();
        let (kd, _) = priors.noise.shape_rate_d();
        let gc = GammaDist::new(kc, 1.0 / kc).expect("validated noise");
        let gd = GammaDist::new(kd, 1.0 / kd).expect("validated noise");
        p.eps_c = (0..layout.n_days).map(|_| gc.sample(rng)).collect();
        p.eps_d = (0..layout.n_days).map(|_| gd.sample(rng)).collect();
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Log,
    Logit,
}

impl Transform {
    /// Constrained value and log-Jacobian of the map from `u`.
    fn forward<T: Real>(self, u: T) -> (T, T) {
        match self {
            Transform::Log => (u.exp(), u),
            Transform::Logit => (u.logistic(), -(u.softplus() + (-u).softplus())),
        }
    }

    fn inverse(self, x: f64) -> f64 {
        match self {
            Transform::Log => x.ln(),
            Transform::Logit => (x / (1.0 - x)).ln(),
        }
    }
}

const SCALARS: [(&str, Transform); 11] = [
    ("kappa", Transform::Log),
    ("e_frac", Transform::Logit),
    ("tau", Transform::Logit),
    ("alpha", Transform::Logit),
    ("eta0", Transform::Logit),
    ("nu", Transform::Logit),
    ("gamma0", Transform::Logit),
    ("delta0", Transform::Logit),
    ("a_psi", Transform::Logit),
    // Unconstrained coordinate of b_psi / a_psi.
    ("b_psi", Transform::Logit),
    ("c_psi", Transform::Log),
];

/// Position of every parameter in the flat unconstrained vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub n_days: usize,
    pub n_beta: usize,
    pub n_theta: usize,
    pub n_omega: usize,
}

impl ParamLayout {
    pub fn new(n_days: usize, n_beta: usize, n_theta: usize, n_omega: usize) -> Self {
        ParamLayout {
            n_days,
            n_beta,
            n_theta,
            n_omega,
        }
    }

    pub fn for_design(design: &Design) -> Self {
        ParamLayout::new(
            design.n_days(),
            design.basis_beta.n_basis,
            design.n_covariates(),
            design.basis_omega.n_basis,
        )
    }

    fn zeta_beta(&self) -> usize {
        SCALARS.len()
    }
    fn xi_beta(&self) -> usize {
        self.zeta_beta() + 1
    }
    fn xi_theta(&self) -> usize {
        self.xi_beta() + self.n_beta
    }
    fn sigma_beta(&self) -> usize {
        self.xi_theta() + self.n_theta
    }
    fn zeta_omega(&self) -> usize {
        self.sigma_beta() + 1
    }
    fn xi_omega(&self) -> usize {
        self.zeta_omega() + 1
    }
    fn sigma_omega(&self) -> usize {
        self.xi_omega() + self.n_omega
    }
    fn phi_c(&self) -> usize {
        self.sigma_omega() + 1
    }
    fn eps_c(&self) -> usize {
        self.phi_c() + 2
    }
    fn eps_d(&self) -> usize {
        self.eps_c() + self.n_days
    }

    pub fn dim(&self) -> usize {
        self.eps_d() + self.n_days
    }

    /// Stable parameter names, one per coordinate; `b_psi` is reported on the
    /// constrained scale.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = SCALARS.iter().map(|(n, _)| n.to_string()).collect();
        fn indexed(prefix: &'static str, n: usize) -> impl Iterator<Item = String> {
            (1..=n).map(move |i| format!("{prefix}[{i}]"))
        }
        names.push("zeta_beta".into());
        names.extend(indexed("xi_beta", self.n_beta));
        names.extend(indexed("xi_theta", self.n_theta));
        names.push("sigma_beta".into());
        names.push("zeta_omega".into());
        names.extend(indexed("xi_omega", self.n_omega));
        names.push("sigma_omega".into());
        names.push("phi_c".into());
        names.push("phi_d".into());
        names.extend(indexed("eps_c", self.n_days));
        names.extend(indexed("eps_d", self.n_days));
        names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| n == name)
    }

    /// Maps an unconstrained vector to parameters, returning the log-Jacobian
    /// of the transform with respect to `(kappa, ..., b_psi / a_psi, ...)`.
    pub fn constrain<T: Real>(&self, u: &[T]) -> Result<(EpiParams<T>, T), LikelihoodError> {
        if u.len() != self.dim() {
            return Err(LikelihoodError::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        let mut log_jac = Vec::with_capacity(SCALARS.len() + 6 + 2 * self.n_days);
        let mut s = [T::cst(0.0); 11];
        for (i, (_, tr)) in SCALARS.iter().enumerate() {
            let (x, lj) = tr.forward(u[i]);
            s[i] = x;
            log_jac.push(lj);
        }
        let mut positive = |i: usize| {
            let (x, lj) = Transform::Log.forward(u[i]);
            log_jac.push(lj);
            x
        };
        let sigma_beta = positive(self.sigma_beta());
        let sigma_omega = positive(self.sigma_omega());
        let phi_c = positive(self.phi_c());
        let phi_d = positive(self.phi_c() + 1);
        let eps_c: Vec<T> = (0..self.n_days).map(|t| positive(self.eps_c() + t)).collect();
        let eps_d: Vec<T> = (0..self.n_days).map(|t| positive(self.eps_d() + t)).collect();
        let params = EpiParams {
            kappa: s[0],
            e_frac: s[1],
            tau: s[2],
            alpha: s[3],
            eta0: s[4],
            nu: s[5],
            gamma0: s[6],
            delta0: s[7],
            detection: DetectionCurveParams {
                a_psi: s[8],
                b_psi: s[8] * s[9],
                c_psi: s[10],
            },
            zeta_beta: u[self.zeta_beta()],
            xi_beta: u[self.xi_beta()..self.xi_theta()].to_vec(),
            xi_theta: u[self.xi_theta()..self.sigma_beta()].to_vec(),
            sigma_beta,
            zeta_omega: u[self.zeta_omega()],
            xi_omega: u[self.xi_omega()..self.sigma_omega()].to_vec(),
            sigma_omega,
            phi_c,
            phi_d,
            eps_c,
            eps_d,
        };
        Ok((params, T::sum(&log_jac)))
    }

    pub fn unconstrain(&self, p: &EpiParams) -> Result<Vec<f64>, LikelihoodError> {
        for (expected, got) in [
            (self.n_beta, p.xi_beta.len()),
            (self.n_theta, p.xi_theta.len()),
            (self.n_omega, p.xi_omega.len()),
            (self.n_days, p.eps_c.len()),
            (self.n_days, p.eps_d.len()),
        ] {
            if expected != got {
                return Err(LikelihoodError::DimensionMismatch { expected, got });
            }
        }
        let d = &p.detection;
        let scalars = [
            p.kappa,
            p.e_frac,
            p.tau,
            p.alpha,
            p.eta0,
            p.nu,
            p.gamma0,
            p.delta0,
            d.a_psi,
            d.b_psi / d.a_psi,
            d.c_psi,
        ];
        let mut u: Vec<f64> = SCALARS
            .iter()
            .zip(scalars)
            .map(|((_, tr), x)| tr.inverse(x))
            .collect();
        u.push(p.zeta_beta);
        u.extend(&p.xi_beta);
        u.extend(&p.xi_theta);
        u.push(p.sigma_beta.ln());
        u.push(p.zeta_omega);
        u.extend(&p.xi_omega);
        u.push(p.sigma_omega.ln());
        u.push(p.phi_c.ln());
        u.push(p.phi_d.ln());
        u.extend(p.eps_c.iter().map(|e| e.ln()));
        u.extend(p.eps_d.iter().map(|e| e.ln()));
        Ok(u)
    }

    /// Constrained values in the order of [`ParamLayout::names`].
    pub fn flatten(&self, p: &EpiParams) -> Vec<f64> {
        let d = &p.detection;
        let mut v = vec![
            p.kappa, p.e_frac, p.tau, p.alpha, p.eta0, p.nu, p.gamma0, p.delta0, d.a_psi,
            d.b_psi, d.c_psi, p.zeta_beta,
        ];
        v.extend(&p.xi_beta);
        v.extend(&p.xi_theta);
        v.push(p.sigma_beta);
        v.push(p.zeta_omega);
        v.extend(&p.xi_omega);
        v.push(p.sigma_omega);
        v.push(p.phi_c);
        v.push(p.phi_d);
        v.extend(&p.eps_c);
        v.extend(&p.eps_d);
        v
    }

    /// Inverse of [`ParamLayout::flatten`].
    pub fn unflatten(&self, v: &[f64]) -> Result<EpiParams, LikelihoodError> {
        if v.len() != self.dim() {
            return Err(LikelihoodError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let mut u = v.to_vec();
        for (i, (_, tr)) in SCALARS.iter().enumerate() {
            u[i] = if i == 9 { tr.inverse(v[9] / v[8]) } else { tr.inverse(v[i]) };
        }
        for i in [self.sigma_beta(), self.sigma_omega(), self.phi_c(), self.phi_c() + 1] {
            u[i] = v[i].ln();
        }
        for x in &mut u[self.eps_c()..] {
            *x = x.ln();
        }
        Ok(self.constrain(&u)?.0)
    }
}

/// Initial state from the detected count on day zero: `E + I^u = kappa I^d`
/// split by `e_frac`, nobody removed yet.
pub fn build_initial_state<T: Real>(
    i_d0: f64,
    n0: f64,
    kappa: T,
    e_frac: T,
) -> Result<CompartmentState<T>, LikelihoodError> {
    let hidden = kappa * i_d0;
    let needed = i_d0 + hidden.value();
    if !(i_d0 >= 0.0 && n0 > needed) {
        return Err(LikelihoodError::InfeasiblePopulation { n0, needed });
    }
    let e = e_frac * hidden;
    let zero = T::cst(0.0);
    Ok(CompartmentState {
        s: -hidden + (n0 - i_d0),
        e,
        i_u: hidden - e,
        r_u: zero,
        i_d: T::cst(i_d0),
        u_d: zero,
        r_d: zero,
        d_d: zero,
    })
}

/// Log-pmf of a count under the negative binomial with mean `mu` and
/// concentration `phi` (variance `mu + mu^2 / phi`). `mu = 0` is a point
/// mass at zero.
pub fn nb_log_pmf<T: Real>(y: u64, mu: T, phi: T) -> T {
    let m = mu.value();
    if m <= 0.0 {
        return T::cst(if y == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    let total = phi + mu;
    let log_total = total.ln();
    if y == 0 {
        return phi * (phi.ln() - log_total);
    }
    let yf = y as f64;
    (phi + yf).ln_gamma() - phi.ln_gamma() - ln_gamma(yf + 1.0)
        + phi * (phi.ln() - log_total)
        + (mu.ln() - log_total) * yf
}

/// Observed data over the modeling window. Window day `t` holds the counts
/// produced by the transition into that day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub cases: Vec<u64>,
    pub deaths: Vec<u64>,
    pub population: f64,
    pub i_d0: f64,
}

pub fn log_prior<T: Real>(params: &EpiParams<T>, priors: &PriorConfig) -> T {
    let ninf = T::cst(f64::NEG_INFINITY);
    let d = &params.detection;
    let scalars = [
        (priors.kappa, params.kappa),
        (priors.e_frac, params.e_frac),
        (priors.tau, params.tau),
        (priors.alpha, params.alpha),
        (priors.eta0, params.eta0),
        (priors.nu, params.nu),
        (priors.gamma0, params.gamma0),
        (priors.delta0, params.delta0),
        (priors.a_psi, d.a_psi),
        (priors.psi_ratio, d.b_psi / d.a_psi),
        (priors.c_psi, d.c_psi),
        (priors.zeta_beta, params.zeta_beta),
        (priors.sigma_beta, params.sigma_beta),
        (priors.zeta_omega, params.zeta_omega),
        (priors.sigma_omega, params.sigma_omega),
        (priors.phi_c, params.phi_c),
        (priors.phi_d, params.phi_d),
    ];
    if !d.is_valid() || params.tau.value() > 1.0 || params.tau.value() < 0.0 {
        return ninf;
    }
    let mut terms = Vec::with_capacity(scalars.len() + 8);
    for (prior, x) in scalars {
        if !prior.in_support(x.value()) {
            return ninf;
        }
        terms.push(prior.ln_pdf(x));
    }
    let centered = |xs: &[T], sd: T| -> T {
        if xs.is_empty() {
            return T::cst(0.0);
        }
        let sq: Vec<T> = xs.iter().map(|x| x.square()).collect();
        T::sum(&sq) / sd.square() * -0.5 - (sd.ln() + HALF_LN_2PI) * xs.len() as f64
    };
    terms.push(centered(&params.xi_beta, params.sigma_beta));
    terms.push(centered(&params.xi_theta, params.sigma_beta));
    terms.push(centered(&params.xi_omega, params.sigma_omega));
    for (eps, k) in [
        (&params.eps_c, priors.noise.shape_rate_c().0),
        (&params.eps_d, priors.noise.shape_rate_d().0),
    ] {
        if eps.iter().any(|e| !(e.value() > 0.0)) {
            return ninf;
        }
        let logs: Vec<T> = eps.iter().map(|e| e.ln()).collect();
        let n = eps.len() as f64;
        terms.push(T::sum(&logs) * (k - 1.0) - T::sum(eps) * k + n * (k * k.ln() - ln_gamma(k)));
    }
    T::sum(&terms)
}

/// Runs the dynamics over the window and sums the negative-binomial
/// log-likelihood of both series. Negative infinity if the initial state is
/// infeasible or the active population dies out.
pub fn log_likelihood<T: Real>(
    params: &EpiParams<T>,
    data: &Observations,
    design: &Design,
) -> Result<T, LikelihoodError> {
    let n = design.n_days();
    for len in [data.cases.len(), data.deaths.len(), params.eps_c.len(), params.eps_d.len()] {
        if len != n {
            return Err(LikelihoodError::DataLength {
                expected: n,
                got: len,
            });
        }
    }
    let ninf = T::cst(f64::NEG_INFINITY);
    let mut state = match build_initial_state(data.i_d0, data.population, params.kappa, params.e_frac)
    {
        Ok(s) => s,
        Err(_) => return Ok(ninf),
    };
    let mut terms = Vec::with_capacity(2 * n);
    for t in 0..n {
        let rates = design.rates(t, params)?;
        let (next, flows) = match model::step_with_flows(&state, &rates, &params.noise(t)) {
            Ok(r) => r,
            Err(ModelError::DegenerateState) => return Ok(ninf),
            Err(e) => return Err(e.into()),
        };
        terms.push(nb_log_pmf(data.cases[t], flows.detection, params.phi_c));
        terms.push(nb_log_pmf(data.deaths[t], flows.death, params.phi_d));
        state = next;
    }
    Ok(T::sum(&terms))
}

/// Log prior plus log likelihood. Support violations give negative
/// infinity; NaN is an error.
pub fn log_posterior<T: Real>(
    params: &EpiParams<T>,
    data: &Observations,
    design: &Design,
    priors: &PriorConfig,
) -> Result<T, LikelihoodError> {
    let lp = log_prior(params, priors);
    if lp.value() == f64::NEG_INFINITY {
        return Ok(lp);
    }
    let lp = lp + log_likelihood(params, data, design)?;
    if lp.value().is_nan() {
        return Err(LikelihoodError::NonFinite(
            "log-posterior evaluated to NaN".into(),
        ));
    }
    Ok(lp)
}

/// A fully specified posterior: data, design and resolved priors.
#[derive(Debug, Clone)]
pub struct EpiModel {
    pub data: Observations,
    pub design: Design,
    /// Priors with any case-count scaling already applied.
    pub priors: PriorConfig,
    pub layout: ParamLayout,
}

thread_local! {
    static TAPE: RefCell<Option<Tape>> = const { RefCell::new(None) };
}

impl EpiModel {
    pub fn new(data: Observations, design: Design, priors: &PriorConfig) -> Result<Self, LikelihoodError> {
        let layout = ParamLayout::for_design(&design);
        for len in [data.cases.len(), data.deaths.len()] {
            if len != design.n_days() {
                return Err(LikelihoodError::DataLength {
                    expected: design.n_days(),
                    got: len,
                });
            }
        }
        Ok(EpiModel {
            data,
            design,
            priors: priors.resolved()?,
            layout,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Log-posterior density of the unconstrained vector, Jacobian included.
    pub fn log_density(&self, u: &[f64]) -> Result<f64, LikelihoodError> {
        let (params, log_jac) = self.layout.constrain(u)?;
        let lp = log_posterior(&params, &self.data, &self.design, &self.priors)?;
        Ok(lp + log_jac)
    }

    /// Log density and its gradient with respect to `u`, written to `grad`.
    pub fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64, LikelihoodError> {
        TAPE.with(|cell| {
            let mut slot = cell.borrow_mut();
            let tape: &Tape = slot.get_or_insert_with(Tape::new);
            tape.clear();
            let vars: Vec<Var<'_>> = tape.vars(u);
            let (params, log_jac) = self.layout.constrain(&vars)?;
            let lp = log_posterior(&params, &self.data, &self.design, &self.priors)?;
            let total = lp + log_jac;
            let value = total.value();
            if value == f64::NEG_INFINITY {
                grad.iter_mut().for_each(|g| *g = 0.0);
                return Ok(value);
            }
            let g = tape.gradient(total, u.len());
            if g.iter().any(|x| !x.is_finite()) {
                return Err(LikelihoodError::NonFinite(format!(
                    "gradient not finite at log-density {value}"
                )));
            }
            grad.copy_from_slice(&g);
            Ok(value)
        })
    }

    /// Unconstrained draw from the priors.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = EpiParams::sample_prior(&self.layout, &self.priors, rng);
        self.layout
            .unconstrain(&p)
            .expect("prior draw matches layout")
    }
}

impl LogDensity for EpiModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DensityError> {
        EpiModel::log_density_grad(self, x, grad).map_err(|e| DensityError(e.to_string()))
    }

    fn initial_point(&self, rng: &mut SimRng) -> Vec<f64> {
        self.sample_initial(rng)
    }

    fn param_names(&self) -> Vec<String> {
        self.layout.names()
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let (p, _) = self.layout.constrain(x).expect("sampler keeps the dimension");
        self.layout.flatten(&p)
    }
}
