//! Spline bases over the modeling window and the time-varying rate curves
//! built from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::Real;
use crate::likelihood::EpiParams;
use crate::model::DailyRates;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("degrees of freedom must satisfy 2 <= df < n_days, got df={df}, n_days={n_days}")]
    InvalidDf { df: usize, n_days: usize },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("day {t} is outside the basis window of {n_days} days")]
    DayOutOfRange { t: usize, n_days: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    LinearBspline,
    NaturalCubic,
    PiecewiseConstant,
}

/// Basis functions evaluated on the integer days `0..n_days`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMatrix {
    pub kind: BasisKind,
    pub n_days: usize,
    pub n_basis: usize,
    /// Interior knots (or interior breakpoints) in day units.
    pub knots: Vec<f64>,
    /// Boundary knots, `[0, n_days - 1]`.
    pub boundary: [f64; 2],
    /// Row-major `n_days x n_basis`.
    pub values: Vec<f64>,
}

/// Type-7 quantile of the day grid `0..n_days` at probability `p`.
fn grid_quantile(n_days: usize, p: f64) -> f64 {
    (n_days - 1) as f64 * p
}

impl BasisMatrix {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_basis..(t + 1) * self.n_basis]
    }

    /// Evaluates the basis at an arbitrary (possibly fractional) day.
    pub fn evaluate_at(&self, t: f64) -> Vec<f64> {
        match self.kind {
            BasisKind::LinearBspline => linear_bspline_row(t, &self.full_knots()),
            BasisKind::NaturalCubic => natural_cubic_row(t, &self.full_knots()),
            BasisKind::PiecewiseConstant => piecewise_constant_row(t, &self.full_knots()),
        }
    }

    fn full_knots(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(self.knots.len() + 2);
        k.push(self.boundary[0]);
        k.extend_from_slice(&self.knots);
        k.push(self.boundary[1]);
        k
    }
}

/// Hat functions on `knots` (boundaries included), dropping the first so the
/// columns exclude the intercept.
fn linear_bspline_row(t: f64, knots: &[f64]) -> Vec<f64> {
    let m = knots.len();
    let mut full = vec![0.0; m];
    let t = t.clamp(knots[0], knots[m - 1]);
    // Locate the span [knots[j], knots[j+1]] containing t.
    let j = match knots.iter().rposition(|&k| k <= t) {
        Some(j) if j >= m - 1 => m - 2,
        Some(j) => j,
        None => 0,
    };
    let w = (t - knots[j]) / (knots[j + 1] - knots[j]);
    full[j] = 1.0 - w;
    full[j + 1] = w;
    full.remove(0);
    full
}

/// Natural cubic spline basis in truncated-power form, scaled to the window,
/// without the constant column. Linear beyond the boundary knots.
fn natural_cubic_row(t: f64, knots: &[f64]) -> Vec<f64> {
    let lo = knots[0];
    let span = knots[knots.len() - 1] - lo;
    let x = (t - lo) / span;
    let k: Vec<f64> = knots.iter().map(|v| (v - lo) / span).collect();
    let n = k.len();
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let d = |j: usize| (cube(x - k[j]) - cube(x - k[n - 1])) / (k[n - 1] - k[j]);
    let mut row = Vec::with_capacity(n - 1);
    row.push(x);
    let d_last = d(n - 2);
    for j in 0..n - 2 {
        row.push(d(j) - d_last);
    }
    row
}

/// Indicators of the intervals between consecutive breakpoints; the last
/// interval is closed on the right.
fn piecewise_constant_row(t: f64, breaks: &[f64]) -> Vec<f64> {
    let n = breaks.len() - 1;
    let mut row = vec![0.0; n];
    let j = (0..n)
        .find(|&j| t < breaks[j + 1])
        .unwrap_or(n - 1);
    row[j] = 1.0;
    row
}

/// Builds a `n_days x df` basis with knots at equally spaced quantiles of the
/// day grid.
pub fn build_basis(kind: BasisKind, n_days: usize, df: usize) -> Result<BasisMatrix, BasisError> {
    if df < 2 || df >= n_days {
        return Err(BasisError::InvalidDf { df, n_days });
    }
    let n_interior = match kind {
        // Linear B-splines: df + 1 hat functions, the first one dropped.
        BasisKind::LinearBspline => df - 1,
        // Natural cubic: df + 1 knots including both boundaries.
        BasisKind::NaturalCubic => df - 1,
        // Piecewise constant: df intervals covering the whole window.
        BasisKind::PiecewiseConstant => df - 1,
    };
    let knots: Vec<f64> = (1..=n_interior)
        .map(|k| grid_quantile(n_days, k as f64 / (n_interior + 1) as f64))
        .collect();
    let mut basis = BasisMatrix {
        kind,
        n_days,
        n_basis: df,
        knots,
        boundary: [0.0, (n_days - 1) as f64],
        values: Vec::with_capacity(n_days * df),
    };
    for t in 0..n_days {
        let row = basis.evaluate_at(t as f64);
        debug_assert_eq!(row.len(), df);
        basis.values.extend(row);
    }
    Ok(basis)
}

/// Parameters of the saturating detection-fraction curve
/// `psi(t) = a - b exp(-c t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurveParams<T = f64> {
    pub a_psi: T,
    pub b_psi: T,
    pub c_psi: T,
}

impl<T: Real> DetectionCurveParams<T> {
    /// `0 < b < a < 1` and `c > 0`.
    pub fn is_valid(&self) -> bool {
        let (a, b, c) = (self.a_psi.value(), self.b_psi.value(), self.c_psi.value());
        0.0 < b && b < a && a < 1.0 && c > 0.0 && c.is_finite()
    }
}

pub fn psi<T: Real>(t: f64, p: &DetectionCurveParams<T>) -> T {
    p.a_psi - p.b_psi * (p.c_psi * -t).exp()
}

/// `log beta_u(t) = zeta + lambda(t)' xi + sum_l theta_l(t) xi_theta_l`.
pub fn log_beta_u<T: Real>(
    t: usize,
    zeta: T,
    basis: &BasisMatrix,
    xi: &[T],
    covariates: &[f64],
    xi_theta: &[T],
) -> Result<T, BasisError> {
    if xi.len() != basis.n_basis {
        return Err(BasisError::DimensionMismatch {
            what: "spline coefficients",
            expected: basis.n_basis,
            got: xi.len(),
        });
    }
    if covariates.len() != xi_theta.len() {
        return Err(BasisError::DimensionMismatch {
            what: "covariate coefficients",
            expected: covariates.len(),
            got: xi_theta.len(),
        });
    }
    if t >= basis.n_days {
        return Err(BasisError::DayOutOfRange {
            t,
            n_days: basis.n_days,
        });
    }
    let spline = T::dot(basis.row(t), xi);
    if covariates.is_empty() {
        return Ok(zeta + spline);
    }
    Ok(zeta + spline + T::dot(covariates, xi_theta))
}

/// `logit omega(t) = zeta_omega + lambda_omega(t)' xi_omega`.
pub fn logit_omega<T: Real>(
    t: usize,
    zeta: T,
    basis: &BasisMatrix,
    xi: &[T],
) -> Result<T, BasisError> {
    log_beta_u(t, zeta, basis, xi, &[], &[])
}

/// Assembles all eight daily rates for window day `t`. `covariates` holds one
/// series per covariate, each covering the window.
pub fn daily_rates<T: Real>(
    t: usize,
    params: &EpiParams<T>,
    basis_beta: &BasisMatrix,
    basis_omega: &BasisMatrix,
    covariates: &[Vec<f64>],
) -> Result<DailyRates<T>, BasisError> {
    let theta: Vec<f64> = covariates.iter().map(|c| c[t]).collect();
    let beta_u = log_beta_u(
        t,
        params.zeta_beta,
        basis_beta,
        &params.xi_beta,
        &theta,
        &params.xi_theta,
    )?
    .exp();
    let omega = logit_omega(t, params.zeta_omega, basis_omega, &params.xi_omega)?.logistic();
    let psi_t = psi(t as f64, &params.detection);
    let rho0 = params.rho0();
    Ok(DailyRates {
        beta_u,
        tau: params.tau,
        alpha: params.alpha,
        eta: psi_t * params.eta0,
        rho: (T::cst(1.0) - psi_t) * rho0,
        nu: params.nu,
        gamma: (T::cst(1.0) - omega) * params.gamma0,
        delta: omega * params.delta0,
    })
}

/// Everything besides the parameters needed to produce daily rates: both
/// spline bases and the (standardized) covariate series over the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub basis_beta: BasisMatrix,
    pub basis_omega: BasisMatrix,
    pub covariates: Vec<Vec<f64>>,
}

impl Design {
    /// Linear B-spline bases with the given degrees of freedom.
    pub fn new(
        n_days: usize,
        df_beta: usize,
        df_omega: usize,
        covariates: Vec<Vec<f64>>,
    ) -> Result<Self, BasisError> {
        for c in &covariates {
            if c.len() != n_days {
                return Err(BasisError::DimensionMismatch {
                    what: "covariate series",
                    expected: n_days,
                    got: c.len(),
                });
            }
        }
        Ok(Design {
            basis_beta: build_basis(BasisKind::LinearBspline, n_days, df_beta)?,
            basis_omega: build_basis(BasisKind::LinearBspline, n_days, df_omega)?,
            covariates,
        })
    }

    pub fn n_days(&self) -> usize {
        self.basis_beta.n_days
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn rates<T: Real>(&self, t: usize, params: &EpiParams<T>) -> Result<DailyRates<T>, BasisError> {
        daily_rates(t, params, &self.basis_beta, &self.basis_omega, &self.covariates)
    }

    pub fn covariates_at(&self, t: usize) -> Vec<f64> {
        self.covariates.iter().map(|c| c[t]).collect()
    }
}
