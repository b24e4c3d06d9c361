//! Posterior summaries: reproduction-number and detection-fraction
//! trajectories, mobility coefficients, correlation diagnostics and the
//! posterior predictive mean.
//!
//! Quantiles are type-7 (linear interpolation) over the pooled post-warmup
//! draws of all chains.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{self, BasisError, Design};
use crate::likelihood::{build_initial_state, EpiParams, LikelihoodError, Observations, ParamLayout};
use crate::model::{self, ModelError};
use crate::sampler::PosteriorDraws;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no posterior draws")]
    Empty,
    #[error("draws do not match the model layout: expected {expected} parameters, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("draw column {index} is '{got}', expected '{expected}'")]
    NameMismatch {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("{0} dates for a {1}-day window")]
    Dates(usize, usize),
    #[error("correlation undefined: {0} is constant")]
    UndefinedCorrelation(String),
    #[error("need at least {needed} days, got {got}")]
    TooFewDays { needed: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and central 95% interval of a sample.
pub fn mean_and_interval(xs: &[f64]) -> (f64, f64, f64) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Shifted by the first value so constant samples come back exactly.
    let mean = xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / xs.len() as f64;
    (mean, quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975))
}

/// Pearson correlation; an error if either margin is constant.
pub fn pearson(x: &[f64], y: &[f64], what: (&str, &str)) -> Result<f64, AnalysisError> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    for (ss, name) in [(sxx, what.0), (syy, what.1)] {
        if !(ss > 0.0) {
            return Err(AnalysisError::UndefinedCorrelation(name.to_owned()));
        }
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-day posterior mean and central 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub dates: Vec<NaiveDate>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TrajectorySummary {
    /// `by_day[t]` holds the draws for day `t`.
    pub fn from_samples(dates: &[NaiveDate], by_day: &[Vec<f64>]) -> TrajectorySummary {
        assert_eq!(dates.len(), by_day.len());
        let mut s = TrajectorySummary {
            dates: dates.to_vec(),
            mean: Vec::with_capacity(by_day.len()),
            lower: Vec::with_capacity(by_day.len()),
            upper: Vec::with_capacity(by_day.len()),
        };
        for xs in by_day {
            let (m, lo, hi) = mean_and_interval(xs);
            s.mean.push(m);
            s.lower.push(lo);
            s.upper.push(hi);
        }
        s
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// Fraction of days whose interval contains `truth[t]`.
    pub fn coverage(&self, truth: &[f64]) -> f64 {
        let hits = truth
            .iter()
            .enumerate()
            .filter(|&(t, &x)| self.lower[t] <= x && x <= self.upper[t])
            .count();
        hits as f64 / truth.len() as f64
    }

    /// Tidy CSV: `date,day,mean,lower,upper` with days numbered from 1.
    pub fn write_csv(&self, path: &Path) -> Result<(), AnalysisError> {
        write_lines(path, "date,day,mean,lower,upper", |w| {
            for t in 0..self.n_days() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    self.dates[t],
                    t + 1,
                    self.mean[t],
                    self.lower[t],
                    self.upper[t]
                )?;
            }
            Ok(())
        })
    }
}

fn write_lines(
    path: &Path,
    header: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), AnalysisError> {
    let io = |source| AnalysisError::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{header}").map_err(io)?;
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// Posterior draws decoded into parameter sets, with the design and dates
/// needed to rebuild the daily rates.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub params: Vec<EpiParams>,
    pub design: Design,
    pub dates: Vec<NaiveDate>,
    /// One label per covariate, used in the CSV outputs.
    pub covariate_labels: Vec<String>,
}

impl Posterior {
    pub fn new(
        draws: &PosteriorDraws,
        design: Design,
        dates: Vec<NaiveDate>,
    ) -> Result<Posterior, AnalysisError> {
        let layout = ParamLayout::for_design(&design);
        let names = layout.names();
        if draws.dim() != names.len() {
            return Err(AnalysisError::LayoutMismatch {
                expected: names.len(),
                got: draws.dim(),
            });
        }
        if let Some(index) = names.iter().zip(&draws.names).position(|(a, b)| a != b) {
            return Err(AnalysisError::NameMismatch {
                index,
                expected: names[index].clone(),
                got: draws.names[index].clone(),
            });
        }
        let params = draws
            .iter_draws()
            .map(|d| layout.unflatten(d))
            .collect::<Result<Vec<_>, _>>()?;
        Posterior::from_params(params, design, dates)
    }

    pub fn from_params(
        params: Vec<EpiParams>,
        design: Design,
        dates: Vec<NaiveDate>,
    ) -> Result<Posterior, AnalysisError> {
        if params.is_empty() {
            return Err(AnalysisError::Empty);
        }
        if dates.len() != design.n_days() {
            return Err(AnalysisError::Dates(dates.len(), design.n_days()));
        }
        let covariate_labels = (1..=design.n_covariates())
            .map(|l| format!("theta[{l}]"))
            .collect();
        Ok(Posterior {
            params,
            design,
            dates,
            covariate_labels,
        })
    }

    pub fn with_covariate_labels(mut self, labels: Vec<String>) -> Posterior {
        assert_eq!(labels.len(), self.design.n_covariates());
        self.covariate_labels = labels;
        self
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_draws(&self) -> usize {
        self.params.len()
    }

    /// `f(draw, day)` for every draw and day, arranged by day.
    fn by_day<F>(&self, mut f: F) -> Result<Vec<Vec<f64>>, AnalysisError>
    where
        F: FnMut(&EpiParams, usize) -> Result<f64, AnalysisError>,
    {
        let mut out = vec![Vec::with_capacity(self.n_draws()); self.n_days()];
        for p in &self.params {
            for (t, day) in out.iter_mut().enumerate() {
                day.push(f(p, t)?);
            }
        }
        Ok(out)
    }
}

/// Equilibrium reproduction number with the noise-adjusted detection rate
/// `eta(t) eps_c(t)`.
pub fn r0e_trajectory(post: &Posterior) -> Result<TrajectorySummary, AnalysisError> {
    let by_day = post.by_day(|p, t| Ok(model::r0e(&post.design.rates(t, p)?, p.eps_c[t])?))?;
    Ok(TrajectorySummary::from_samples(&post.dates, &by_day))
}

/// Detection fraction `psi(t)`.
pub fn detection_fraction_trajectory(post: &Posterior) -> TrajectorySummary {
    let by_day = post
        .by_day(|p, t| Ok(basis::psi(t as f64, &p.detection)))
        .expect("psi is infallible");
    TrajectorySummary::from_samples(&post.dates, &by_day)
}

/// Posterior mean of `beta_u(t)`, averaging `exp(log beta_u)` over draws.
pub fn mean_transmission_rate(post: &Posterior) -> Result<Vec<f64>, AnalysisError> {
    let by_day = post.by_day(|p, t| Ok(post.design.rates(t, p)?.beta_u))?;
    Ok(by_day
        .iter()
        .map(|xs| xs.iter().sum::<f64>() / xs.len() as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub covariate: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub excludes_zero: bool,
}

/// Mean and 95% interval of each covariate coefficient, on the
/// standardized-covariate scale.
pub fn mobility_coefficient_summary(post: &Posterior) -> Vec<CoefficientSummary> {
    post.covariate_labels
        .iter()
        .enumerate()
        .map(|(l, label)| {
            let xs: Vec<f64> = post.params.iter().map(|p| p.xi_theta[l]).collect();
            let (mean, lower, upper) = mean_and_interval(&xs);
            CoefficientSummary {
                covariate: label.clone(),
                mean,
                lower,
                upper,
                excludes_zero: lower > 0.0 || upper < 0.0,
            }
        })
        .collect()
}

/// Correlation over days between each covariate and the posterior-mean
/// transmission rate.
pub fn mobility_transmission_correlation(post: &Posterior) -> Result<Vec<f64>, AnalysisError> {
    if post.n_days() < 3 {
        return Err(AnalysisError::TooFewDays {
            needed: 3,
            got: post.n_days(),
        });
    }
    let beta = mean_transmission_rate(post)?;
    post.design
        .covariates
        .iter()
        .zip(&post.covariate_labels)
        .map(|(c, label)| pearson(c, &beta, (label, "posterior-mean transmission rate")))
        .collect()
}

/// Clinical parameters whose posterior correlation with the mobility
/// coefficients is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClinicalParam {
    Alpha,
    Tau,
    Eta0,
}

impl ClinicalParam {
    pub const ALL: [ClinicalParam; 3] = [ClinicalParam::Alpha, ClinicalParam::Tau, ClinicalParam::Eta0];

    pub fn as_str(self) -> &'static str {
        match self {
            ClinicalParam::Alpha => "alpha",
            ClinicalParam::Tau => "tau",
            ClinicalParam::Eta0 => "eta0",
        }
    }

    pub fn get(self, p: &EpiParams) -> f64 {
        match self {
            ClinicalParam::Alpha => p.alpha,
            ClinicalParam::Tau => p.tau,
            ClinicalParam::Eta0 => p.eta0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCorrelation {
    pub covariate: String,
    pub parameter: ClinicalParam,
    pub correlation: f64,
}

/// Correlation across draws between each covariate coefficient and each
/// listed clinical parameter.
pub fn coefficient_parameter_correlation(
    post: &Posterior,
    clinical: &[ClinicalParam],
) -> Result<Vec<ParameterCorrelation>, AnalysisError> {
    let mut out = Vec::new();
    for (l, label) in post.covariate_labels.iter().enumerate() {
        let xi: Vec<f64> = post.params.iter().map(|p| p.xi_theta[l]).collect();
        for &param in clinical {
            let ys: Vec<f64> = post.params.iter().map(|p| param.get(p)).collect();
            out.push(ParameterCorrelation {
                covariate: label.clone(),
                parameter: param,
                correlation: pearson(&xi, &ys, (label, param.as_str()))?,
            });
        }
    }
    Ok(out)
}

/// `sum_l theta_l(t) xi_theta_l`: the combined covariate effect on
/// log transmission.
pub fn combined_mobility_effect(post: &Posterior) -> TrajectorySummary {
    let by_day = post
        .by_day(|p, t| {
            Ok(post
                .design
                .covariates
                .iter()
                .zip(&p.xi_theta)
                .map(|(c, x)| c[t] * x)
                .sum())
        })
        .expect("combined effect is infallible");
    TrajectorySummary::from_samples(&post.dates, &by_day)
}

/// Expected daily counts of one parameter set: the latent detection and
/// death flows, noise included.
pub fn expected_counts(
    params: &EpiParams,
    data: &Observations,
    design: &Design,
) -> Result<(Vec<f64>, Vec<f64>), AnalysisError> {
    let mut state = build_initial_state(data.i_d0, data.population, params.kappa, params.e_frac)?;
    let n = design.n_days();
    let (mut cases, mut deaths) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for t in 0..n {
        let (next, flows) = model::step_with_flows(&state, &design.rates(t, params)?, &params.noise(t))?;
        cases.push(flows.detection);
        deaths.push(flows.death);
        state = next;
    }
    Ok((cases, deaths))
}

/// Per-day posterior predictive mean of new cases and deaths next to the
/// observed counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMean {
    pub dates: Vec<NaiveDate>,
    pub observed_cases: Vec<u64>,
    pub mean_cases: Vec<f64>,
    pub observed_deaths: Vec<u64>,
    pub mean_deaths: Vec<f64>,
}

impl PredictiveMean {
    pub fn write_csv(&self, path: &Path) -> Result<(), AnalysisError> {
        write_lines(
            path,
            "date,day,observed_cases,mean_cases,observed_deaths,mean_deaths",
            |w| {
                for t in 0..self.dates.len() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        self.dates[t],
                        t + 1,
                        self.observed_cases[t],
                        self.mean_cases[t],
                        self.observed_deaths[t],
                        self.mean_deaths[t]
                    )?;
                }
                Ok(())
            },
        )
    }
}

/// The negative-binomial mean is the latent flow, so the predictive mean is
/// the posterior average of the flows.
pub fn posterior_predictive_mean(
    post: &Posterior,
    data: &Observations,
) -> Result<PredictiveMean, AnalysisError> {
    let n = post.n_days();
    let (mut cases, mut deaths) = (vec![0.0; n], vec![0.0; n]);
    for p in &post.params {
        let (c, d) = expected_counts(p, data, &post.design)?;
        for t in 0..n {
            cases[t] += c[t];
            deaths[t] += d[t];
        }
    }
    let k = post.n_draws() as f64;
    Ok(PredictiveMean {
        dates: post.dates.clone(),
        observed_cases: data.cases.clone(),
        mean_cases: cases.into_iter().map(|x| x / k).collect(),
        observed_deaths: data.deaths.clone(),
        mean_deaths: deaths.into_iter().map(|x| x / k).collect(),
    })
}

/// File names written by [`write_summaries`].
pub const SUMMARY_FILES: [&str; 7] = [
    "r0e.csv",
    "psi.csv",
    "mobility_coefficients.csv",
    "mobility_correlations.csv",
    "coefficient_parameter_correlations.csv",
    "combined_effect.csv",
    "posterior_predictive.csv",
];

/// Writes every summary as a tidy CSV into `dir`. The covariate-based
/// summaries are header-only when the model has no covariates.
pub fn write_summaries(
    post: &Posterior,
    data: &Observations,
    dir: &Path,
) -> Result<Vec<PathBuf>, AnalysisError> {
    let paths: Vec<PathBuf> = SUMMARY_FILES.iter().map(|f| dir.join(f)).collect();
    r0e_trajectory(post)?.write_csv(&paths[0])?;
    detection_fraction_trajectory(post).write_csv(&paths[1])?;

    let coefficients = mobility_coefficient_summary(post);
    write_lines(&paths[2], "covariate,mean,lower,upper,excludes_zero", |w| {
        for c in &coefficients {
            writeln!(w, "{},{},{},{},{}", c.covariate, c.mean, c.lower, c.upper, c.excludes_zero)?;
        }
        Ok(())
    })?;

    let correlations = if post.design.n_covariates() > 0 {
        mobility_transmission_correlation(post)?
    } else {
        Vec::new()
    };
    write_lines(&paths[3], "covariate,correlation", |w| {
        for (label, r) in post.covariate_labels.iter().zip(&correlations) {
            writeln!(w, "{label},{r}")?;
        }
        Ok(())
    })?;

    let pairs = coefficient_parameter_correlation(post, &ClinicalParam::ALL)?;
    write_lines(&paths[4], "covariate,parameter,correlation", |w| {
        for p in &pairs {
            writeln!(w, "{},{},{}", p.covariate, p.parameter.as_str(), p.correlation)?;
        }
        Ok(())
    })?;

    combined_mobility_effect(post).write_csv(&paths[5])?;
    posterior_predictive_mean(post, data)?.write_csv(&paths[6])?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use crate::stochastic::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start: NaiveDate = "2020-03-15".parse().unwrap();
        (0..n).map(|t| start + chrono::Days::new(t as u64)).collect()
    }

    fn scenario() -> Scenario {
        Scenario::with_days(30)
    }

    fn posterior_of(params: Vec<EpiParams>) -> Posterior {
        let s = scenario();
        Posterior::from_params(params, s.design().unwrap(), dates(s.n_days)).unwrap()
    }

    /// Parameter sets scattered around the scenario truth.
    fn jittered(n: usize, seed: u64) -> Vec<EpiParams> {
        let s = scenario();
        let mut rng = stream_rng(seed, 0);
        (0..n)
            .map(|_| {
                let mut p = s.params.clone();
                p.alpha *= 1.0 + 0.1 * (rng.random::<f64>() - 0.5);
                p.tau = rng.random::<f64>();
                p.eta0 *= 1.0 + 0.1 * (rng.random::<f64>() - 0.5);
                p.xi_theta[0] += 0.2 * (rng.random::<f64>() - 0.5);
                for x in p.xi_beta.iter_mut() {
                    *x += 0.1 * (rng.random::<f64>() - 0.5);
                }
                p
            })
            .collect()
    }

    #[test]
    fn type7_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 5.0);
        assert!((quantile_sorted(&xs, 0.025) - 1.1).abs() < 1e-12);
        assert!((quantile_sorted(&xs, 0.975) - 4.9).abs() < 1e-12);
        assert!((quantile_sorted(&[0.0, 10.0], 0.3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_draw_has_zero_width() {
        let s = scenario();
        let post = posterior_of(vec![s.params.clone()]);
        let r = r0e_trajectory(&post).unwrap();
        for t in 0..s.n_days {
            let direct = model::r0e(&post.design.rates(t, &s.params).unwrap(), 1.0).unwrap();
            assert_eq!(r.mean[t], direct);
            assert_eq!(r.lower[t], r.upper[t]);
            assert_eq!(r.mean[t], r.upper[t]);
        }
    }

    #[test]
    fn unit_noise_matches_unadjusted_formula() {
        let params = jittered(50, 1);
        let post = posterior_of(params.clone());
        let r = r0e_trajectory(&post).unwrap();
        for t in 0..post.n_days() {
            let direct: Vec<f64> = params
                .iter()
                .map(|p| {
                    let rates = post.design.rates(t, p).unwrap();
                    rates.beta_u / (rates.eta + rates.rho) * (1.0 + rates.eta * rates.tau / rates.nu)
                })
                .collect();
            let (m, lo, hi) = mean_and_interval(&direct);
            assert!((r.mean[t] - m).abs() <= 1e-12 * m);
            assert!((r.lower[t] - lo).abs() <= 1e-12 * lo);
            assert!((r.upper[t] - hi).abs() <= 1e-12 * hi);
        }
    }

    #[test]
    fn noise_adjustment_changes_r0e() {
        let mut p = scenario().params;
        let base = r0e_trajectory(&posterior_of(vec![p.clone()])).unwrap();
        p.eps_c[4] = 1.5;
        let adjusted = r0e_trajectory(&posterior_of(vec![p])).unwrap();
        assert!(adjusted.mean[4] < base.mean[4]);
        assert_eq!(adjusted.mean[5], base.mean[5]);
    }

    #[test]
    fn detection_fraction_starts_at_a_minus_b_and_rises() {
        let p = scenario().params;
        let psi = detection_fraction_trajectory(&posterior_of(vec![p.clone()]));
        assert!((psi.mean[0] - (p.detection.a_psi - p.detection.b_psi)).abs() < 1e-15);
        let post = posterior_of(jittered(40, 2));
        let psi = detection_fraction_trajectory(&post);
        assert!(psi.mean.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn coefficient_summaries() {
        let mut p = scenario().params;
        p.xi_theta = vec![0.7];
        let post = posterior_of(vec![p.clone(); 10]);
        let c = &mobility_coefficient_summary(&post)[0];
        assert_eq!((c.mean, c.lower, c.upper, c.excludes_zero), (0.7, 0.7, 0.7, true));
        p.xi_theta = vec![0.0];
        assert!(!mobility_coefficient_summary(&posterior_of(vec![p.clone(); 3]))[0].excludes_zero);

        let symmetric: Vec<EpiParams> = (-50..=50)
            .map(|k| {
                let mut q = p.clone();
                q.xi_theta = vec![k as f64 / 50.0];
                q
            })
            .collect();
        let c = &mobility_coefficient_summary(&posterior_of(symmetric))[0];
        assert!(c.mean.abs() < 1e-12 && !c.excludes_zero);
    }

    #[test]
    fn transmission_correlation_with_dominant_covariate() {
        // Spline terms tiny, covariate with small spread: beta_u is a
        // monotone, nearly linear transform of the covariate.
        let s = scenario();
        let mut p = s.params.clone();
        p.xi_beta.iter_mut().for_each(|x| *x = 1e-4);
        p.xi_theta = vec![0.1];
        let r = mobility_transmission_correlation(&posterior_of(vec![p])).unwrap();
        assert!(r[0] > 0.95, "{}", r[0]);
    }

    #[test]
    fn transmission_correlation_with_orthogonal_covariate() {
        // With no covariate effect and a linear spline, beta_u is a piecewise
        // linear function of the day; a covariate orthogonal to it has zero
        // correlation.
        let n = 30;
        let mut p = scenario().params;
        p.xi_theta = vec![0.0];
        let base = Design::new(n, 10, 5, vec![vec![0.0; n]]).unwrap();
        let beta: Vec<f64> = (0..n).map(|t| base.rates(t, &p).unwrap().beta_u).collect();
        let raw: Vec<f64> = (0..n).map(|t| ((t * 7 % 11) as f64).sin()).collect();
        // Gram-Schmidt against the centered beta series.
        let mb = beta.iter().sum::<f64>() / n as f64;
        let bc: Vec<f64> = beta.iter().map(|b| b - mb).collect();
        let proj = raw.iter().zip(&bc).map(|(x, b)| x * b).sum::<f64>()
            / bc.iter().map(|b| b * b).sum::<f64>();
        let orth: Vec<f64> = raw.iter().zip(&bc).map(|(x, b)| x - proj * b).collect();
        let design = Design::new(n, 10, 5, vec![orth]).unwrap();
        let post = Posterior::from_params(vec![p], design, dates(n)).unwrap();
        let r = mobility_transmission_correlation(&post).unwrap();
        assert!(r[0].abs() < 0.05, "{}", r[0]);
    }

    #[test]
    fn covariate_equal_to_mean_transmission_correlates_perfectly() {
        let n = 30;
        let mut p = scenario().params;
        p.xi_theta = vec![0.0];
        let base = Design::new(n, 10, 5, vec![vec![0.0; n]]).unwrap();
        let beta: Vec<f64> = (0..n).map(|t| base.rates(t, &p).unwrap().beta_u).collect();
        let design = Design::new(n, 10, 5, vec![beta]).unwrap();
        let post = Posterior::from_params(vec![p], design, dates(n)).unwrap();
        let r = mobility_transmission_correlation(&post).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_transmission_averages_exp_not_exp_of_mean() {
        let s = scenario();
        let mut lo = s.params.clone();
        let mut hi = s.params.clone();
        lo.zeta_beta -= 1.0;
        hi.zeta_beta += 1.0;
        let post = posterior_of(vec![lo.clone(), hi.clone()]);
        let mean = mean_transmission_rate(&post).unwrap();
        let at_mean = post.design.rates(0, &s.params).unwrap().beta_u;
        assert!((mean[0] - at_mean * 1f64.cosh()).abs() < 1e-12 * mean[0]);
    }

    #[test]
    fn independent_draws_are_uncorrelated() {
        let s = scenario();
        let mut rng = stream_rng(3, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let params: Vec<EpiParams> = (0..10_000)
            .map(|_| {
                let mut p = s.params.clone();
                p.xi_theta = vec![normal.sample(&mut rng)];
                p.alpha = 0.35 + 0.05 * normal.sample(&mut rng);
                p.tau = rng.random();
                p.eta0 = 0.36 + 0.05 * normal.sample(&mut rng);
                p
            })
            .collect();
        let r = coefficient_parameter_correlation(&posterior_of(params), &ClinicalParam::ALL).unwrap();
        assert_eq!(r.len(), 3);
        for c in r {
            assert!(c.correlation.abs() < 0.05, "{c:?}");
        }
    }

    #[test]
    fn dependent_draws_are_correlated() {
        let s = scenario();
        let mut rng = stream_rng(4, 0);
        let params: Vec<EpiParams> = (0..2000)
            .map(|_| {
                let mut p = s.params.clone();
                p.tau = rng.random();
                p.xi_theta = vec![2.0 * p.tau + 0.1 * (rng.random::<f64>() - 0.5)];
                p
            })
            .collect();
        let r = coefficient_parameter_correlation(&posterior_of(params.clone()), &[ClinicalParam::Tau]).unwrap();
        assert!(r[0].correlation > 0.95);
        let exact: Vec<EpiParams> = params
            .into_iter()
            .map(|mut p| {
                p.xi_theta = vec![3.0 * p.tau - 1.0];
                p
            })
            .collect();
        let r = coefficient_parameter_correlation(&posterior_of(exact), &[ClinicalParam::Tau]).unwrap();
        assert!((r[0].correlation - 1.0).abs() < 1e-12);
        // Alpha is constant across these draws.
        let constant = vec![s.params.clone(); 5];
        assert!(matches!(
            coefficient_parameter_correlation(&posterior_of(constant), &[ClinicalParam::Alpha]),
            Err(AnalysisError::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn combined_effect_cases() {
        let s = scenario();
        let mut p = s.params.clone();
        p.xi_theta = vec![0.0];
        let zero = combined_mobility_effect(&posterior_of(vec![p.clone()]));
        assert!(zero.mean.iter().all(|&x| x == 0.0));
        p.xi_theta = vec![1.0];
        let unit = combined_mobility_effect(&posterior_of(vec![p.clone(); 4]));
        assert_eq!(unit.mean, s.covariates[0]);

        let n = s.n_days;
        let theta = s.covariates[0].clone();
        let design = Design::new(n, 10, 5, vec![theta.clone(), theta]).unwrap();
        p.xi_theta = vec![1.0, -1.0];
        let post = Posterior::from_params(vec![p], design, dates(n)).unwrap();
        assert!(combined_mobility_effect(&post).mean.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn predictive_mean_of_truth_is_the_latent_flow() {
        let s = scenario();
        let sim = s.simulate(&mut stream_rng(5, 0)).unwrap();
        let data = s.observations(&sim);
        let post = posterior_of(vec![sim.true_params.clone()]);
        let pred = posterior_predictive_mean(&post, &data).unwrap();
        for t in 0..s.n_days {
            assert!((pred.mean_cases[t] - sim.mu_c[t]).abs() <= 1e-9 * sim.mu_c[t].max(1.0));
            assert!((pred.mean_deaths[t] - sim.mu_d[t]).abs() <= 1e-9 * sim.mu_d[t].max(1.0));
        }
    }

    #[test]
    fn draws_must_match_layout() {
        let s = scenario();
        let layout = s.layout();
        let draws = PosteriorDraws {
            names: layout.names()[1..].to_vec(),
            n_chains: 1,
            n_samples: 1,
            values: layout.flatten(&s.params)[1..].to_vec(),
            lp: vec![0.0],
            divergent: vec![false],
            treedepth: vec![1],
            chains: Vec::new(),
        };
        assert!(matches!(
            Posterior::new(&draws, s.design().unwrap(), dates(s.n_days)),
            Err(AnalysisError::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn summaries_are_written() {
        let s = scenario();
        let sim = s.simulate(&mut stream_rng(6, 0)).unwrap();
        let post = posterior_of(jittered(20, 7));
        let dir = tempfile::tempdir().unwrap();
        let paths = write_summaries(&post, &s.observations(&sim), dir.path()).unwrap();
        let r0e = std::fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(r0e.lines().count(), s.n_days + 1);
        let pairs = std::fs::read_to_string(&paths[4]).unwrap();
        assert_eq!(pairs.lines().count(), 4);
    }

    proptest! {
        #[test]
        fn intervals_are_ordered(seed in any::<u64>(), mu in -5.0f64..5.0, sd in 0.01f64..3.0, n in 40usize..300) {
            let mut rng = stream_rng(seed, 0);
            let normal = Normal::new(mu, sd).unwrap();
            let by_day: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect();
            let s = TrajectorySummary::from_samples(&dates(3), &by_day);
            for t in 0..3 {
                prop_assert!(s.lower[t] <= s.mean[t] && s.mean[t] <= s.upper[t]);
            }
        }

        #[test]
        fn correlation_is_bounded(xs in prop::collection::vec(-10.0f64..10.0, 3..50), shift in -5.0f64..5.0) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x + shift * i as f64).collect();
            if let Ok(r) = pearson(&xs, &ys, ("x", "y")) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            if let Ok(r) = pearson(&xs, &xs, ("x", "x")) {
                prop_assert!((r - 1.0).abs() < 1e-12);
            }
        }
    }
}
