//! No-U-Turn Hamiltonian Monte Carlo with step-size and diagonal metric
//! adaptation, plus split-R-hat / effective-sample-size diagnostics.
//!
//! The transition is the multinomial variant with the generalized no-U-turn
//! criterion checked across and between merged subtrees. Warmup uses dual
//! averaging for the step size and expanding windows for the inverse metric.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
use thiserror::Error;

use crate::stochastic::{stream_rng, SimRng};

/// Failure inside the target density (a bug or a numerically broken model),
/// as opposed to a support violation, which is reported as `-inf`.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct DensityError(pub String);

/// Target for the sampler: an unnormalized log density on `R^dim` with its
/// gradient.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `x`, writing the gradient into `grad`. Points outside
    /// the support return `-inf`.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DensityError>;

    /// Random starting point; uniform on `(-2, 2)^dim` unless overridden.
    fn initial_point(&self, rng: &mut SimRng) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| format!("x[{i}]")).collect()
    }

    /// Maps an unconstrained point to the values that are stored as draws.
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("chain {chain}: no finite starting point after {attempts} attempts")]
    InitFailed { chain: usize, attempts: usize },
    #[error("chain {chain}: {source}")]
    Density {
        chain: usize,
        #[source]
        source: DensityError,
    },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("diagnostics need at least 2 chains of 4 draws, got {chains} x {draws}")]
    InsufficientDraws { chains: usize, draws: usize },
    #[error("malformed draws file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub max_treedepth: u32,
    /// Target mean acceptance statistic for step-size adaptation.
    pub target_accept: f64,
    pub seed: u64,
    /// Initial step size before the first heuristic search.
    pub init_step_size: f64,
    /// Finite-density starting points drawn per chain; the chain starts from
    /// the one with the highest log density.
    pub init_candidates: usize,
    /// Run chains on the rayon pool instead of one after another.
    pub parallel: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1500,
            max_treedepth: 14,
            target_accept: 0.95,
            seed: 1,
            init_step_size: 1.0,
            init_candidates: 32,
            parallel: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::InvalidConfig(m.to_string()));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.max_treedepth == 0 || self.max_treedepth > 30 {
            return bad("max_treedepth must lie in 1..=30");
        }
        if self.init_candidates == 0 {
            return bad("init_candidates must be at least 1");
        }
        if !(self.init_step_size > 0.0 && self.init_step_size.is_finite()) {
            return bad("init_step_size must be positive");
        }
        Ok(())
    }
}

/// Position, momentum, log density and gradient at one point of a
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub lp: f64,
}

/// Leapfrog integrator for `H(q, p) = -log pi(q) + p' M^-1 p / 2` with a
/// diagonal inverse metric.
pub struct Hamiltonian<'a, D: ?Sized> {
    pub target: &'a D,
    pub inv_metric: Vec<f64>,
}

impl<'a, D: LogDensity + ?Sized> Hamiltonian<'a, D> {
    pub fn new(target: &'a D, inv_metric: Vec<f64>) -> Self {
        Hamiltonian { target, inv_metric }
    }

    pub fn point(&self, q: Vec<f64>) -> Result<PhasePoint, DensityError> {
        let mut grad = vec![0.0; q.len()];
        let lp = self.target.log_density_grad(&q, &mut grad)?;
        Ok(PhasePoint {
            p: vec![0.0; q.len()],
            q,
            grad,
            lp,
        })
    }

    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p
            .iter()
            .zip(&self.inv_metric)
            .map(|(p, m)| p * p * m)
            .sum::<f64>()
    }

    pub fn energy(&self, z: &PhasePoint) -> f64 {
        -z.lp + self.kinetic(&z.p)
    }

    /// `M^-1 p`, the velocity.
    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn refresh_momentum<R: Rng + ?Sized>(&self, z: &mut PhasePoint, rng: &mut R) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = StandardNormal.sample(rng);
            *p = n / m.sqrt();
        }
    }

    /// One leapfrog step of signed size `eps`.
    pub fn leapfrog(&self, z: &mut PhasePoint, eps: f64) -> Result<(), DensityError> {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.lp = self.target.log_density_grad(&z.q, &mut z.grad)?;
        if z.lp.is_finite() {
            for (p, g) in z.p.iter_mut().zip(&z.grad) {
                *p += 0.5 * eps * g;
            }
        }
        Ok(())
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn sum_of(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

const MAX_DELTA_H: f64 = 1000.0;

/// Outcome of one NUTS transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub treedepth: u32,
    pub n_leapfrog: u32,
    pub divergent: bool,
    pub energy: f64,
}

struct TreeBuilder<'h, 'a, D: ?Sized, R> {
    ham: &'h Hamiltonian<'a, D>,
    rng: &'h mut R,
    eps: f64,
    h0: f64,
    n_leapfrog: u32,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<D: LogDensity + ?Sized, R: Rng> TreeBuilder<'_, '_, D, R> {
    /// Extends the trajectory from `z` by `2^depth` leapfrog steps. Returns
    /// `false` on divergence or a U-turn inside the new subtree.
    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        z: &mut PhasePoint,
        depth: u32,
        z_propose: &mut PhasePoint,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        log_sum_weight: &mut f64,
    ) -> Result<bool, DensityError> {
        if depth == 0 {
            self.ham.leapfrog(z, self.eps)?;
            self.n_leapfrog += 1;
            let mut h = self.ham.energy(z);
            if h.is_nan() {
                h = f64::INFINITY;
            }
            if h - self.h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, self.h0 - h);
            self.sum_metro_prob += if self.h0 - h > 0.0 {
                1.0
            } else {
                (self.h0 - h).exp()
            };
            z_propose.clone_from(z);
            *p_sharp_beg = self.ham.p_sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            add_into(rho, &z.p);
            p_beg.clone_from(&z.p);
            p_end.clone_from(&z.p);
            return Ok(!self.divergent);
        }
        let n = z.q.len();

        let mut log_sum_weight_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; n];
        let mut p_sharp_init_end = vec![0.0; n];
        let mut rho_init = vec![0.0; n];
        if !self.build(
            z,
            depth - 1,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            &mut log_sum_weight_init,
        )? {
            return Ok(false);
        }

        let mut z_propose_final = z.clone();
        let mut log_sum_weight_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; n];
        let mut p_sharp_final_beg = vec![0.0; n];
        let mut rho_final = vec![0.0; n];
        if !self.build(
            z,
            depth - 1,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            &mut log_sum_weight_final,
        )? {
            return Ok(false);
        }

        let log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, log_sum_weight_subtree);
        let accept = (log_sum_weight_final - log_sum_weight_subtree).exp();
        if self.rng.random::<f64>() < accept {
            *z_propose = z_propose_final;
        }

        let rho_subtree = sum_of(&rho_init, &rho_final);
        add_into(rho, &rho_subtree);
        let mut persist = no_u_turn(p_sharp_beg, p_sharp_end, &rho_subtree);
        persist &= no_u_turn(p_sharp_beg, &p_sharp_final_beg, &sum_of(&rho_init, &p_final_beg));
        persist &= no_u_turn(&p_sharp_init_end, p_sharp_end, &sum_of(&rho_final, &p_init_end));
        Ok(persist)
    }
}

/// One NUTS transition from `z` (whose momentum is resampled). On return `z`
/// holds the selected point.
pub fn nuts_transition<D: LogDensity + ?Sized, R: Rng>(
    ham: &Hamiltonian<'_, D>,
    z: &mut PhasePoint,
    step_size: f64,
    max_treedepth: u32,
    rng: &mut R,
) -> Result<TransitionStats, DensityError> {
    ham.refresh_momentum(z, rng);
    let h0 = ham.energy(z);

    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    let p_sharp0 = ham.p_sharp(&z.p);
    let mut p_sharp_fwd_bck = p_sharp0.clone();
    let mut p_sharp_fwd_fwd = p_sharp0.clone();
    let mut p_sharp_bck_fwd = p_sharp0.clone();
    let mut p_sharp_bck_bck = p_sharp0;
    let mut p_fwd_bck = z.p.clone();
    let mut p_fwd_fwd = z.p.clone();
    let mut p_bck_fwd = z.p.clone();
    let mut p_bck_bck = z.p.clone();
    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;
    let n = z.q.len();

    let mut builder = TreeBuilder {
        ham,
        rng,
        eps: step_size,
        h0,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };
    let mut depth = 0;
    while depth < max_treedepth {
        let mut rho_fwd = vec![0.0; n];
        let mut rho_bck = vec![0.0; n];
        let mut log_sum_weight_subtree = f64::NEG_INFINITY;
        let valid = if builder.rng.random::<f64>() > 0.5 {
            rho_bck.clone_from(&rho);
            p_bck_fwd.clone_from(&p_fwd_bck);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
            builder.eps = step_size;
            builder.build(
                &mut z_fwd,
                depth,
                &mut z_propose,
                &mut p_sharp_fwd_bck,
                &mut p_sharp_fwd_fwd,
                &mut rho_fwd,
                &mut p_fwd_bck,
                &mut p_fwd_fwd,
                &mut log_sum_weight_subtree,
            )?
        } else {
            rho_fwd.clone_from(&rho);
            p_fwd_bck.clone_from(&p_bck_fwd);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
            builder.eps = -step_size;
            builder.build(
                &mut z_bck,
                depth,
                &mut z_propose,
                &mut p_sharp_bck_fwd,
                &mut p_sharp_bck_bck,
                &mut rho_bck,
                &mut p_bck_fwd,
                &mut p_bck_bck,
                &mut log_sum_weight_subtree,
            )?
        };
        if !valid {
            break;
        }
        depth += 1;

        if log_sum_weight_subtree > log_sum_weight
            || builder.rng.random::<f64>() < (log_sum_weight_subtree - log_sum_weight).exp()
        {
            z_sample.clone_from(&z_propose);
        }
        log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

        rho = sum_of(&rho_bck, &rho_fwd);
        let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &sum_of(&rho_bck, &p_fwd_bck));
        persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &sum_of(&rho_fwd, &p_bck_fwd));
        if !persist {
            break;
        }
    }
    let stats = TransitionStats {
        accept_stat: builder.sum_metro_prob / builder.n_leapfrog.max(1) as f64,
        treedepth: depth,
        n_leapfrog: builder.n_leapfrog,
        divergent: builder.divergent,
        energy: 0.0,
    };
    *z = z_sample;
    Ok(TransitionStats {
        energy: ham.energy(z),
        ..stats
    })
}

/// Nesterov dual averaging of `log(step size)` toward a target acceptance
/// statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    s_bar: f64,
    x_bar: f64,
    counter: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(target: f64, step_size: f64) -> Self {
        let mut da = DualAveraging {
            target,
            mu: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
            counter: 0.0,
        };
        da.restart(step_size);
        da
    }

    pub fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.s_bar = 0.0;
        self.x_bar = 0.0;
        self.counter = 0.0;
    }

    /// Updates with one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let x_eta = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// The averaged step size used after warmup.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator of per-coordinate variances.
#[derive(Debug, Clone)]
struct VarianceEstimator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    fn new(dim: usize) -> Self {
        VarianceEstimator {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    /// Sample variances shrunk toward `1e-3`.
    fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| (n / (n + 5.0)) * s / (n - 1.0) + 1e-3 * (5.0 / (n + 5.0)))
            .collect()
    }
}

/// Schedule of the metric-adaptation windows: a fast initial buffer, slow
/// windows doubling in length, and a fast terminal buffer.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    n_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window_end: usize,
    counter: usize,
}

impl WindowSchedule {
    pub fn new(n_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base) = (75, 50, 25);
        if n_warmup < 20 {
            (init_buffer, term_buffer, base) = (n_warmup, 0, 0);
        } else if init_buffer + base + term_buffer > n_warmup {
            init_buffer = (0.15 * n_warmup as f64) as usize;
            term_buffer = (0.1 * n_warmup as f64) as usize;
            base = n_warmup - (init_buffer + term_buffer);
        }
        WindowSchedule {
            n_warmup,
            init_buffer,
            term_buffer,
            window_size: base,
            next_window_end: (init_buffer + base).saturating_sub(1),
            counter: 0,
        }
    }

    fn in_window(&self) -> bool {
        self.window_size > 0
            && self.counter >= self.init_buffer
            && self.counter < self.n_warmup - self.term_buffer
    }

    fn at_window_end(&self) -> bool {
        self.window_size > 0 && self.counter == self.next_window_end && self.counter != self.n_warmup
    }

    fn advance_window(&mut self) {
        let last = self.n_warmup - self.term_buffer - 1;
        if self.next_window_end == last {
            return;
        }
        self.window_size *= 2;
        self.next_window_end = self.counter + self.window_size;
        if self.next_window_end != last && self.next_window_end + 2 * self.window_size >= last + 1 {
            self.next_window_end = last;
        }
    }

    /// Ends of the slow windows, in warmup iterations (for inspection).
    pub fn window_ends(n_warmup: usize) -> Vec<usize> {
        let mut s = WindowSchedule::new(n_warmup);
        let mut ends = Vec::new();
        for _ in 0..n_warmup {
            if s.at_window_end() {
                ends.push(s.counter);
                s.advance_window();
            }
            s.counter += 1;
        }
        ends
    }
}

/// Per-chain summary of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainInfo {
    pub chain: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub divergences: usize,
    pub treedepth_saturations: usize,
    pub mean_accept_stat: f64,
    pub total_leapfrog_steps: u64,
}

/// Post-warmup draws of all chains in constrained space, plus per-draw
/// sampler statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_chains: usize,
    pub n_samples: usize,
    /// `[chain][iteration][parameter]`, flattened.
    pub values: Vec<f64>,
    pub lp: Vec<f64>,
    pub divergent: Vec<bool>,
    pub treedepth: Vec<u32>,
    pub chains: Vec<ChainInfo>,
}

impl PosteriorDraws {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let d = self.dim();
        let start = (chain * self.n_samples + iter) * d;
        &self.values[start..start + d]
    }

    /// All draws of all chains, chain by chain.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim().max(1))
    }

    pub fn n_draws(&self) -> usize {
        self.n_chains * self.n_samples
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draws of one parameter, `[chain][iteration]`.
    pub fn parameter(&self, index: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_samples).map(|i| self.draw(c, i)[index]).collect())
            .collect()
    }

    pub fn divergences(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }

    /// Columnar CSV: `chain,iteration,<names...>`, one row per draw, with
    /// chains and iterations numbered from 1.
    pub fn write_csv(&self, path: &Path) -> Result<(), SamplerError> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "chain,iteration")?;
        for name in &self.names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for c in 0..self.n_chains {
            for i in 0..self.n_samples {
                write!(w, "{},{}", c + 1, i + 1)?;
                for v in self.draw(c, i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a draws CSV. Sampler statistics are not part of the file and
    /// come back empty.
    pub fn read_csv(path: &Path) -> Result<PosteriorDraws, SamplerError> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "chain" || &headers[1] != "iteration" {
            return Err(SamplerError::Format(
                "expected header starting with chain,iteration".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut values = Vec::new();
        let mut chain_lengths: Vec<usize> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64, SamplerError> {
                record[i].parse::<f64>().map_err(|e| {
                    SamplerError::Format(format!("line {}: column {}: {e}", line + 2, i + 1))
                })
            };
            let chain = parse(0)? as usize;
            if chain == 0 || chain > chain_lengths.len() + 1 {
                return Err(SamplerError::Format(format!(
                    "line {}: chains must be numbered consecutively from 1",
                    line + 2
                )));
            }
            if chain > chain_lengths.len() {
                chain_lengths.push(0);
            }
            chain_lengths[chain - 1] += 1;
            for i in 2..record.len() {
                values.push(parse(i)?);
            }
        }
        let n_samples = chain_lengths.first().copied().unwrap_or(0);
        if chain_lengths.iter().any(|&n| n != n_samples) {
            return Err(SamplerError::Format("chains have unequal lengths".into()));
        }
        let n = chain_lengths.len() * n_samples;
        Ok(PosteriorDraws {
            names,
            n_chains: chain_lengths.len(),
            n_samples,
            values,
            lp: vec![f64::NAN; n],
            divergent: vec![false; n],
            treedepth: vec![0; n],
            chains: Vec::new(),
        })
    }
}

fn find_reasonable_step_size<D: LogDensity + ?Sized, R: Rng>(
    ham: &Hamiltonian<'_, D>,
    z: &PhasePoint,
    start: f64,
    rng: &mut R,
) -> Result<f64, DensityError> {
    let mut eps = start;
    let mut probe = z.clone();
    ham.refresh_momentum(&mut probe, rng);
    let h0 = ham.energy(&probe);
    let p0 = probe.p.clone();
    ham.leapfrog(&mut probe, eps)?;
    let delta = |h: f64| if h.is_nan() { f64::NEG_INFINITY } else { h0 - h };
    let direction = if delta(ham.energy(&probe)) > 0.8f64.ln() { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let mut probe = z.clone();
        probe.p.clone_from(&p0);
        ham.leapfrog(&mut probe, eps)?;
        let d = delta(ham.energy(&probe));
        if (direction > 0.0 && !(d > 0.8f64.ln())) || (direction < 0.0 && !(d < 0.8f64.ln())) {
            break;
        }
        eps = if direction > 0.0 { eps * 2.0 } else { eps / 2.0 };
        if !(1e-12..=1e7).contains(&eps) {
            break;
        }
    }
    Ok(eps.clamp(1e-12, 1e7))
}

struct ChainOutput {
    values: Vec<f64>,
    lp: Vec<f64>,
    divergent: Vec<bool>,
    treedepth: Vec<u32>,
    info: ChainInfo,
}

const INIT_ATTEMPTS: usize = 100;

fn run_chain<D: LogDensity + ?Sized>(
    target: &D,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput, SamplerError> {
    let mut rng = stream_rng(config.seed, chain as u64 + 1);
    let dim = target.dim();
    let density_err = |source| SamplerError::Density { chain, source };

    let mut ham = Hamiltonian::new(target, vec![1.0; dim]);
    // Up to INIT_ATTEMPTS draws per accepted candidate; keep the best.
    let mut z: Option<PhasePoint> = None;
    for _ in 0..config.init_candidates {
        let mut found = None;
        for _ in 0..INIT_ATTEMPTS {
            let q = target.initial_point(&mut rng);
            let point = ham.point(q).map_err(density_err)?;
            if point.lp.is_finite() && point.grad.iter().all(|g| g.is_finite()) {
                found = Some(point);
                break;
            }
        }
        let candidate = found.ok_or(SamplerError::InitFailed {
            chain,
            attempts: INIT_ATTEMPTS,
        })?;
        if z.as_ref().is_none_or(|best| candidate.lp > best.lp) {
            z = Some(candidate);
        }
    }
    let mut z = z.expect("init_candidates >= 1");

    let mut step_size =
        find_reasonable_step_size(&ham, &z, config.init_step_size, &mut rng).map_err(density_err)?;
    let mut dual = DualAveraging::new(config.target_accept, step_size);
    let mut windows = WindowSchedule::new(config.n_warmup);
    let mut estimator = VarianceEstimator::new(dim);

    let total = config.n_warmup + config.n_samples;
    let mut out = ChainOutput {
        values: Vec::with_capacity(config.n_samples * dim),
        lp: Vec::with_capacity(config.n_samples),
        divergent: Vec::with_capacity(config.n_samples),
        treedepth: Vec::with_capacity(config.n_samples),
        info: ChainInfo {
            chain: chain + 1,
            step_size: 0.0,
            inv_metric: Vec::new(),
            divergences: 0,
            treedepth_saturations: 0,
            mean_accept_stat: 0.0,
            total_leapfrog_steps: 0,
        },
    };
    let mut accept_sum = 0.0;
    for iter in 0..total {
        let stats = nuts_transition(&ham, &mut z, step_size, config.max_treedepth, &mut rng)
            .map_err(density_err)?;
        out.info.total_leapfrog_steps += stats.n_leapfrog as u64;
        if iter < config.n_warmup {
            step_size = dual.update(stats.accept_stat);
            if windows.in_window() {
                estimator.add(&z.q);
            }
            if windows.at_window_end() {
                windows.advance_window();
                ham.inv_metric = estimator.regularized();
                estimator = VarianceEstimator::new(dim);
                step_size = find_reasonable_step_size(&ham, &z, step_size, &mut rng)
                    .map_err(density_err)?;
                dual.restart(step_size);
            }
            windows.counter += 1;
            if iter + 1 == config.n_warmup {
                step_size = dual.final_step_size();
            }
            continue;
        }
        accept_sum += stats.accept_stat;
        out.values.extend(target.constrain(&z.q));
        out.lp.push(z.lp);
        out.divergent.push(stats.divergent);
        out.treedepth.push(stats.treedepth);
        if stats.divergent {
            out.info.divergences += 1;
        }
        if stats.treedepth >= config.max_treedepth {
            out.info.treedepth_saturations += 1;
        }
    }
    out.info.step_size = step_size;
    out.info.inv_metric = ham.inv_metric.clone();
    out.info.mean_accept_stat = accept_sum / config.n_samples as f64;
    log::info!(
        "chain {}: step size {:.4}, {} divergences, {} leapfrog steps",
        chain + 1,
        step_size,
        out.info.divergences,
        out.info.total_leapfrog_steps
    );
    Ok(out)
}

/// Runs `n_chains` independent NUTS chains. Chain `c` uses stream `c + 1` of
/// the configured seed, so results do not depend on thread scheduling.
pub fn run_nuts<D: LogDensity + ?Sized>(
    target: &D,
    config: &SamplerConfig,
) -> Result<PosteriorDraws, SamplerError> {
    config.validate()?;
    let outputs: Vec<Result<ChainOutput, SamplerError>> = if config.parallel {
        (0..config.n_chains)
            .into_par_iter()
            .map(|c| run_chain(target, config, c))
            .collect()
    } else {
        (0..config.n_chains)
            .map(|c| run_chain(target, config, c))
            .collect()
    };
    let mut draws = PosteriorDraws {
        names: target.param_names(),
        n_chains: config.n_chains,
        n_samples: config.n_samples,
        values: Vec::new(),
        lp: Vec::new(),
        divergent: Vec::new(),
        treedepth: Vec::new(),
        chains: Vec::new(),
    };
    for out in outputs {
        let out = out?;
        draws.values.extend(out.values);
        draws.lp.extend(out.lp);
        draws.divergent.extend(out.divergent);
        draws.treedepth.extend(out.treedepth);
        draws.chains.push(out.info);
    }
    Ok(draws)
}

/// Convergence summary of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    /// `None` for a constant parameter.
    pub ess_bulk: Option<f64>,
    pub ess_tail: Option<f64>,
    /// R-hat above 1.01.
    pub flagged: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Splits each chain in half, dropping the middle draw of odd lengths.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains[0].len();
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| [c[..half].to_vec(), c[n - half..].to_vec()])
        .collect()
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|x| *x == first)
}

/// Classic potential scale reduction on already-split chains.
fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let b_over_n = sample_var(&means);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Normal scores of pooled fractional ranks (ties averaged).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let flat: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = flat.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && flat[order[j + 1]] == flat[order[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    let z = StdNormal::standard();
    let scores: Vec<f64> = ranks
        .iter()
        .map(|r| z.inverse_cdf((r - 0.375) / (s as f64 + 0.25)))
        .collect();
    scores.chunks(chains[0].len()).map(<[f64]>::to_vec).collect()
}

fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (size as f64 * n as f64)).collect()
}

/// Effective sample size of already-split chains using Geyer's initial
/// monotone sequence on the multi-chain autocorrelation.
fn ess_basic(chains: &[Vec<f64>]) -> Option<f64> {
    if is_constant(chains) {
        return None;
    }
    let m = chains.len();
    let n = chains[0].len();
    let acovs: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_var = mean(&acovs.iter().map(|a| a[0] * n as f64 / (n as f64 - 1.0)).collect::<Vec<_>>());
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += sample_var(&chain_means);
    }
    let mean_acov = |t: usize| acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64;
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 1;
    while t + 4 < n && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho[max_t + 1] = rho_even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t + 1])
        .max(1.0 / total.log10());
    Some(total / tau)
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Rank-normalized split R-hat: the larger of the bulk and folded versions.
/// Constant draws give exactly 1.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if is_constant(chains) {
        return 1.0;
    }
    let split = split_chains(chains);
    let bulk = rhat_basic(&rank_normalize(&split));
    let mut pooled: Vec<f64> = split.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let median = quantile_sorted(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = split
        .iter()
        .map(|c| c.iter().map(|x| (x - median).abs()).collect())
        .collect();
    let tail = if is_constant(&folded) {
        1.0
    } else {
        rhat_basic(&rank_normalize(&folded))
    };
    bulk.max(tail)
}

pub fn ess_bulk(chains: &[Vec<f64>]) -> Option<f64> {
    if is_constant(chains) {
        return None;
    }
    ess_basic(&rank_normalize(&split_chains(chains)))
}

/// Smaller of the effective sample sizes of the 5% and 95% quantile
/// indicators.
pub fn ess_tail(chains: &[Vec<f64>]) -> Option<f64> {
    if is_constant(chains) {
        return None;
    }
    let split = split_chains(chains);
    let mut pooled: Vec<f64> = split.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut out: Option<f64> = None;
    for p in [0.05, 0.95] {
        let q = quantile_sorted(&pooled, p);
        let ind: Vec<Vec<f64>> = split
            .iter()
            .map(|c| c.iter().map(|x| if *x <= q { 1.0 } else { 0.0 }).collect())
            .collect();
        let e = ess_basic(&ind)?;
        out = Some(out.map_or(e, |o: f64| o.min(e)));
    }
    out
}

/// Per-parameter convergence table.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<Vec<ParamDiagnostics>, SamplerError> {
    if draws.n_chains < 2 || draws.n_samples < 4 {
        return Err(SamplerError::InsufficientDraws {
            chains: draws.n_chains,
            draws: draws.n_samples,
        });
    }
    Ok((0..draws.dim())
        .into_par_iter()
        .map(|j| {
            let chains = draws.parameter(j);
            let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
            let rhat = split_rhat(&chains);
            ParamDiagnostics {
                name: draws.names[j].clone(),
                mean: mean(&pooled),
                sd: sample_var(&pooled).max(0.0).sqrt(),
                rhat,
                ess_bulk: ess_bulk(&chains),
                ess_tail: ess_tail(&chains),
                flagged: rhat > 1.01,
            }
        })
        .collect())
}

/// JSON sidecar written next to the draws CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub config: SamplerConfig,
    pub divergences: usize,
    pub treedepth_saturations: usize,
    pub chains: Vec<ChainInfo>,
    pub parameters: Vec<ParamDiagnostics>,
    /// Wall-clock seconds, only present when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtime_seconds: Option<f64>,
}

impl DiagnosticsReport {
    pub fn new(
        draws: &PosteriorDraws,
        config: &SamplerConfig,
        runtime_seconds: Option<f64>,
    ) -> Result<Self, SamplerError> {
        Ok(DiagnosticsReport {
            config: config.clone(),
            divergences: draws.chains.iter().map(|c| c.divergences).sum(),
            treedepth_saturations: draws.chains.iter().map(|c| c.treedepth_saturations).sum(),
            chains: draws.chains.clone(),
            parameters: diagnostics(draws)?,
            runtime_seconds,
        })
    }

    /// Fraction of parameters with R-hat at most `threshold`.
    pub fn fraction_rhat_below(&self, threshold: f64) -> f64 {
        let ok = self.parameters.iter().filter(|p| p.rhat <= threshold).count();
        ok as f64 / self.parameters.len().max(1) as f64
    }

    pub fn write_json(&self, path: &Path) -> Result<(), SamplerError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) struct Gaussian {
        pub sd: Vec<f64>,
    }

    impl LogDensity for Gaussian {
        fn dim(&self) -> usize {
            self.sd.len()
        }
        fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DensityError> {
            let mut lp = 0.0;
            for ((g, x), s) in grad.iter_mut().zip(x).zip(&self.sd) {
                *g = -x / (s * s);
                lp -= 0.5 * (x / s).powi(2);
            }
            Ok(lp)
        }
    }

    /// Neal's funnel: `v ~ N(0, 3)`, `x_i | v ~ N(0, e^{v/2})`.
    struct Funnel {
        dim: usize,
    }

    impl LogDensity for Funnel {
        fn dim(&self) -> usize {
            self.dim
        }
        fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64, DensityError> {
            let v = x[0];
            let k = (self.dim - 1) as f64;
            let mut lp = -v * v / 18.0 - 0.5 * k * v;
            grad[0] = -v / 9.0 - 0.5 * k;
            let e = (-v).exp();
            for i in 1..self.dim {
                lp -= 0.5 * x[i] * x[i] * e;
                grad[i] = -x[i] * e;
                grad[0] += 0.5 * x[i] * x[i] * e;
            }
            Ok(lp)
        }
    }

    fn quick(seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_chains: 2,
            n_warmup: 300,
            n_samples: 400,
            target_accept: 0.8,
            seed,
            max_treedepth: 10,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn anisotropic_gaussian_moments() {
        let target = Gaussian {
            sd: vec![0.1, 1.0, 10.0],
        };
        let draws = run_nuts(&target, &quick(3)).unwrap();
        for (j, sd) in target.sd.iter().enumerate() {
            let xs: Vec<f64> = draws.parameter(j).concat();
            assert!(mean(&xs).abs() < 0.2 * sd, "mean {}", mean(&xs));
            let s = sample_var(&xs).sqrt();
            assert!((s / sd - 1.0).abs() < 0.15, "sd {s} vs {sd}");
        }
        // The adapted inverse metric tracks the marginal variances.
        let m = &draws.chains[0].inv_metric;
        assert!(m[2] / m[0] > 1000.0, "{m:?}");
    }

    #[test]
    fn same_seed_same_draws() {
        let target = Gaussian { sd: vec![1.0; 4] };
        let a = run_nuts(&target, &quick(9)).unwrap();
        let b = run_nuts(&target, &SamplerConfig { parallel: false, ..quick(9) }).unwrap();
        assert_eq!(a, b);
        let c = run_nuts(&target, &quick(10)).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn leapfrog_is_reversible() {
        let target = Gaussian {
            sd: vec![0.5, 1.0, 2.0, 3.0],
        };
        let ham = Hamiltonian::new(&target, vec![0.3, 1.0, 2.0, 5.0]);
        let mut z = ham.point(vec![0.3, -1.0, 2.0, 0.7]).unwrap();
        z.p = vec![0.2, 1.5, -0.4, 0.1];
        let start = z.clone();
        for _ in 0..50 {
            ham.leapfrog(&mut z, 0.1).unwrap();
        }
        z.p.iter_mut().for_each(|p| *p = -*p);
        for _ in 0..50 {
            ham.leapfrog(&mut z, 0.1).unwrap();
        }
        for (a, b) in z.q.iter().zip(&start.q) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in z.p.iter().zip(&start.p) {
            assert!((a + b).abs() < 1e-8);
        }
    }

    fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let lx: Vec<f64> = xs.iter().map(|s| s.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|e| e.ln()).collect();
        let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
        lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
    }

    #[test]
    fn energy_error_is_second_order() {
        let target = Gaussian {
            sd: vec![1.0, 2.0, 0.7],
        };
        let ham = Hamiltonian::new(&target, vec![1.0; 3]);
        let mut start = ham.point(vec![1.0, -0.5, 0.3]).unwrap();
        start.p = vec![0.4, 0.8, -1.1];
        let h0 = ham.energy(&start);
        let steps: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
        // Energy error after integrating to a fixed time.
        let at_fixed_time: Vec<f64> = steps
            .iter()
            .map(|&eps| {
                let mut z = start.clone();
                for _ in 0..(1.3 / eps).round() as usize {
                    ham.leapfrog(&mut z, eps).unwrap();
                }
                (ham.energy(&z) - h0).abs()
            })
            .collect();
        let slope = loglog_slope(&steps, &at_fixed_time);
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
        // A single step has a third-order local error.
        let one_step: Vec<f64> = steps
            .iter()
            .map(|&eps| {
                let mut z = start.clone();
                ham.leapfrog(&mut z, eps).unwrap();
                (ham.energy(&z) - h0).abs()
            })
            .collect();
        let slope = loglog_slope(&steps, &one_step);
        assert!((slope - 3.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn funnel_divergences_drop_with_higher_target() {
        let target = Funnel { dim: 10 };
        let base = SamplerConfig {
            n_chains: 2,
            n_warmup: 500,
            n_samples: 1000,
            seed: 21,
            ..SamplerConfig::default()
        };
        let loose = run_nuts(&target, &SamplerConfig { target_accept: 0.8, ..base.clone() }).unwrap();
        let tight = run_nuts(&target, &SamplerConfig { target_accept: 0.99, ..base }).unwrap();
        assert!(loose.divergences() > 0);
        assert!(tight.divergences() < loose.divergences(), "{} vs {}", tight.divergences(), loose.divergences());
    }

    #[test]
    fn window_schedule_matches_reference_layout() {
        assert_eq!(WindowSchedule::window_ends(1000), vec![99, 149, 249, 449, 949]);
        let short = WindowSchedule::window_ends(100);
        assert_eq!(short, vec![89]);
        assert!(WindowSchedule::window_ends(10).is_empty());
    }

    #[test]
    fn dual_averaging_converges_on_a_monotone_response() {
        // Acceptance falls smoothly with step size; the target 0.8 is met at 0.5.
        let accept = |eps: f64| (1.0 - 0.4 * eps).clamp(0.0, 1.0);
        let mut da = DualAveraging::new(0.8, 1.0);
        let mut eps = 1.0;
        for _ in 0..2000 {
            eps = da.update(accept(eps));
        }
        assert!((da.final_step_size() - 0.5).abs() < 0.02, "{}", da.final_step_size());
    }

    #[test]
    fn iid_chains_have_rhat_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let r = split_rhat(&chains);
        assert!((0.99..=1.01).contains(&r), "{r}");
        let ess = ess_bulk(&chains).unwrap();
        assert!(ess > 3000.0, "{ess}");
        assert!(ess_tail(&chains).unwrap() > 2500.0);
    }

    #[test]
    fn trending_chains_are_flagged() {
        let chain: Vec<f64> = (0..200).map(|i| i as f64 / 10.0).collect();
        assert!(split_rhat(&[chain.clone(), chain]) > 1.5);
    }

    #[test]
    fn constant_parameter_has_unit_rhat() {
        let c = vec![vec![2.0; 10], vec![2.0; 10]];
        assert_eq!(split_rhat(&c), 1.0);
        assert_eq!(ess_bulk(&c), None);
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // ESS of an AR(1) chain with coefficient a is n (1 - a) / (1 + a).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: f64 = 0.5;
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..5000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = a * x + (1.0 - a * a).sqrt() * e;
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = ess_bulk(&chains).unwrap();
        let expected = 20_000.0 * (1.0 - a) / (1.0 + a);
        assert!((ess / expected - 1.0).abs() < 0.15, "{ess} vs {expected}");
    }

    #[test]
    fn diagnostics_need_enough_draws() {
        let draws = PosteriorDraws {
            names: vec!["x".into()],
            n_chains: 1,
            n_samples: 10,
            values: vec![0.0; 10],
            lp: vec![0.0; 10],
            divergent: vec![false; 10],
            treedepth: vec![1; 10],
            chains: vec![],
        };
        assert!(matches!(
            diagnostics(&draws),
            Err(SamplerError::InsufficientDraws { .. })
        ));
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let target = Gaussian { sd: vec![1.0, 3.0] };
        let draws = run_nuts(&target, &SamplerConfig { n_warmup: 50, n_samples: 20, ..quick(4) }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        draws.write_csv(&path).unwrap();
        let back = PosteriorDraws::read_csv(&path).unwrap();
        assert_eq!(back.names, draws.names);
        assert_eq!(back.values, draws.values);
        assert_eq!((back.n_chains, back.n_samples), (2, 20));
    }
}
