//! Eight-compartment dynamics with time-varying coefficients.
//!
//! States advance by a first-order difference with a step of one day. The
//! flow that produces day `t` uses the rates and noise indexed by day `t`.
//! Multiplicative noise `eps_c` scales only the `I^u -> I^d` (detection) flow
//! and `eps_d` only the `U^d -> D^d` (death) flow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error("invalid noise: {0}")]
    InvalidNoise(String),
    #[error("active population is zero; the whole population has been removed")]
    DegenerateState,
    #[error("reproduction number undefined: {0}")]
    DivisionByZero(&'static str),
    #[error("horizon {horizon} needs at least that many daily rates, got {available}")]
    ShortRates { horizon: usize, available: usize },
}

/// Sizes of the eight compartments on one day. Real-valued: the process model
/// is population level and count noise lives in the observation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompartmentState<T = f64> {
    /// Susceptible.
    pub s: T,
    /// Exposed, not yet infectious.
    pub e: T,
    /// Infectious, undetected.
    pub i_u: T,
    /// Removed without ever being detected.
    pub r_u: T,
    /// Infectious, detected.
    pub i_d: T,
    /// Detected and no longer infectious.
    pub u_d: T,
    /// Detected, recovered.
    pub r_d: T,
    /// Detected, deceased.
    pub d_d: T,
}

impl<T: Real> CompartmentState<T> {
    pub fn total(&self) -> T {
        T::sum(&self.as_array())
    }

    /// `N(t) = S + E + I^u + I^d + U^d`.
    pub fn active(&self) -> T {
        T::sum(&[self.s, self.e, self.i_u, self.i_d, self.u_d])
    }

    pub fn as_array(&self) -> [T; 8] {
        [
            self.s, self.e, self.i_u, self.r_u, self.i_d, self.u_d, self.r_d, self.d_d,
        ]
    }

    pub fn values(&self) -> CompartmentState<f64> {
        let v = self.as_array().map(|x| x.value());
        CompartmentState::from_array(v)
    }
}

impl<T: Copy> CompartmentState<T> {
    pub fn from_array(a: [T; 8]) -> Self {
        CompartmentState {
            s: a[0],
            e: a[1],
            i_u: a[2],
            r_u: a[3],
            i_d: a[4],
            u_d: a[5],
            r_d: a[6],
            d_d: a[7],
        }
    }
}

impl CompartmentState<f64> {
    pub const NAMES: [&'static str; 8] = ["S", "E", "I_u", "R_u", "I_d", "U_d", "R_d", "D_d"];

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in Self::NAMES.iter().zip(self.as_array()) {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidRate(format!(
                    "compartment {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Transition rates for one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRates<T = f64> {
    pub beta_u: T,
    /// Contact reduction for detected infectious individuals, in `[0, 1]`.
    pub tau: T,
    pub alpha: T,
    pub eta: T,
    pub rho: T,
    pub nu: T,
    pub gamma: T,
    pub delta: T,
}

impl<T: Real> DailyRates<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let named = [
            ("beta_u", self.beta_u),
            ("tau", self.tau),
            ("alpha", self.alpha),
            ("eta", self.eta),
            ("rho", self.rho),
            ("nu", self.nu),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ];
        for (name, v) in named {
            let v = v.value();
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidRate(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        let tau = self.tau.value();
        if tau > 1.0 {
            return Err(ModelError::InvalidRate(format!(
                "tau must lie in [0, 1], got {tau}"
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> DailyRates<f64> {
        DailyRates {
            beta_u: self.beta_u.value(),
            tau: self.tau.value(),
            alpha: self.alpha.value(),
            eta: self.eta.value(),
            rho: self.rho.value(),
            nu: self.nu.value(),
            gamma: self.gamma.value(),
            delta: self.delta.value(),
        }
    }
}

impl DailyRates<f64> {
    pub fn zero() -> Self {
        DailyRates {
            beta_u: 0.0,
            tau: 0.0,
            alpha: 0.0,
            eta: 0.0,
            rho: 0.0,
            nu: 0.0,
            gamma: 0.0,
            delta: 0.0,
        }
    }
}

/// Multiplicative errors on the detection and death flows of one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepNoise<T = f64> {
    pub eps_c: T,
    pub eps_d: T,
}

impl StepNoise<f64> {
    pub const UNIT: StepNoise<f64> = StepNoise {
        eps_c: 1.0,
        eps_d: 1.0,
    };
}

impl<T: Real> StepNoise<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [("eps_c", self.eps_c), ("eps_d", self.eps_d)] {
            let v = v.value();
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidNoise(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The seven flows of one step, after clamping.
#[derive(Debug, Clone, Copy)]
pub struct Flows<T = f64> {
    /// `S -> E`.
    pub infection: T,
    /// `E -> I^u`.
    pub onset: T,
    /// `I^u -> I^d`, the new detections `mu_c`.
    pub detection: T,
    /// `I^u -> R^u`.
    pub undetected_removal: T,
    /// `I^d -> U^d`.
    pub deinfection: T,
    /// `U^d -> R^d`.
    pub recovery: T,
    /// `U^d -> D^d`, the new deaths `mu_d`.
    pub death: T,
}

/// Outflows of a compartment, each given as a per-day fraction, and what
/// stays behind. If the fractions sum past one they are rescaled so the
/// compartment empties exactly; the remainder is then exactly zero rather than
/// a rounding residue.
fn outflows<T: Real, const K: usize>(size: T, fractions: [T; K]) -> ([T; K], T) {
    let total: f64 = fractions.iter().map(|f| f.value()).sum();
    if total >= 1.0 {
        let denom = T::sum(&fractions);
        (fractions.map(|f| size * f / denom), T::cst(0.0))
    } else {
        let out = fractions.map(|f| size * f);
        let rest = size - T::sum(&out);
        (out, if rest.value() < 0.0 { T::cst(0.0) } else { rest })
    }
}

/// Flows of one step plus the part of each source compartment that stays.
struct StepParts<T> {
    flows: Flows<T>,
    stay: [T; 5],
}

fn step_parts<T: Real>(
    state: &CompartmentState<T>,
    rates: &DailyRates<T>,
    noise: &StepNoise<T>,
) -> Result<StepParts<T>, ModelError> {
    rates.validate()?;
    noise.validate()?;
    let n = state.active();
    if !(n.value() > 0.0) {
        return Err(ModelError::DegenerateState);
    }
    let force = rates.beta_u * (state.i_u + rates.tau * state.i_d) / n;
    let ([infection], s) = outflows(state.s, [force]);
    let ([onset], e) = outflows(state.e, [rates.alpha]);
    let ([detection, undetected_removal], i_u) =
        outflows(state.i_u, [rates.eta * noise.eps_c, rates.rho]);
    let ([deinfection], i_d) = outflows(state.i_d, [rates.nu]);
    let ([recovery, death], u_d) = outflows(state.u_d, [rates.gamma, rates.delta * noise.eps_d]);
    Ok(StepParts {
        flows: Flows {
            infection,
            onset,
            detection,
            undetected_removal,
            deinfection,
            recovery,
            death,
        },
        stay: [s, e, i_u, i_d, u_d],
    })
}

pub fn flows<T: Real>(
    state: &CompartmentState<T>,
    rates: &DailyRates<T>,
    noise: &StepNoise<T>,
) -> Result<Flows<T>, ModelError> {
    Ok(step_parts(state, rates, noise)?.flows)
}

fn apply<T: Real>(state: &CompartmentState<T>, parts: &StepParts<T>) -> CompartmentState<T> {
    let f = &parts.flows;
    let [s, e, i_u, i_d, u_d] = parts.stay;
    CompartmentState {
        s,
        e: e + f.infection,
        i_u: i_u + f.onset,
        r_u: state.r_u + f.undetected_removal,
        i_d: i_d + f.detection,
        u_d: u_d + f.deinfection,
        r_d: state.r_d + f.recovery,
        d_d: state.d_d + f.death,
    }
}

/// One first-order difference step of the compartment equations.
pub fn step<T: Real>(
    state: &CompartmentState<T>,
    rates: &DailyRates<T>,
    noise: &StepNoise<T>,
) -> Result<CompartmentState<T>, ModelError> {
    let parts = step_parts(state, rates, noise)?;
    Ok(apply(state, &parts))
}

/// Step that also returns the detection and death flows.
pub fn step_with_flows<T: Real>(
    state: &CompartmentState<T>,
    rates: &DailyRates<T>,
    noise: &StepNoise<T>,
) -> Result<(CompartmentState<T>, Flows<T>), ModelError> {
    let parts = step_parts(state, rates, noise)?;
    Ok((apply(state, &parts), parts.flows))
}

/// New detections `mu_c = eta * eps_c * I^u` (the clamped flow if the
/// undetected compartment would otherwise overdraw).
pub fn new_detections(
    state: &CompartmentState,
    rates: &DailyRates,
    noise: &StepNoise,
) -> Result<f64, ModelError> {
    Ok(flows(state, rates, noise)?.detection)
}

/// New deaths `mu_d = delta * eps_d * U^d`.
pub fn new_deaths(
    state: &CompartmentState,
    rates: &DailyRates,
    noise: &StepNoise,
) -> Result<f64, ModelError> {
    Ok(flows(state, rates, noise)?.death)
}

/// Equilibrium reproduction number with the detection rate replaced by
/// `eta * eps_c`. Pass `eps_c = 1` for the unadjusted value.
pub fn r0e<T: Real>(rates: &DailyRates<T>, eps_c: T) -> Result<T, ModelError> {
    rates.validate()?;
    if !(eps_c.value() > 0.0) {
        return Err(ModelError::InvalidNoise(format!(
            "eps_c must be positive, got {}",
            eps_c.value()
        )));
    }
    let eta = rates.eta * eps_c;
    let removal = eta + rates.rho;
    if removal.value() == 0.0 {
        return Err(ModelError::DivisionByZero("eta * eps_c + rho = 0"));
    }
    let detected_term = eta.value() * rates.tau.value();
    if detected_term == 0.0 {
        return Ok(rates.beta_u / removal);
    }
    if rates.nu.value() == 0.0 {
        return Err(ModelError::DivisionByZero("nu = 0 with eta * tau > 0"));
    }
    Ok(rates.beta_u / removal * (eta * rates.tau / rates.nu + 1.0))
}

/// Noise-free trajectory of `horizon + 1` states starting at `init`.
pub fn simulate_deterministic(
    init: &CompartmentState,
    rates_by_day: &[DailyRates],
    horizon: usize,
) -> Result<Vec<CompartmentState>, ModelError> {
    if rates_by_day.len() < horizon {
        return Err(ModelError::ShortRates {
            horizon,
            available: rates_by_day.len(),
        });
    }
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(*init);
    let mut state = *init;
    for rates in &rates_by_day[..horizon] {
        state = step(&state, rates, &StepNoise::UNIT)?;
        out.push(state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn seeded() -> CompartmentState {
        CompartmentState {
            s: 990.0,
            e: 0.0,
            i_u: 10.0,
            r_u: 0.0,
            i_d: 0.0,
            u_d: 0.0,
            r_d: 0.0,
            d_d: 0.0,
        }
    }

    fn rates(beta_u: f64, tau: f64, alpha: f64, eta: f64, rho: f64) -> DailyRates {
        DailyRates {
            beta_u,
            tau,
            alpha,
            eta,
            rho,
            nu: 0.2,
            gamma: 0.05,
            delta: 0.02,
        }
    }

    /// Euler update of the eight equations written out longhand.
    fn reference_update(x: &CompartmentState, r: &DailyRates) -> CompartmentState {
        let n = x.s + x.e + x.i_u + x.i_d + x.u_d;
        let inf = r.beta_u / n * (x.i_u + r.tau * x.i_d) * x.s;
        CompartmentState {
            s: x.s - inf,
            e: x.e + inf - r.alpha * x.e,
            i_u: x.i_u + r.alpha * x.e - (r.eta + r.rho) * x.i_u,
            r_u: x.r_u + r.rho * x.i_u,
            i_d: x.i_d + r.eta * x.i_u - r.nu * x.i_d,
            u_d: x.u_d + r.nu * x.i_d - (r.gamma + r.delta) * x.u_d,
            r_d: x.r_d + r.gamma * x.u_d,
            d_d: x.d_d + r.delta * x.u_d,
        }
    }

    #[test]
    fn zero_rates_are_identity() {
        let x = CompartmentState {
            s: 500.0,
            e: 3.0,
            i_u: 7.0,
            r_u: 1.0,
            i_d: 2.0,
            u_d: 4.0,
            r_d: 5.0,
            d_d: 6.0,
        };
        assert_eq!(step(&x, &DailyRates::zero(), &StepNoise::UNIT).unwrap(), x);
    }

    #[test]
    fn hand_evaluated_step() {
        let next = step(&seeded(), &rates(0.3, 0.0, 0.35, 0.0, 0.1), &StepNoise::UNIT).unwrap();
        assert_relative_eq!(next.s, 987.03, epsilon = 1e-12);
        assert_relative_eq!(next.e, 2.97, epsilon = 1e-12);
        assert_relative_eq!(next.i_u, 9.0, epsilon = 1e-12);
        assert_relative_eq!(next.r_u, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn detections_and_deaths_are_direct_products() {
        let mut x = seeded();
        x.i_u = 40.0;
        x.u_d = 100.0;
        let mut r = rates(0.3, 0.5, 0.35, 0.25, 0.1);
        r.delta = 0.05;
        let unit = StepNoise::UNIT;
        assert_relative_eq!(new_detections(&x, &r, &unit).unwrap(), 10.0, epsilon = 1e-12);
        let noisy = StepNoise {
            eps_c: 1.2,
            eps_d: 0.8,
        };
        assert_relative_eq!(new_detections(&x, &r, &noisy).unwrap(), 12.0, epsilon = 1e-12);
        assert_relative_eq!(new_deaths(&x, &r, &unit).unwrap(), 5.0, epsilon = 1e-12);
        assert_relative_eq!(new_deaths(&x, &r, &noisy).unwrap(), 4.0, epsilon = 1e-12);
        r.eta = 0.0;
        assert_eq!(new_detections(&x, &r, &noisy).unwrap(), 0.0);
        x.u_d = 0.0;
        assert_eq!(new_deaths(&x, &r, &noisy).unwrap(), 0.0);
    }

    #[test]
    fn detection_flow_matches_step() {
        let mut x = seeded();
        x.u_d = 30.0;
        let r = rates(0.4, 0.3, 0.35, 0.25, 0.1);
        let noise = StepNoise {
            eps_c: 1.1,
            eps_d: 0.9,
        };
        let next = step(&x, &r, &noise).unwrap();
        let mu_c = new_detections(&x, &r, &noise).unwrap();
        let mu_d = new_deaths(&x, &r, &noise).unwrap();
        assert_relative_eq!(next.i_d - x.i_d + r.nu * x.i_d, mu_c, epsilon = 1e-12);
        assert_relative_eq!(next.d_d - x.d_d, mu_d, epsilon = 1e-12);
    }

    #[test]
    fn r0e_hand_values() {
        let mut r = rates(0.3, 0.7, 0.35, 0.0, 0.1);
        assert_relative_eq!(r0e(&r, 1.0).unwrap(), 3.0, epsilon = 1e-15);
        r = DailyRates {
            beta_u: 0.4,
            tau: 0.5,
            eta: 0.2,
            rho: 0.1,
            nu: 0.2,
            ..r
        };
        assert_relative_eq!(r0e(&r, 1.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(r0e(&r, 1.5).unwrap(), 1.75, epsilon = 1e-15);
    }

    #[test]
    fn r0e_division_by_zero() {
        let r = rates(0.3, 0.5, 0.35, 0.0, 0.0);
        assert!(matches!(r0e(&r, 1.0), Err(ModelError::DivisionByZero(_))));
        let mut r = rates(0.3, 0.5, 0.35, 0.2, 0.1);
        r.nu = 0.0;
        assert!(matches!(r0e(&r, 1.0), Err(ModelError::DivisionByZero(_))));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let x = seeded();
        let mut r = rates(0.3, 1.5, 0.35, 0.1, 0.1);
        assert!(matches!(step(&x, &r, &StepNoise::UNIT), Err(ModelError::InvalidRate(_))));
        r.tau = 0.5;
        r.rho = -0.1;
        assert!(matches!(step(&x, &r, &StepNoise::UNIT), Err(ModelError::InvalidRate(_))));
        r.rho = 0.1;
        let bad = StepNoise {
            eps_c: 0.0,
            eps_d: 1.0,
        };
        assert!(matches!(step(&x, &r, &bad), Err(ModelError::InvalidNoise(_))));
        let removed = CompartmentState {
            s: 0.0,
            e: 0.0,
            i_u: 0.0,
            r_u: 500.0,
            i_d: 0.0,
            u_d: 0.0,
            r_d: 400.0,
            d_d: 100.0,
        };
        assert_eq!(step(&removed, &r, &StepNoise::UNIT), Err(ModelError::DegenerateState));
    }

    #[test]
    fn overshoot_is_clamped_to_empty_compartment() {
        let x = CompartmentState {
            s: 100.0,
            e: 50.0,
            i_u: 40.0,
            r_u: 0.0,
            i_d: 10.0,
            u_d: 20.0,
            r_d: 0.0,
            d_d: 0.0,
        };
        let r = DailyRates {
            beta_u: 50.0,
            tau: 1.0,
            alpha: 0.5,
            eta: 0.9,
            rho: 0.6,
            nu: 0.2,
            gamma: 0.7,
            delta: 0.6,
        };
        let next = step(&x, &r, &StepNoise { eps_c: 1.0, eps_d: 1.0 }).unwrap();
        assert_eq!(next.s, 0.0);
        // I^u empties completely and keeps only the day's onsets.
        assert_relative_eq!(next.i_u, 0.5 * 50.0, epsilon = 1e-12);
        assert!(next.u_d >= 0.0);
        assert_relative_eq!(next.total(), x.total(), max_relative = 1e-14);
        // Detections keep their share of the clamped outflow.
        let f = flows(&x, &r, &StepNoise::UNIT).unwrap();
        assert_relative_eq!(f.detection, 40.0 * 0.9 / 1.5, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_trajectory() {
        let init = seeded();
        let r = rates(0.5, 0.3, 0.35, 0.2, 0.1);
        let traj = simulate_deterministic(&init, &[r], 1).unwrap();
        assert_eq!(traj, vec![init, step(&init, &r, &StepNoise::UNIT).unwrap()]);

        let zero = vec![DailyRates::zero(); 10];
        let flat = simulate_deterministic(&init, &zero, 10).unwrap();
        assert_eq!(flat.len(), 11);
        assert!(flat.iter().all(|x| *x == init));

        assert!(matches!(
            simulate_deterministic(&init, &zero, 11),
            Err(ModelError::ShortRates { .. })
        ));
    }

    #[test]
    fn supercritical_start_grows_undetected_infectious() {
        // Brute-force scan: whenever R0e > 1 and E(0) is seeded at its
        // quasi-equilibrium share, I^u(1) > I^u(0).
        for beta in [0.5, 0.8, 1.2] {
            for alpha in [0.2, 0.35, 0.5] {
                let r = rates(beta, 0.5, alpha, 0.2, 0.1);
                assert!(r0e(&r, 1.0).unwrap() > 1.0);
                let x = CompartmentState {
                    e: 10.0 * (r.eta + r.rho) / alpha * 1.2,
                    ..seeded()
                };
                let next = step(&x, &r, &StepNoise::UNIT).unwrap();
                assert!(next.i_u > x.i_u, "beta={beta} alpha={alpha}");
            }
        }
    }

    fn state_strategy() -> impl Strategy<Value = CompartmentState> {
        prop::array::uniform8(0.0..1e6f64).prop_map(CompartmentState::from_array)
    }

    fn rates_strategy() -> impl Strategy<Value = DailyRates> {
        (
            0.0..5.0f64,
            0.0..=1.0f64,
            prop::array::uniform6(0.0..1.0f64),
        )
            .prop_map(|(beta_u, tau, r)| DailyRates {
                beta_u,
                tau,
                alpha: r[0],
                eta: r[1],
                rho: r[2],
                nu: r[3],
                gamma: r[4],
                delta: r[5],
            })
    }

    /// Rates small enough that no compartment can be overdrawn.
    fn unclamped_rates_strategy() -> impl Strategy<Value = DailyRates> {
        (0.0..1.0f64, 0.0..=1.0f64, prop::array::uniform6(0.0..0.5f64)).prop_map(
            |(beta_u, tau, r)| DailyRates {
                beta_u,
                tau,
                alpha: 2.0 * r[0],
                eta: r[1],
                rho: r[2],
                nu: 2.0 * r[3],
                gamma: r[4],
                delta: r[5],
            },
        )
    }

    proptest! {
        #[test]
        fn step_conserves_population(
            x in state_strategy(),
            r in rates_strategy(),
            eps_c in 0.2..3.0f64,
            eps_d in 0.2..3.0f64,
        ) {
            prop_assume!(x.active() > 0.0);
            let next = step(&x, &r, &StepNoise { eps_c, eps_d }).unwrap();
            let rel = (next.total() - x.total()).abs() / x.total();
            prop_assert!(rel <= 1e-12);
            for v in next.as_array() {
                prop_assert!(v >= -1e-9 * x.total());
            }
            prop_assert!(next.r_u >= x.r_u && next.r_d >= x.r_d && next.d_d >= x.d_d);
        }

        #[test]
        fn unit_noise_is_the_deterministic_update(
            x in state_strategy(),
            r in unclamped_rates_strategy(),
        ) {
            prop_assume!(x.active() > 0.0);
            let a = step(&x, &r, &StepNoise::UNIT).unwrap().as_array();
            let b = reference_update(&x, &r).as_array();
            for (u, v) in a.iter().zip(b) {
                prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn r0e_decreases_in_eta(
            beta in 0.05..2.0f64,
            tau in 0.01..1.0f64,
            nu in 0.05..0.9f64,
            frac in 0.01..0.99f64,
            eta in 0.0..2.0f64,
        ) {
            let rho = frac * nu / tau;
            let r = DailyRates { beta_u: beta, tau, alpha: 0.3, eta, rho, nu, gamma: 0.1, delta: 0.1 };
            let hi = DailyRates { eta: eta + 1e-4, ..r };
            prop_assert!(r0e(&hi, 1.0).unwrap() < r0e(&r, 1.0).unwrap());
        }
    }

    #[test]
    fn r0e_large_detection_limit() {
        let r = DailyRates {
            beta_u: 0.4,
            tau: 0.3,
            alpha: 0.3,
            eta: 1e6,
            rho: 0.1,
            nu: 0.15,
            gamma: 0.1,
            delta: 0.1,
        };
        let limit = r.beta_u * r.tau / r.nu;
        assert_relative_eq!(r0e(&r, 1.0).unwrap(), limit, max_relative = 0.01);
    }
}
