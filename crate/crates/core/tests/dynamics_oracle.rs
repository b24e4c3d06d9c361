//! The one-day difference update against a fourth-order Runge-Kutta solution
//! of the underlying ODE system, written here independently of the library.
//! Rates scaled by `h` and applied `T / h` times are Euler steps of size `h`,
//! so the error must shrink linearly in `h`.

use epistate::model::{r0e, step, CompartmentState, DailyRates, StepNoise};

fn rates() -> DailyRates {
    DailyRates {
        beta_u: 0.35,
        tau: 0.4,
        alpha: 0.3,
        eta: 0.15,
        rho: 0.08,
        nu: 0.12,
        gamma: 0.06,
        delta: 0.004,
    }
}

fn init() -> [f64; 8] {
    [99_000.0, 400.0, 500.0, 0.0, 100.0, 0.0, 0.0, 0.0]
}

/// Right-hand side of the compartment ODEs in the order
/// S, E, I_u, R_u, I_d, U_d, R_d, D_d.
fn derivative(r: &DailyRates, x: &[f64; 8]) -> [f64; 8] {
    let [s, e, iu, _, id, ud, _, _] = *x;
    let n = s + e + iu + id + ud;
    let infection = r.beta_u * s * (iu + r.tau * id) / n;
    [
        -infection,
        infection - r.alpha * e,
        r.alpha * e - (r.eta + r.rho) * iu,
        r.rho * iu,
        r.eta * iu - r.nu * id,
        r.nu * id - (r.gamma + r.delta) * ud,
        r.gamma * ud,
        r.delta * ud,
    ]
}

fn rk4(r: &DailyRates, x0: [f64; 8], days: f64, h: f64) -> [f64; 8] {
    let add = |x: &[f64; 8], k: &[f64; 8], c: f64| -> [f64; 8] { std::array::from_fn(|i| x[i] + c * k[i]) };
    let mut x = x0;
    for _ in 0..(days / h).round() as usize {
        let k1 = derivative(r, &x);
        let k2 = derivative(r, &add(&x, &k1, h / 2.0));
        let k3 = derivative(r, &add(&x, &k2, h / 2.0));
        let k4 = derivative(r, &add(&x, &k3, h));
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    x
}

fn scaled(r: &DailyRates, h: f64) -> DailyRates {
    DailyRates {
        beta_u: r.beta_u * h,
        alpha: r.alpha * h,
        eta: r.eta * h,
        rho: r.rho * h,
        nu: r.nu * h,
        gamma: r.gamma * h,
        delta: r.delta * h,
        tau: r.tau,
    }
}

fn euler(h: f64, days: f64) -> [f64; 8] {
    let mut x = CompartmentState::from_array(init());
    let r = scaled(&rates(), h);
    for _ in 0..(days / h).round() as usize {
        x = step(&x, &r, &StepNoise::UNIT).unwrap();
    }
    x.as_array()
}

fn max_rel_error(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn difference_update_converges_to_the_ode_at_first_order() {
    let days = 60.0;
    let reference = rk4(&rates(), init(), days, 0.01);
    let errors: Vec<f64> = [0.5, 0.25, 0.125]
        .iter()
        .map(|&h| max_rel_error(&euler(h, days), &reference))
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 1.0).abs() < 0.15, "observed order {order}, errors {errors:?}");
    }
    assert!(errors[2] < 0.05, "{errors:?}");
}

#[test]
fn growth_and_decline_follow_the_reproduction_number() {
    let mut grow = rates();
    grow.beta_u = 0.6;
    let mut shrink = rates();
    shrink.beta_u = 0.05;
    assert!(r0e(&grow, 1.0).unwrap() > 1.0 && r0e(&shrink, 1.0).unwrap() < 1.0);
    let infectious = |r: &DailyRates| {
        let x = rk4(r, init(), 30.0, 0.01);
        x[1] + x[2] + x[4]
    };
    let start = init()[1] + init()[2] + init()[4];
    assert!(infectious(&grow) > start);
    assert!(infectious(&shrink) < start);
}
