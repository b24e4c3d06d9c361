//! Spline bases and the time-varying rate curves built from them.
//!
//!     cargo run --example spline_basis

use epistate::basis::{build_basis, psi, BasisKind, DetectionCurveParams};
use epistate::scenario::Scenario;

fn main() {
    let b = build_basis(BasisKind::LinearBspline, 90, 10).unwrap();
    println!("linear B-spline, 90 days, df 10");
    println!("interior knots {:?}", b.knots);
    for t in [0, 4, 9, 45, 89] {
        let row: Vec<String> = b.row(t).iter().map(|v| format!("{v:.2}")).collect();
        println!("  day {t:>2}: [{}]", row.join(" "));
    }

    let nc = build_basis(BasisKind::NaturalCubic, 90, 4).unwrap();
    println!("natural cubic, df 4, day 30: {:?}", nc.row(30));

    let detection = DetectionCurveParams {
        a_psi: 0.75,
        b_psi: 0.375,
        c_psi: 0.05,
    };
    let curve: Vec<String> = (0..90).step_by(15).map(|t| format!("{:.3}", psi(t as f64, &detection))).collect();
    println!("psi(t) every 15 days: {}", curve.join(" "));

    let scenario = Scenario::desk_scale();
    let design = scenario.design().unwrap();
    println!("desk-scale daily rates:");
    for t in (0..90).step_by(15) {
        let r = design.rates(t, &scenario.params).unwrap();
        println!(
            "  day {t:>2}: beta_u {:.3}  eta {:.3}  rho {:.3}  gamma {:.4}  delta {:.4}",
            r.beta_u, r.eta, r.rho, r.gamma, r.delta
        );
    }
}
