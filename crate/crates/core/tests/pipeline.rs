//! simulate -> fit -> summarize through the library commands and the binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use epistate::basis::Design;
use epistate::cli::{cmd_fit, cmd_simulate, cmd_summarize, RunConfig};
use epistate::ingest::TimeSeriesBundle;
use epistate::likelihood::ParamLayout;
use epistate::sampler::PosteriorDraws;

fn config(out: &Path, n_days: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.out_dir = out.to_owned();
    c.simulation.n_days = n_days;
    c
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn observed_counts_track_the_latent_means() {
    // Sum over replicates and days of (Y - mu), standardized by the
    // negative-binomial variance mu (1 + mu / phi).
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 30);
    let phi = c.scenario().params.phi_c;
    let (mut diff, mut var) = (0.0, 0.0);
    for seed in 0..200 {
        c.seed = seed;
        cmd_simulate(&c).unwrap();
        let (h, rows) = read_csv(&dir.path().join("data/truth.csv"));
        let (iy, imu) = (column(&h, "observed_cases"), column(&h, "mu_cases"));
        for r in &rows[1..] {
            let (y, mu): (f64, f64) = (r[iy].parse().unwrap(), r[imu].parse().unwrap());
            diff += y - mu;
            var += mu * (1.0 + mu / phi);
        }
    }
    let z = diff / var.sqrt();
    assert!(z.abs() < 4.0, "z = {z}");
}

#[test]
fn small_synthetic_fit_converges_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), 60);
    c.seed = 4;
    c.sampler.n_chains = 2;
    c.sampler.n_warmup = 400;
    c.sampler.n_samples = 400;
    cmd_simulate(&c).unwrap();
    let report = cmd_fit(&c).unwrap();
    assert!(report.fraction_rhat_below(1.05) >= 0.95, "{}", report.fraction_rhat_below(1.05));
    cmd_summarize(&c).unwrap();

    let summary = dir.path().join("summary");
    let (h, rows) = read_csv(&summary.join("r0e.csv"));
    assert_eq!(rows.len(), 60);
    for name in ["r0e.csv", "psi.csv", "combined_effect.csv", "mobility_coefficients.csv"] {
        let (h, rows) = read_csv(&summary.join(name));
        let (lo, hi) = (column(&h, "lower"), column(&h, "upper"));
        for r in &rows {
            assert!(r[lo].parse::<f64>().unwrap() <= r[hi].parse::<f64>().unwrap(), "{name}: {r:?}");
        }
    }
    let (hp, pred) = read_csv(&summary.join("posterior_predictive.csv"));
    assert_eq!(pred.len(), 60);
    let mean_cases = column(&hp, "mean_cases");
    assert!(pred.iter().all(|r| r[mean_cases].parse::<f64>().unwrap() >= 0.0));
    assert_eq!(column(&h, "mean"), 2);

    // With every noise factor set to 1 the summarized trajectory must equal
    // the closed form evaluated on the same draws.
    let fit = dir.path().join("fit");
    let unit = tempfile::tempdir().unwrap();
    let unit_fit = unit.path().join("fit");
    fs::create_dir(&unit_fit).unwrap();
    for f in ["config.json", "bundle.json", "priors.json"] {
        fs::copy(fit.join(f), unit_fit.join(f)).unwrap();
    }
    let mut draws = PosteriorDraws::read_csv(&fit.join("draws.csv")).unwrap();
    let dim = draws.dim();
    for (j, name) in draws.names.clone().iter().enumerate() {
        if name.starts_with("eps_c[") {
            for k in (j..draws.values.len()).step_by(dim) {
                draws.values[k] = 1.0;
            }
        }
    }
    draws.write_csv(&unit_fit.join("draws.csv")).unwrap();
    let mut uc = c.clone();
    uc.out_dir = unit.path().to_owned();
    cmd_summarize(&uc).unwrap();

    let bundle = TimeSeriesBundle::from_json(&unit_fit.join("bundle.json")).unwrap();
    let design = Design::new(60, 10, 5, bundle.covariate_series()).unwrap();
    let layout = ParamLayout::for_design(&design);
    let mut expected = vec![0.0; 60];
    for d in draws.iter_draws() {
        let p = layout.unflatten(d).unwrap();
        for (t, e) in expected.iter_mut().enumerate() {
            let r = design.rates(t, &p).unwrap();
            *e += r.beta_u / (r.eta + r.rho) * (1.0 + r.eta * r.tau / r.nu);
        }
    }
    let n = draws.n_draws() as f64;
    let (_, rows) = read_csv(&unit.path().join("summary/r0e.csv"));
    for (t, r) in rows.iter().enumerate() {
        let got: f64 = r[2].parse().unwrap();
        let want = expected[t] / n;
        assert!((got - want).abs() <= 1e-12 * want, "day {t}: {got} vs {want}");
    }
}

#[test]
fn malformed_cases_file_exits_with_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(&dir.path().join("out"), 30);
    cmd_simulate(&c).unwrap();
    let cases = dir.path().join("out/data/cases.csv");
    let text = fs::read_to_string(&cases).unwrap();
    let broken: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let mut f: Vec<&str> = l.split(',').collect();
            if i == 7 {
                f[2] = "seven";
            }
            f.join(",")
        })
        .collect();
    let broken = broken.join("\n");
    fs::write(&cases, broken).unwrap();
    fs::write(dir.path().join("config.json"), c.to_json()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_epistate"))
        .args(["fit", "--config", "config.json"])
        .current_dir(dir.path())
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cases.csv") && err.contains("line 8"), "{err}");
}

#[test]
fn unknown_config_field_exits_with_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"schema_version": 1, "samplr": {}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_epistate"))
        .args(["simulate", "--config", "c.json"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
