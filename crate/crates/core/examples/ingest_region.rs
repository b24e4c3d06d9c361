//! Loads a region from cumulative case/death and mobility CSVs, applying the
//! county and state start-day rules.
//!
//!     cargo run --example ingest_region

use std::fs;

use epistate::ingest::{load_region, IngestOptions, Metric, StartMode};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases.csv");
    let mobility = dir.path().join("mobility.csv");

    // Daily new cases 1,2,0,3,1,6,8,... with a downward correction on day 9.
    let daily: [i64; 16] = [1, 2, 0, 3, 1, 6, 8, 12, -2, 20, 25, 31, 40, 38, 45, 50];
    let mut text = String::from("date,region_id,cumulative_cases,cumulative_deaths\n");
    let (mut c, mut d) = (0i64, 0i64);
    for (t, x) in daily.iter().enumerate() {
        c += x;
        d += (t as i64) / 6;
        text.push_str(&format!("2020-03-{:02},county_a,{c},{d}\n", t + 1));
    }
    fs::write(&cases, text).unwrap();

    let mut text = String::from("date,region_id,metric,value\n");
    for t in 0..16 {
        for (m, v) in [
            ("completely_home", 0.25 + 0.01 * t as f64),
            ("full_time_work", 0.08 - 0.002 * t as f64 + 0.003 * (t % 3) as f64),
            ("restaurant_visits", 100.0 - 3.0 * t as f64),
        ] {
            // One missing day, filled by interpolation.
            if t == 10 && m == "restaurant_visits" {
                continue;
            }
            text.push_str(&format!("2020-03-{:02},county_a,{m},{v}\n", t + 1));
        }
    }
    fs::write(&mobility, text).unwrap();

    for mode in [StartMode::County, StartMode::State] {
        let options = IngestOptions {
            mode,
            ..IngestOptions::default()
        };
        match load_region(&cases, &mobility, "county_a", 50_000, &options) {
            Ok(b) => {
                println!("{mode} rule: start {} with I_d(0) = {}, {} days", b.dates[0], b.i_d0, b.n_days());
                println!("  cases  {:?}", b.daily_cases);
                println!("  deaths {:?}", b.daily_deaths);
                for cov in &b.covariates {
                    let v: Vec<String> = cov.values.iter().take(6).map(|x| format!("{x:.2}")).collect();
                    println!("  {:<18} raw mean {:.3} sd {:.4}: {} ...", cov.metric, cov.mean, cov.sd, v.join(" "));
                }
            }
            Err(e) => println!("{mode} rule: {e}"),
        }
    }

    let only_work = IngestOptions {
        metrics: vec![Metric::FullTimeWork],
        bandwidth_days: None,
        ..IngestOptions::default()
    };
    let b = load_region(&cases, &mobility, "county_a", 50_000, &only_work).unwrap();
    println!("unsmoothed full_time_work: {:?}", b.covariates[0].values);
}
