//! Runs the invariant suite behind `epistate validate`.
//!
//!     cargo run --release --example validate_suite

use epistate::validate::run_all;

fn main() {
    let mut failed = 0;
    for (check, secs) in run_all(1) {
        failed += usize::from(!check.passed);
        println!(
            "{} {:<22} {secs:>6.2}s  {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    std::process::exit(i32::from(failed > 0));
}
