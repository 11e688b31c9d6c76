//! Runs the acceptance battery from the library and prints the report.
//!
//! cargo run --release --example suite -- full

use msddp::suite::{run_suite, Level, SuiteConfig};

fn main() {
    let level = match std::env::args().nth(1).as_deref() {
        Some("full") => Level::Full,
        _ => Level::Smoke,
    };
    let report = run_suite(&SuiteConfig::new(level));
    for c in &report.criteria {
        println!("{}", c.summary());
    }
    println!("passed: {}", report.passed);
}
