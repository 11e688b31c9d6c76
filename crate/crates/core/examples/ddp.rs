//! Dual dynamic programming on a single-scenario inventory instance, with
//! the optimal value from the deterministic equivalent for comparison.
//!
//! cargo run --example ddp

use msddp::ddp::ddp_solve;
use msddp::generate::{generate_instance, GeneratorSpec};
use msddp::oracle::extensive_form_value;
use msddp::{SolveConfig, ToleranceSchedule};

fn main() -> msddp::Result<()> {
    let inst = generate_instance(&GeneratorSpec::inventory(5, vec![1; 5], 2, 7))?;
    let schedule = ToleranceSchedule::from_cost_bound(&inst, 0.001)?;
    println!("eps = {:?}", schedule.eps);
    let config = SolveConfig::new(schedule);
    println!("gap threshold {:.4}", config.gap_threshold());

    let (state, status) = ddp_solve(&inst, &config)?;
    for r in &state.history {
        println!(
            "k={:<3} lb={:>9.5} ub={:>9.5} gap={:.2e} saturated={:?}",
            r.k,
            r.lb,
            r.ub.unwrap_or(f64::NAN),
            r.gap.unwrap_or(f64::NAN),
            r.saturated
        );
    }
    let f_star = extensive_form_value(&inst, config.lp_tolerance)?.value;
    println!(
        "{status:?} after {} iterations; F* = {f_star:.5}",
        state.iterations()
    );
    println!("first-stage decision {:?}", state.first_stage);
    Ok(())
}
