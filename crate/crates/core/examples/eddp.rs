//! Explorative DDP on a small sample-average instance: watch the saturated
//! sets grow until the first-stage decision is itself saturated.
//!
//! cargo run --example eddp -- 0.1

use msddp::eddp::eddp_solve;
use msddp::generate::{generate_instance, GeneratorSpec};
use msddp::oracle::{exact_stage_objective, extensive_form_value};
use msddp::{SolveConfig, ToleranceSchedule};

fn main() -> msddp::Result<()> {
    let delta: f64 = std::env::args()
        .nth(1)
        .map_or(Ok(0.1), |s| s.parse())
        .expect("delta");
    let inst = generate_instance(&GeneratorSpec::inventory(4, vec![1, 3, 3, 3], 1, 5))?;
    let config = SolveConfig::new(ToleranceSchedule::from_cost_bound(&inst, delta)?);
    let capacity = inst.saturation_capacity(&config.schedule);

    let (state, status) = eddp_solve(&inst, &config)?;
    for r in &state.history {
        println!(
            "k={:<3} lb={:>9.5} g1={:>6.3} |S_t|={:?} chosen={:?}",
            r.k,
            r.lb,
            r.first_stage_distance(),
            r.saturated,
            r.indices
        );
    }
    println!(
        "{status:?} after {} iterations (bound {})",
        state.iterations(),
        capacity + 1.0
    );

    let tol = config.lp_tolerance;
    let f_star = extensive_form_value(&inst, tol)?.value;
    let f1 = exact_stage_objective(&inst, 1, 0, &state.first_stage, tol)?;
    println!(
        "F(x1) - F* = {:.2e} <= eps_0 = {:.3}",
        f1 - f_star,
        config.schedule.eps[0]
    );
    Ok(())
}
