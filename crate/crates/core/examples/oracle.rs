//! Ground truth for a small instance: the deterministic equivalent, exact
//! value functions at chosen states, and a grid value function with its
//! error bound used to audit a cut pool.
//!
//! cargo run --example oracle

use msddp::generate::{generate_instance, GeneratorSpec};
use msddp::model::cost_lipschitz_bound;
use msddp::oracle::{
    audit_cut_validity, enumerate_paths, exact_value, exact_value_grid, extensive_form_value,
};
use msddp::sddp::{sddp_solve, SddpOptions, StopMode};
use msddp::{SolveConfig, ToleranceSchedule};

fn main() -> msddp::Result<()> {
    let tol = 1e-9;
    let inst = generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 3], 1, 9))?;
    let sol = extensive_form_value(&inst, tol)?;
    println!("{} scenario paths", enumerate_paths(&inst).len());
    println!("F* = {:.6} at x1 = {:?}", sol.value, sol.first_stage);
    for x in [0.0, 0.5, 1.0] {
        println!(
            "V_2({x}) = {:.6}   V_3({x}) = {:.6}",
            exact_value(&inst, 2, &[x], tol)?,
            exact_value(&inst, 3, &[x], tol)?
        );
    }

    let lip = cost_lipschitz_bound(&inst);
    let grid = exact_value_grid(&inst, 2, 16, &lip, tol)?;
    println!(
        "grid V_2 with {} nodes, error bound {:.4}",
        grid.values.len(),
        grid.error_bound()
    );

    let config =
        SolveConfig::new(ToleranceSchedule::from_cost_bound(&inst, 0.05)?).with_max_iterations(10);
    let options = SddpOptions {
        stop: StopMode::Budget,
        ..SddpOptions::default()
    };
    let (state, _) = sddp_solve(&inst, &config, &options)?;
    let probes: Vec<Vec<f64>> = (0..=20).map(|j| vec![j as f64 / 20.0]).collect();
    let worst = audit_cut_validity(&state.pools[0], &grid, &probes)?;
    println!("max pool - grid over probes after 10 iterations: {worst:.3e}");
    Ok(())
}
