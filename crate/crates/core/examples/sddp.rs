//! Stochastic DDP with parallel forward replicas and a statistical stop,
//! then a cost estimate of the final policy against full enumeration.
//!
//! cargo run --example sddp -- 16

use msddp::generate::{generate_instance, GeneratorSpec};
use msddp::oracle::extensive_form_value;
use msddp::sddp::{exhaustive_policy_cost, sddp_solve, SddpOptions, StopMode};
use msddp::{SolveConfig, ToleranceSchedule};

fn main() -> msddp::Result<()> {
    let replicas: usize = std::env::args()
        .nth(1)
        .map_or(Ok(16), |s| s.parse())
        .expect("replicas");
    let inst = generate_instance(&GeneratorSpec::hydro_toy(4, vec![1, 4, 4, 4], 3))?;
    let config = SolveConfig::new(ToleranceSchedule::from_cost_bound(&inst, 0.05)?)
        .with_seed(2024)
        .with_replicas(replicas)
        .with_max_iterations(200);

    for stop in [StopMode::Statistical, StopMode::Distance] {
        let options = SddpOptions {
            stop,
            ..SddpOptions::default()
        };
        let (state, status) = sddp_solve(&inst, &config, &options)?;
        let last = state.history.last().expect("one iteration");
        println!(
            "{stop:?}: {status:?} after {} iterations, lb {:.5}, ub mean {:.5} +- {:.5}",
            state.iterations(),
            last.lb,
            last.ub_mean.unwrap_or(f64::NAN),
            last.ub_std.unwrap_or(f64::NAN),
        );
        let policy = exhaustive_policy_cost(&inst, &state.pools, config.lp_tolerance)?;
        println!("  exact expected cost of the final policy {policy:.5}");
    }
    let f_star = extensive_form_value(&inst, config.lp_tolerance)?.value;
    println!("F* = {f_star:.5}");
    Ok(())
}
