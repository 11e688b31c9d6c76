//! Dual dynamic programming for single-scenario instances.
//!
//! Each iteration runs a forward pass with the current models, then adds one
//! cut per stage going backward. The run stops once the best path cost and
//! the first-stage model value are within `sum_t lambda^{t-1} eps_{t-1}`.
//! Saturated sets are tracked as telemetry only.

use std::time::Instant;

use crate::cutmodel::{initial_pools, CutPool};
use crate::eddp::{admit_saturated, new_saturated_sets, path_distances, saturated_counts};
use crate::engine::{backward_pass, replay_forward};
use crate::error::{Error, Result};
use crate::model::{Instance, SolveConfig};
use crate::telemetry::{IterationRecord, RunStatus, SolverState};

pub use crate::engine::ForwardPath;

pub type DdpState = SolverState;

fn require_single_scenario(inst: &Instance) -> Result<()> {
    if inst.is_single_scenario() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "ddp needs one realization per stage, got {:?}",
            inst.scenario_counts()
        )))
    }
}

/// Forward pass `x_t in argmin c_t^T x + lambda V_{t+1}^{k-1}(x)`.
pub fn ddp_forward(inst: &Instance, pools: &[CutPool], tol: f64) -> Result<ForwardPath> {
    require_single_scenario(inst)?;
    replay_forward(inst, pools, &vec![0; inst.num_stages], tol)
}

/// One cut per stage `T..=2` at the path states, born at `k`.
pub fn ddp_backward(
    inst: &Instance,
    path: &ForwardPath,
    pools: &mut [CutPool],
    k: usize,
    tol: f64,
) -> Result<()> {
    require_single_scenario(inst)?;
    backward_pass(inst, pools, &path.states, k, tol)
}

/// Runs until `ub - lb <= gap threshold` or the iteration budget.
pub fn ddp_solve(inst: &Instance, config: &SolveConfig) -> Result<(DdpState, RunStatus)> {
    config.validate()?;
    inst.check()?;
    require_single_scenario(inst)?;
    let schedule = &config.schedule;
    let tol = config.lp_tolerance;
    let threshold = config.gap_threshold();
    let mut pools = initial_pools(inst)?;
    let mut sets = new_saturated_sets(inst, schedule)?;
    let mut ub = f64::INFINITY;
    let mut history = Vec::new();
    let mut status = RunStatus::BudgetExhausted;
    let mut first_stage = Vec::new();
    let mut lb = f64::NEG_INFINITY;
    for k in 1..=config.max_iterations {
        let clock = Instant::now();
        let path = ddp_forward(inst, &pools, tol)?;
        let cost = path.cost(inst.lambda);
        if cost < ub {
            ub = cost;
        }
        lb = path.lower_bound();
        first_stage = path.states[0].clone();
        let gap = ub - lb;
        let stop = gap <= threshold;
        let distances = path_distances(&sets, &path.states);
        let run_backward = !stop && k < config.max_iterations;
        let admitted = if run_backward {
            ddp_backward(inst, &path, &mut pools, k, tol)?;
            admit_saturated(&mut sets, &distances, &path.states, schedule, k)
        } else {
            Vec::new()
        };
        log::debug!("ddp k={k} lb={lb:.6} ub={ub:.6} gap={gap:.3e}");
        history.push(IterationRecord {
            k,
            lb,
            ub: Some(ub),
            ub_mean: None,
            ub_std: None,
            gap: Some(gap),
            distances,
            g_bar: Vec::new(),
            saturated: saturated_counts(&sets),
            new_saturation: Some(!admitted.is_empty()),
            admitted,
            indices: path.one_based_indices(),
            path: path.states.clone(),
            path_cost: cost,
            backward: run_backward,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        if stop {
            status = RunStatus::Converged;
            break;
        }
    }
    log::info!(
        "ddp finished after {} iterations: {status:?}",
        history.len()
    );
    Ok((
        SolverState {
            pools,
            sets,
            lb,
            ub: Some(ub),
            first_stage,
            history,
        },
        status,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_instance, GeneratorSpec};
    use crate::model::{Realization, StageShape, ToleranceSchedule};
    use crate::oracle::{exact_stage_objective, exact_value, extensive_form_value};
    use approx::assert_abs_diff_eq;

    const TOL: f64 = 1e-9;

    fn det(num_stages: usize, n: usize, seed: u64) -> Instance {
        generate_instance(&GeneratorSpec::inventory(
            num_stages,
            vec![1; num_stages],
            n,
            seed,
        ))
        .unwrap()
    }

    fn config(inst: &Instance, delta: f64) -> SolveConfig {
        SolveConfig::new(ToleranceSchedule::from_cost_bound(inst, delta).unwrap())
            .with_max_iterations(500)
    }

    #[test]
    fn rejects_stochastic_instances() {
        let inst = generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 1], 1, 1)).unwrap();
        assert!(ddp_solve(&inst, &config(&inst, 0.25)).is_err());
    }

    #[test]
    fn two_stage_with_exact_pool_follows_optimal_policy() {
        let inst = det(2, 1, 5);
        let (state, status) = ddp_solve(&inst, &config(&inst, 0.1)).unwrap();
        assert_eq!(status, RunStatus::Converged);
        let f_star = extensive_form_value(&inst, TOL).unwrap().value;
        let path = ddp_forward(&inst, &state.pools, TOL).unwrap();
        assert_abs_diff_eq!(path.cost(inst.lambda), f_star, epsilon = 1e-7);
    }

    #[test]
    fn floor_only_forward_is_myopic() {
        let inst = det(3, 1, 2);
        let pools = initial_pools(&inst).unwrap();
        let path = ddp_forward(&inst, &pools, TOL).unwrap();
        // with flat continuation each stage minimizes its own cost
        let c1 = inst.realizations(1)[0].c[0];
        let expected = if c1 > 0.0 { 0.0 } else { 1.0 };
        assert_abs_diff_eq!(path.states[0][0], expected, epsilon = 1e-12);
    }

    #[test]
    fn backward_on_two_stages_adds_one_cut() {
        let inst = det(2, 1, 3);
        let mut pools = initial_pools(&inst).unwrap();
        let path = ddp_forward(&inst, &pools, TOL).unwrap();
        ddp_backward(&inst, &path, &mut pools, 1, TOL).unwrap();
        assert_eq!(pools.len(), 1);
        assert_eq!(pools[0].len(), 1);
    }

    #[test]
    fn last_stage_cut_is_exact_and_repeat_is_idempotent() {
        let inst = det(3, 2, 4);
        let mut pools = initial_pools(&inst).unwrap();
        let path = ddp_forward(&inst, &pools, TOL).unwrap();
        ddp_backward(&inst, &path, &mut pools, 1, TOL).unwrap();
        let x = &path.states[1];
        let v = exact_value(&inst, 3, x, TOL).unwrap();
        assert_abs_diff_eq!(pools[1].eval(x).unwrap(), v, epsilon = 1e-9);
        let before: Vec<f64> = (0..2)
            .map(|s| pools[s].eval(&path.states[s]).unwrap())
            .collect();
        ddp_backward(&inst, &path, &mut pools, 2, TOL).unwrap();
        for s in 0..2 {
            let after = pools[s].eval(&path.states[s]).unwrap();
            assert!(after - before[s] <= 1e-9);
        }
    }

    #[test]
    fn sandwich_and_monotone_bounds() {
        for seed in 0..5 {
            let inst = det(3, 1, seed);
            let f_star = extensive_form_value(&inst, TOL).unwrap().value;
            let (state, status) = ddp_solve(&inst, &config(&inst, 0.25)).unwrap();
            assert_eq!(status, RunStatus::Converged);
            for (i, r) in state.history.iter().enumerate() {
                let slack = 10.0 * TOL * r.k as f64;
                assert!(r.lb <= f_star + slack && f_star <= r.ub.unwrap() + slack);
                if i > 0 {
                    assert!(r.lb >= state.history[i - 1].lb - 1e-12);
                    assert!(r.ub.unwrap() <= state.history[i - 1].ub.unwrap());
                }
            }
        }
    }

    #[test]
    fn linear_value_function_stops_fast() {
        // x_t = x_{t-1} forced: V_2 is linear, one cut is exact
        let s = StageShape::new(vec![0.0], vec![1.0], 1, 0);
        let link = Realization {
            A: vec![vec![1.0]],
            B: vec![vec![1.0]],
            b: vec![0.0],
            c: vec![0.5],
            G: vec![],
            Q: vec![],
            q: vec![],
        };
        let inst = Instance {
            num_stages: 3,
            lambda: 1.0,
            stages: vec![StageShape::new(vec![0.0], vec![1.0], 0, 0), s.clone(), s],
            scenarios: vec![
                vec![Realization::cost_only(vec![-2.0])],
                vec![link.clone()],
                vec![link],
            ],
        };
        let (state, status) = ddp_solve(&inst, &config(&inst, 0.1)).unwrap();
        assert_eq!(status, RunStatus::Converged);
        assert!(state.iterations() <= 2, "{} iterations", state.iterations());
    }

    #[test]
    fn gap_stop_certifies_first_stage() {
        for seed in 0..5 {
            let inst = det(4, 1, 20 + seed);
            let cfg = config(&inst, 0.25);
            let (state, _) = ddp_solve(&inst, &cfg).unwrap();
            let f_star = extensive_form_value(&inst, TOL).unwrap().value;
            let f1 = exact_stage_objective(&inst, 1, 0, &state.first_stage, TOL).unwrap();
            assert!(f1 - f_star <= cfg.schedule.eps[0] + 1e-7);
            let bound = inst.saturation_capacity(&cfg.schedule) + 1.0;
            assert!(state.iterations() as f64 <= bound);
        }
    }

    #[test]
    fn budget_is_reported() {
        let inst = det(4, 2, 9);
        let mut cfg = config(&inst, 0.25);
        cfg.max_iterations = 2;
        cfg.gap_override = Some(-1.0);
        let (state, status) = ddp_solve(&inst, &cfg).unwrap();
        assert_eq!(status, RunStatus::BudgetExhausted);
        assert_eq!(state.iterations(), 2);
        assert!(!state.history[1].backward);
    }
}
