//! Explorative dual dynamic programming over SAA instances.
//!
//! Every forward stage solves all `N_t` realizations from the current state
//! and continues from the candidate farthest (l-infinity) from the stage's
//! saturated set. The run stops once the first-stage decision lies within
//! `delta_0` of a saturated first-stage point.
//!
//! The saturated-set helpers here are shared with the other dynamic
//! solvers, which record the same bookkeeping as telemetry.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cutmodel::{initial_pools, CutPool};
use crate::engine::{backward_pass, solve_all, ForwardPath};
use crate::error::{Error, Result};
use crate::model::{linf, stage_capacity, Instance, SolveConfig, StageShape, ToleranceSchedule};
use crate::telemetry::{IterationRecord, RunStatus, SolverState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturatedPoint {
    pub state: Vec<f64>,
    /// `eps_t` certified for this point.
    pub eps: f64,
    pub iteration: usize,
}

/// `S_t`: states of stage `t` whose downstream model is `eps_t`-tight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturatedSet {
    pub stage: usize,
    pub dim: usize,
    pub delta: f64,
    pub points: Vec<SaturatedPoint>,
}

impl SaturatedSet {
    pub fn new(stage: usize, dim: usize, delta: f64) -> Self {
        Self {
            stage,
            dim,
            delta,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// l-infinity distance to the nearest member, `+inf` when empty.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| linf(&p.state, x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Adds `x` when it is farther than `delta` from every member.
    pub fn try_insert(&mut self, x: &[f64], eps: f64, iteration: usize) -> bool {
        if self.distance(x) > self.delta {
            self.points.push(SaturatedPoint {
                state: x.to_vec(),
                eps,
                iteration,
            });
            true
        } else {
            false
        }
    }

    /// `(D_t/delta_t + 1)^{n_t}`.
    pub fn capacity(&self, shape: &StageShape) -> f64 {
        stage_capacity(shape, self.delta)
    }

    /// Smallest pairwise l-infinity distance among members.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min(linf(&a.state, &b.state));
            }
        }
        best
    }
}

/// `g_t(x)`: distance to `set`, or zero for the last stage (no set).
pub fn distance_to_saturated(set: Option<&SaturatedSet>, x: &[f64]) -> f64 {
    set.map_or(0.0, |s| s.distance(x))
}

/// Empty sets for stages `1..T-1`.
pub fn new_saturated_sets(
    inst: &Instance,
    schedule: &ToleranceSchedule,
) -> Result<Vec<SaturatedSet>> {
    if schedule.num_stages() != inst.num_stages {
        return Err(Error::Dimension(format!(
            "schedule has {} stages, instance has {}",
            schedule.num_stages(),
            inst.num_stages
        )));
    }
    Ok((1..inst.num_stages)
        .map(|t| SaturatedSet::new(t, inst.shape(t).n, schedule.delta[t - 1]))
        .collect())
}

/// `g_t(x_t)` for `t = 1..T-1`.
pub fn path_distances(sets: &[SaturatedSet], states: &[Vec<f64>]) -> Vec<f64> {
    sets.iter()
        .zip(states)
        .map(|(s, x)| s.distance(x))
        .collect()
}

pub fn saturated_counts(sets: &[SaturatedSet]) -> Vec<usize> {
    sets.iter().map(SaturatedSet::len).collect()
}

/// Backward saturation rule. For `t = T..=2`: when `g_t(x_t) <= delta_t`
/// (always at `t = T`), `x_{t-1}` joins `S_{t-1}` if it is still farther
/// than `delta_{t-1}` from every member. `distances[t-1]` is `g_t(x_t)`
/// from the forward phase. Returns the stages that grew, ascending.
pub fn admit_saturated(
    sets: &mut [SaturatedSet],
    distances: &[f64],
    states: &[Vec<f64>],
    schedule: &ToleranceSchedule,
    k: usize,
) -> Vec<usize> {
    let t_max = sets.len() + 1;
    let mut grown = Vec::new();
    for t in (2..=t_max).rev() {
        let g_t = if t == t_max { 0.0 } else { distances[t - 1] };
        if g_t <= schedule.delta[t - 1] {
            let s = t - 1;
            if sets[s - 1].try_insert(&states[s - 1], schedule.eps[s], k) {
                grown.push(s);
            }
        }
    }
    grown.reverse();
    grown
}

/// Candidates, their distances and the choice at one forward stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorativeStep {
    pub stage: usize,
    pub candidates: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    /// 0-based index attaining the largest distance (lowest on ties).
    pub chosen: usize,
}

/// First index of the maximum; `+inf` compares equal to `+inf`.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EddpForward {
    pub path: ForwardPath,
    pub steps: Vec<ExplorativeStep>,
    /// `g_1(x_1)`.
    pub first_stage_distance: f64,
}

/// Forward phase: all candidates per stage, most distinguishable chosen.
pub fn eddp_forward(
    inst: &Instance,
    pools: &[CutPool],
    sets: &[SaturatedSet],
    tol: f64,
) -> Result<EddpForward> {
    let t_max = inst.num_stages;
    let mut path = ForwardPath::empty(t_max);
    let mut steps = Vec::with_capacity(t_max);
    let mut chi: Vec<f64> = Vec::new();
    for t in 1..=t_max {
        let sols = solve_all(inst, pools, t, &chi, tol)?;
        let set = sets.get(t - 1);
        let distances: Vec<f64> = sols
            .iter()
            .map(|s| distance_to_saturated(set, &s.x))
            .collect();
        let chosen = argmax_lowest(&distances);
        let sol = &sols[chosen];
        path.push(sol, chosen, sol.stage_cost(&inst.realizations(t)[chosen]));
        chi = sol.x.clone();
        steps.push(ExplorativeStep {
            stage: t,
            candidates: sols.into_iter().map(|s| s.x).collect(),
            distances,
            chosen,
        });
    }
    let first_stage_distance = steps[0].distances[0];
    Ok(EddpForward {
        path,
        steps,
        first_stage_distance,
    })
}

/// Backward phase: aggregate cuts at the chosen states, then the
/// saturation rule. Returns the stages whose sets grew.
#[allow(clippy::too_many_arguments)]
pub fn eddp_backward(
    inst: &Instance,
    forward: &EddpForward,
    pools: &mut [CutPool],
    sets: &mut [SaturatedSet],
    schedule: &ToleranceSchedule,
    k: usize,
    tol: f64,
) -> Result<Vec<usize>> {
    backward_pass(inst, pools, &forward.path.states, k, tol)?;
    let distances: Vec<f64> = forward.steps[..inst.num_stages - 1]
        .iter()
        .map(|s| s.distances[s.chosen])
        .collect();
    Ok(admit_saturated(
        sets,
        &distances,
        &forward.path.states,
        schedule,
        k,
    ))
}

pub type EddpState = SolverState;

/// Runs until `g_1(x_1) <= delta_0` or the iteration budget.
pub fn eddp_solve(inst: &Instance, config: &SolveConfig) -> Result<(EddpState, RunStatus)> {
    config.validate()?;
    inst.check()?;
    let schedule = &config.schedule;
    let tol = config.lp_tolerance;
    let mut pools = initial_pools(inst)?;
    let mut sets = new_saturated_sets(inst, schedule)?;
    let radius = schedule.first_stage_radius();
    let mut history = Vec::new();
    let mut status = RunStatus::BudgetExhausted;
    let mut last: Option<EddpForward> = None;
    for k in 1..=config.max_iterations {
        let clock = Instant::now();
        let fwd = eddp_forward(inst, &pools, &sets, tol)?;
        let stop = fwd.first_stage_distance <= radius;
        let run_backward = !stop && k < config.max_iterations;
        let admitted = if run_backward {
            eddp_backward(inst, &fwd, &mut pools, &mut sets, schedule, k, tol)?
        } else {
            Vec::new()
        };
        let distances = fwd.steps[..inst.num_stages - 1]
            .iter()
            .map(|s| s.distances[s.chosen])
            .collect();
        log::debug!(
            "eddp k={k} lb={:.6} g1={} saturated={:?}",
            fwd.path.lower_bound(),
            fwd.first_stage_distance,
            saturated_counts(&sets)
        );
        history.push(IterationRecord {
            k,
            lb: fwd.path.lower_bound(),
            ub: None,
            ub_mean: None,
            ub_std: None,
            gap: None,
            distances,
            g_bar: Vec::new(),
            saturated: saturated_counts(&sets),
            new_saturation: Some(!admitted.is_empty()),
            admitted,
            indices: fwd.path.one_based_indices(),
            path: fwd.path.states.clone(),
            path_cost: fwd.path.cost(inst.lambda),
            backward: run_backward,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        last = Some(fwd);
        if stop {
            status = RunStatus::Converged;
            break;
        }
    }
    let last = last.expect("at least one iteration");
    log::info!(
        "eddp finished after {} iterations: {status:?}",
        history.len()
    );
    Ok((
        SolverState {
            pools,
            sets,
            lb: last.path.lower_bound(),
            ub: None,
            first_stage: last.path.states[0].clone(),
            history,
        },
        status,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddp::ddp_forward;
    use crate::generate::{generate_instance, GeneratorSpec};
    use crate::model::cost_lipschitz_bound;
    use crate::oracle::{exact_stage_objective, exact_value, extensive_form_value};
    use approx::assert_abs_diff_eq;

    fn config(inst: &Instance, delta: f64) -> SolveConfig {
        SolveConfig::new(ToleranceSchedule::from_cost_bound(inst, delta).unwrap())
            .with_max_iterations(200)
    }

    #[test]
    fn distance_conventions() {
        let mut set = SaturatedSet::new(1, 1, 0.1);
        assert_eq!(set.distance(&[0.3]), f64::INFINITY);
        assert!(set.try_insert(&[0.0], 0.0, 1));
        assert!(set.try_insert(&[1.0], 0.0, 1));
        assert_abs_diff_eq!(distance_to_saturated(Some(&set), &[0.4]), 0.4);
        assert_eq!(distance_to_saturated(None, &[0.4]), 0.0);
        assert!(!set.try_insert(&[0.95], 0.0, 2));
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax_lowest(&[0.1, 0.7]), 1);
        assert_eq!(argmax_lowest(&[0.7, 0.7, 0.2]), 0);
        assert_eq!(argmax_lowest(&[f64::INFINITY, f64::INFINITY]), 0);
    }

    #[test]
    fn admission_keeps_separation() {
        let inst = generate_instance(&GeneratorSpec::inventory(3, vec![1, 1, 1], 1, 4)).unwrap();
        let sched = ToleranceSchedule::uniform(3, 0.25, 1.0, 0.9).unwrap();
        let mut sets = new_saturated_sets(&inst, &sched).unwrap();
        let path = vec![vec![0.5], vec![0.5], vec![0.5]];
        let d = path_distances(&sets, &path);
        assert!(d.iter().all(|g| g.is_infinite()));
        // g_3 = 0 admits x_2; g_2 = inf blocks x_1
        assert_eq!(admit_saturated(&mut sets, &d, &path, &sched, 1), vec![2]);
        let d = path_distances(&sets, &path);
        assert_eq!(d[1], 0.0);
        assert_eq!(admit_saturated(&mut sets, &d, &path, &sched, 2), vec![1]);
        let d = path_distances(&sets, &path);
        assert!(admit_saturated(&mut sets, &d, &path, &sched, 3).is_empty());
        assert_eq!(saturated_counts(&sets), vec![1, 1]);
    }

    #[test]
    fn constructed_saturated_sets_trigger_termination() {
        let inst = generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 2], 1, 3)).unwrap();
        let sched = ToleranceSchedule::from_cost_bound(&inst, 0.25).unwrap();
        let pools = initial_pools(&inst).unwrap();
        let mut sets = new_saturated_sets(&inst, &sched).unwrap();
        for set in &mut sets {
            for v in [0.0, 0.3, 0.6, 0.9] {
                set.try_insert(&[v], 0.0, 0);
            }
        }
        let fwd = eddp_forward(&inst, &pools, &sets, 1e-9).unwrap();
        assert!(fwd.first_stage_distance <= 0.25);
    }

    #[test]
    fn single_scenario_matches_ddp_forward() {
        let inst = generate_instance(&GeneratorSpec::inventory(4, vec![1; 4], 2, 8)).unwrap();
        let pools = initial_pools(&inst).unwrap();
        let sets = new_saturated_sets(
            &inst,
            &ToleranceSchedule::from_cost_bound(&inst, 0.2).unwrap(),
        )
        .unwrap();
        let e = eddp_forward(&inst, &pools, &sets, 1e-9).unwrap();
        let d = ddp_forward(&inst, &pools, 1e-9).unwrap();
        assert_eq!(e.path, d);
    }

    #[test]
    fn terminates_within_capacity_with_certified_policy() {
        for seed in 0..4 {
            let inst =
                generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 2], 1, seed)).unwrap();
            let cfg = config(&inst, 0.25);
            let (state, status) = eddp_solve(&inst, &cfg).unwrap();
            assert_eq!(status, RunStatus::Converged);
            let cap = inst.saturation_capacity(&cfg.schedule);
            assert!(state.iterations() as f64 <= cap + 1.0);
            let f_star = extensive_form_value(&inst, 1e-9).unwrap().value;
            let f_x1 = exact_stage_objective(&inst, 1, 0, &state.first_stage, 1e-9).unwrap();
            assert!(f_x1 - f_star <= cfg.schedule.eps[0] + 1e-8);
            // progress and separation
            for w in state.history.windows(2) {
                assert!(w[1].saturated_total() > w[0].saturated_total() || !w[1].backward);
            }
            for set in &state.sets {
                assert!(set.min_separation() > set.delta);
            }
        }
    }

    #[test]
    fn admitted_points_are_saturated() {
        let inst = generate_instance(&GeneratorSpec::inventory(3, vec![1, 3, 3], 1, 11)).unwrap();
        let cfg = config(&inst, 0.25);
        let (state, _) = eddp_solve(&inst, &cfg).unwrap();
        for set in &state.sets {
            let t = set.stage;
            let pool = &state.pools[t - 1];
            for p in &set.points {
                let v = exact_value(&inst, t + 1, &p.state, 1e-9).unwrap();
                let model = pool.eval_at_version(&p.state, p.iteration).unwrap();
                assert!(
                    v - model <= p.eps + 1e-8,
                    "stage {t}: gap {} > {}",
                    v - model,
                    p.eps
                );
            }
        }
        assert!(cost_lipschitz_bound(&inst)[0] > 0.0);
    }
}
