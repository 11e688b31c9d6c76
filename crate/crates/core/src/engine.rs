//! Stage solves and aggregate cuts shared by the dynamic solvers.
//!
//! Pools are held for stages `2..=T` (`pools[t-2]` models `V_t`) and are
//! appended to in place: during iteration `k` the forward phase sees the
//! cuts born before `k`, and the backward phase at stage `t` already sees
//! the cut just added to stage `t+1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutmodel::{average_cuts, Cut, CutPool};
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::subproblem::{cut_from_solution, solve_stage, StageRef, StageSolution};

/// One forward trajectory `x_1..x_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardPath {
    pub states: Vec<Vec<f64>>,
    /// `c_t^T x_t` along the path.
    pub stage_costs: Vec<f64>,
    /// Optimal stage-LP values `c^T x_t + lambda theta_t` along the path.
    pub model_values: Vec<f64>,
    /// 0-based realization used at each stage.
    pub scenarios: Vec<usize>,
}

impl ForwardPath {
    /// `sum_t lambda^{t-1} c_t^T x_t`.
    pub fn cost(&self, lambda: f64) -> f64 {
        let mut w = 1.0;
        let mut total = 0.0;
        for c in &self.stage_costs {
            total += w * c;
            w *= lambda;
        }
        total
    }

    /// First-stage model value, the lower bound of the iteration.
    pub fn lower_bound(&self) -> f64 {
        self.model_values[0]
    }

    pub fn one_based_indices(&self) -> Vec<usize> {
        self.scenarios.iter().map(|i| i + 1).collect()
    }

    pub(crate) fn push(&mut self, sol: &StageSolution, scenario: usize, cost: f64) {
        self.states.push(sol.x.clone());
        self.stage_costs.push(cost);
        self.model_values.push(sol.value);
        self.scenarios.push(scenario);
    }

    pub(crate) fn empty(t: usize) -> Self {
        Self {
            states: Vec::with_capacity(t),
            stage_costs: Vec::with_capacity(t),
            model_values: Vec::with_capacity(t),
            scenarios: Vec::with_capacity(t),
        }
    }
}

pub(crate) fn continuation<'a>(
    inst: &Instance,
    pools: &'a [CutPool],
    t: usize,
) -> Option<&'a CutPool> {
    (t < inst.num_stages).then(|| &pools[t - 1])
}

/// Solves realization `i` (0-based) of stage `t` at incoming state `chi`.
pub(crate) fn solve_at(
    inst: &Instance,
    pools: &[CutPool],
    t: usize,
    i: usize,
    chi: &[f64],
    tol: f64,
) -> Result<StageSolution> {
    solve_stage(
        StageRef {
            stage: t,
            scenario: i + 1,
        },
        inst.shape(t),
        &inst.realizations(t)[i],
        chi,
        continuation(inst, pools, t),
        inst.lambda,
        tol,
    )
}

/// All realizations of stage `t` at `chi`, in index order.
pub(crate) fn solve_all(
    inst: &Instance,
    pools: &[CutPool],
    t: usize,
    chi: &[f64],
    tol: f64,
) -> Result<Vec<StageSolution>> {
    (0..inst.realizations(t).len())
        .into_par_iter()
        .map(|i| solve_at(inst, pools, t, i, chi, tol))
        .collect()
}

/// Averaged cut of `V_t` at `chi` built from all realizations of stage `t`.
pub fn aggregate_cut(
    inst: &Instance,
    pools: &[CutPool],
    t: usize,
    chi: &[f64],
    born: usize,
    tol: f64,
) -> Result<Cut> {
    if t < 2 || t > inst.num_stages {
        return Err(Error::InvalidInput(format!(
            "no value function for stage {t}"
        )));
    }
    let sols = solve_all(inst, pools, t, chi, tol)?;
    let cuts = sols
        .iter()
        .zip(inst.realizations(t))
        .map(|(s, r)| cut_from_solution(s, r, chi, born))
        .collect::<Result<Vec<_>>>()?;
    average_cuts(&cuts, born)
}

/// Adds one aggregate cut per stage `T..=2` at `states[t-2]`.
pub(crate) fn backward_pass(
    inst: &Instance,
    pools: &mut [CutPool],
    states: &[Vec<f64>],
    born: usize,
    tol: f64,
) -> Result<()> {
    for t in (2..=inst.num_stages).rev() {
        let cut = aggregate_cut(inst, pools, t, &states[t - 2], born, tol)?;
        pools[t - 2].push(cut)?;
    }
    Ok(())
}

/// Forward pass through a fixed realization sequence (0-based, one entry
/// per stage, the first ignored).
pub fn replay_forward(
    inst: &Instance,
    pools: &[CutPool],
    scenarios: &[usize],
    tol: f64,
) -> Result<ForwardPath> {
    let t_max = inst.num_stages;
    if scenarios.len() != t_max {
        return Err(Error::Dimension(format!(
            "{} indices for {t_max} stages",
            scenarios.len()
        )));
    }
    let mut path = ForwardPath::empty(t_max);
    let mut chi: Vec<f64> = Vec::new();
    for t in 1..=t_max {
        let i = if t == 1 { 0 } else { scenarios[t - 1] };
        if i >= inst.realizations(t).len() {
            return Err(Error::InvalidInput(format!(
                "stage {t} has no realization {}",
                i + 1
            )));
        }
        let sol = solve_at(inst, pools, t, i, &chi, tol)?;
        let cost = sol.stage_cost(&inst.realizations(t)[i]);
        path.push(&sol, i, cost);
        chi = sol.x;
    }
    Ok(path)
}

/// Mean and sample standard deviation (zero for a single value).
///
/// Computed on offsets from the first value so that identical inputs give
/// that value and a deviation of exactly zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let Some(&base) = values.first() else {
        return (f64::NAN, f64::NAN);
    };
    let n = values.len() as f64;
    let shift = values.iter().map(|v| v - base).sum::<f64>() / n;
    if values.len() < 2 {
        return (base, 0.0);
    }
    let var = values
        .iter()
        .map(|v| (v - base - shift).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (base + shift, var.sqrt())
}
