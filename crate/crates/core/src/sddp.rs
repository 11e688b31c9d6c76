//! Stochastic dual dynamic programming.
//!
//! The forward phase solves a single sampled realization per stage; the
//! backward phase is the aggregate-cut pass of EDDP. With `L > 1`
//! replicas, `L` independent forward paths give a statistical upper bound
//! and all of them feed backward passes, merged in replica order.
//!
//! Stopping is configurable: the saturation audit (all candidates solved
//! for telemetry), the statistical gap, or the iteration budget.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutmodel::{initial_pools, CutPool};
use crate::eddp::{
    admit_saturated, new_saturated_sets, path_distances, saturated_counts, SaturatedSet,
};
use crate::engine::{backward_pass, mean_std, replay_forward, solve_all, ForwardPath};
use crate::error::{Error, Result};
use crate::model::{Instance, SolveConfig};
use crate::telemetry::{IterationRecord, RunStatus, SolverState};

/// Largest supported replica count (replica ids share the RNG stream word
/// with the iteration counter).
pub const MAX_REPLICAS: usize = 1 << 16;

/// Seeded source of forward realization indices.
///
/// Iteration `k`, replica `r` draws from ChaCha stream `(k << 16) | r`, so a
/// path depends only on `(seed, k, r)` and replicas can run in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStream {
    pub seed: u64,
}

impl SelectionStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// 0-based indices `(i_1, ..., i_T)` with `i_1 = 0`.
    pub fn draw(&self, k: usize, replica: usize, counts: &[usize]) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((k as u64) << 16) | replica as u64);
        counts
            .iter()
            .enumerate()
            .map(|(s, &n)| if s == 0 { 0 } else { rng.gen_range(0..n) })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundEstimate {
    /// Discounted cost of each replica path.
    pub replicas: Vec<f64>,
    pub mean: f64,
    pub sample_std: f64,
}

impl UpperBoundEstimate {
    pub fn from_costs(replicas: Vec<f64>) -> Self {
        let (mean, sample_std) = mean_std(&replicas);
        Self {
            replicas,
            mean,
            sample_std,
        }
    }

    /// `mean + z * std / sqrt(L)`.
    pub fn upper(&self, z: f64) -> f64 {
        self.mean + z * self.sample_std / (self.replicas.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMode {
    /// Average candidate distance within `delta_t` at every stage; implies
    /// the audit.
    Distance,
    /// `mean + z std / sqrt(L) - lb <= gap threshold`.
    Statistical,
    /// Run exactly `max_iterations` forward passes.
    Budget,
}

impl std::str::FromStr for StopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance" => Ok(StopMode::Distance),
            "statistical" => Ok(StopMode::Statistical),
            "budget" => Ok(StopMode::Budget),
            other => Err(Error::InvalidInput(format!("unknown stop mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SddpOptions {
    pub stop: StopMode,
    /// Solve every candidate on replica 0 to maintain saturated sets.
    pub audit: bool,
    /// Normal quantile for the statistical bound.
    pub z: f64,
}

impl Default for SddpOptions {
    fn default() -> Self {
        Self {
            stop: StopMode::Statistical,
            audit: false,
            z: 1.96,
        }
    }
}

impl SddpOptions {
    pub fn audit_enabled(&self) -> bool {
        self.audit || self.stop == StopMode::Distance
    }
}

/// Forward pass along the indices drawn for `(k, replica)`.
pub fn sddp_forward(
    inst: &Instance,
    pools: &[CutPool],
    stream: &SelectionStream,
    k: usize,
    replica: usize,
    tol: f64,
) -> Result<ForwardPath> {
    let indices = stream.draw(k, replica, &inst.scenario_counts());
    replay_forward(inst, pools, &indices, tol)
}

/// Aggregate cuts at the path states (identical to the EDDP backward cut).
pub fn sddp_backward(
    inst: &Instance,
    path: &ForwardPath,
    pools: &mut [CutPool],
    k: usize,
    tol: f64,
) -> Result<()> {
    backward_pass(inst, pools, &path.states, k, tol)
}

/// `L` forward replicas of iteration `k` and their cost statistics.
pub fn estimate_upper_bound(
    inst: &Instance,
    pools: &[CutPool],
    stream: &SelectionStream,
    k: usize,
    replicas: usize,
    tol: f64,
) -> Result<(UpperBoundEstimate, Vec<ForwardPath>)> {
    if replicas == 0 || replicas > MAX_REPLICAS {
        return Err(Error::InvalidInput(format!(
            "replica count {replicas} outside 1..={MAX_REPLICAS}"
        )));
    }
    let paths: Vec<ForwardPath> = (0..replicas)
        .into_par_iter()
        .map(|r| sddp_forward(inst, pools, stream, k, r, tol))
        .collect::<Result<_>>()?;
    let costs = paths.iter().map(|p| p.cost(inst.lambda)).collect();
    Ok((UpperBoundEstimate::from_costs(costs), paths))
}

/// Expected policy cost under `pools` by enumerating every tree path.
pub fn exhaustive_policy_cost(inst: &Instance, pools: &[CutPool], tol: f64) -> Result<f64> {
    let paths = crate::oracle::enumerate_paths(inst);
    let costs: Vec<f64> = paths
        .par_iter()
        .map(|p| {
            let mut idx = vec![0];
            idx.extend(&p.indices);
            Ok(replay_forward(inst, pools, &idx, tol)?.cost(inst.lambda) * p.probability)
        })
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum())
}

/// Candidate distances `(1/N_t) sum_i g_t(x~_ti)` along `path`, `t = 1..T-1`.
fn audit_distances(
    inst: &Instance,
    pools: &[CutPool],
    sets: &[SaturatedSet],
    path: &ForwardPath,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(sets.len());
    let mut chi: Vec<f64> = Vec::new();
    for (s, set) in sets.iter().enumerate() {
        let t = s + 1;
        let sols = solve_all(inst, pools, t, &chi, tol)?;
        let total: f64 = sols.iter().map(|sol| set.distance(&sol.x)).sum();
        out.push(total / sols.len() as f64);
        chi = path.states[s].clone();
    }
    Ok(out)
}

pub type SddpState = SolverState;

pub fn sddp_solve(
    inst: &Instance,
    config: &SolveConfig,
    options: &SddpOptions,
) -> Result<(SddpState, RunStatus)> {
    config.validate()?;
    inst.check()?;
    if config.forward_replicas > MAX_REPLICAS {
        return Err(Error::InvalidInput(format!(
            "at most {MAX_REPLICAS} replicas are supported"
        )));
    }
    let schedule = &config.schedule;
    let tol = config.lp_tolerance;
    let threshold = config.gap_threshold();
    let audit = options.audit_enabled();
    let stream = SelectionStream::new(config.seed);
    let mut pools = initial_pools(inst)?;
    let mut sets = new_saturated_sets(inst, schedule)?;
    let mut history = Vec::new();
    let mut status = RunStatus::BudgetExhausted;
    let mut lb = f64::NEG_INFINITY;
    let mut first_stage = Vec::new();
    let mut ub = None;
    for k in 1..=config.max_iterations {
        let clock = Instant::now();
        let (est, paths) =
            estimate_upper_bound(inst, &pools, &stream, k, config.forward_replicas, tol)?;
        let lead = &paths[0];
        lb = lead.lower_bound();
        first_stage = lead.states[0].clone();
        ub = Some(est.mean);
        let gap = est.upper(options.z) - lb;
        let (distances, g_bar) = if audit {
            (
                path_distances(&sets, &lead.states),
                audit_distances(inst, &pools, &sets, lead, tol)?,
            )
        } else {
            (Vec::new(), Vec::new())
        };
        let stop = match options.stop {
            StopMode::Distance => g_bar.iter().zip(&schedule.delta).all(|(g, d)| g <= d),
            StopMode::Statistical => gap <= threshold,
            StopMode::Budget => false,
        };
        let run_backward = !stop && k < config.max_iterations;
        let mut admitted = Vec::new();
        if run_backward {
            for path in &paths {
                sddp_backward(inst, path, &mut pools, k, tol)?;
            }
            if audit {
                admitted = admit_saturated(&mut sets, &distances, &lead.states, schedule, k);
            }
        }
        log::debug!(
            "sddp k={k} lb={lb:.6} ub_mean={:.6} ub_std={:.3e} g_bar={g_bar:?}",
            est.mean,
            est.sample_std
        );
        history.push(IterationRecord {
            k,
            lb,
            ub: None,
            ub_mean: Some(est.mean),
            ub_std: Some(est.sample_std),
            gap: Some(gap),
            distances,
            g_bar,
            saturated: if audit {
                saturated_counts(&sets)
            } else {
                Vec::new()
            },
            new_saturation: audit.then_some(!admitted.is_empty()),
            admitted,
            indices: lead.one_based_indices(),
            path: lead.states.clone(),
            path_cost: est.replicas[0],
            backward: run_backward,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        if stop {
            status = RunStatus::Converged;
            break;
        }
    }
    log::info!(
        "sddp finished after {} iterations: {status:?}",
        history.len()
    );
    Ok((
        SolverState {
            pools,
            sets,
            lb,
            ub,
            first_stage,
            history,
        },
        status,
    ))
}
