//! Acceptance battery with a machine-readable report.
//!
//! Each criterion is a public function returning a [`CriterionResult`] with
//! the measured quantity, the bound it is compared against and the wall
//! time. Solver failures become failing results, never panics.

use std::time::Instant;

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cutmodel::CutPool;
use crate::ddp::ddp_solve;
use crate::eddp::eddp_solve;
use crate::engine::aggregate_cut;
use crate::error::{Error, Result};
use crate::generate::{generate_instance, GeneratorSpec};
use crate::kelley::{builtin, kelley_solve, min_pairwise_distance};
use crate::model::{cost_lipschitz_bound, linf, Instance, SolveConfig, ToleranceSchedule};
use crate::oracle::{
    audit_cut_validity, audit_cut_validity_exact, exact_stage_objective, exact_value,
    exact_value_grid, extensive_form_value, sample_box,
};
use crate::sddp::{
    estimate_upper_bound, exhaustive_policy_cost, sddp_solve, SddpOptions, SelectionStream,
    StopMode,
};
use crate::subproblem::{solve_stage, StageRef};
use crate::telemetry::{RunStatus, SolverState};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CRITERIA: usize = 12;

const TOL: f64 = 1e-9;
const DELTA: f64 = 0.25;
/// Radius for runs meant to go through many cutting iterations.
const FINE_DELTA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    /// Reduced sample counts, well under a minute.
    Smoke,
    /// Sample counts and instance sizes as specified by each criterion.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub level: Level,
    /// Offset added to every generator and selection seed.
    pub seed: u64,
}

impl SuiteConfig {
    pub fn new(level: Level) -> Self {
        Self { level, seed: 0 }
    }

    fn full(&self) -> bool {
        self.level == Level::Full
    }

    fn pick(&self, smoke: usize, full: usize) -> usize {
        if self.full() {
            full
        } else {
            smoke
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    /// `None` when the run failed before producing a value.
    pub measured: Option<f64>,
    pub relation: Relation,
    pub bound: Option<f64>,
    pub detail: String,
    pub seconds: f64,
    pub time_limit: Option<f64>,
}

impl CriterionResult {
    /// One human-readable line.
    pub fn summary(&self) -> String {
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6e}"));
        format!(
            "[{}] criterion {:>2} {}: measured {} {rel} {} ({:.2}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            show(self.measured),
            show(self.bound),
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub level: Level,
    pub seed: u64,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

impl SuiteReport {
    /// Zeroes runtimes so that reports compare byte for byte.
    pub fn without_timing(mut self) -> Self {
        for c in &mut self.criteria {
            c.seconds = 0.0;
        }
        self
    }
}

struct Check {
    measured: f64,
    relation: Relation,
    bound: f64,
    /// Extra conditions beyond `measured relation bound`.
    extra_ok: bool,
    detail: String,
}

impl Check {
    fn at_most(measured: f64, bound: f64, detail: String) -> Self {
        Self {
            measured,
            relation: Relation::AtMost,
            bound,
            extra_ok: true,
            detail,
        }
    }

    fn at_least(measured: f64, bound: f64, detail: String) -> Self {
        Self {
            relation: Relation::AtLeast,
            ..Self::at_most(measured, bound, detail)
        }
    }

    fn and(mut self, ok: bool) -> Self {
        self.extra_ok &= ok;
        self
    }

    fn holds(&self) -> bool {
        let cmp = match self.relation {
            Relation::AtMost => self.measured <= self.bound,
            Relation::AtLeast => self.measured >= self.bound,
        };
        cmp && self.extra_ok
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn timed(
    id: usize,
    name: &str,
    time_limit: Option<f64>,
    body: impl FnOnce() -> Result<Check>,
) -> CriterionResult {
    let clock = Instant::now();
    let outcome = body();
    let seconds = clock.elapsed().as_secs_f64();
    let in_time = time_limit.is_none_or(|limit| seconds < limit);
    let (passed, measured, relation, bound, mut detail) = match outcome {
        Ok(c) => (
            c.holds(),
            finite(c.measured),
            c.relation,
            finite(c.bound),
            c.detail,
        ),
        Err(e) => (false, None, Relation::AtMost, None, format!("error: {e}")),
    };
    if !in_time {
        detail.push_str(&format!(
            "; exceeded {:.0}s limit",
            time_limit.unwrap_or(0.0)
        ));
    }
    log::info!(
        "criterion {id} {name}: passed={} ({seconds:.2}s)",
        passed && in_time
    );
    CriterionResult {
        id,
        name: name.to_string(),
        passed: passed && in_time,
        measured,
        relation,
        bound,
        detail,
        seconds,
        time_limit,
    }
}

pub fn run_suite(cfg: &SuiteConfig) -> SuiteReport {
    let criteria: Vec<CriterionResult> = (1..=CRITERIA).map(|id| run_criterion(id, cfg)).collect();
    SuiteReport {
        schema_version: REPORT_SCHEMA_VERSION,
        level: cfg.level,
        seed: cfg.seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

/// Runs criterion `id` in `1..=CRITERIA`.
pub fn run_criterion(id: usize, cfg: &SuiteConfig) -> CriterionResult {
    match id {
        1 => kelley_complexity(cfg),
        2 => ddp_sandwich(cfg),
        3 => ddp_iteration_count(cfg),
        4 => last_stage_exactness(cfg),
        5 => cut_validity(cfg),
        6 => eddp_iteration_bound(cfg),
        7 => eddp_saturation_progress(cfg),
        8 => sddp_reduces_to_ddp(cfg),
        9 => sddp_expected_iterations(cfg),
        10 => upper_bound_estimator(cfg),
        11 => gradient_check(cfg),
        12 => cli_reproducibility(cfg),
        other => timed(other, "unknown", None, || {
            Err(Error::InvalidInput(format!("no criterion {other}")))
        }),
    }
}

fn schedule(inst: &Instance, delta: f64) -> Result<SolveConfig> {
    Ok(
        SolveConfig::new(ToleranceSchedule::from_cost_bound(inst, delta)?)
            .with_max_iterations(1000),
    )
}

/// Single-scenario instance `i` of the sandwich family: inventory with
/// `n in {1, 2}` and `T in {2, 3, 4}`, every third one a hydro toy.
fn deterministic_instance(i: usize, base: u64) -> Result<Instance> {
    let t = 2 + i % 3;
    let seed = base + i as u64;
    let spec = if i % 3 == 2 {
        GeneratorSpec::hydro_toy(t, vec![1; t], seed)
    } else {
        GeneratorSpec::inventory(t, vec![1; t], 1 + i % 2, seed)
    };
    generate_instance(&spec)
}

fn tiny_stochastic(base: u64) -> Result<Instance> {
    generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 2], 1, base))
}

pub fn kelley_complexity(cfg: &SuiteConfig) -> CriterionResult {
    timed(
        1,
        "kelley iteration bound and separation",
        Some(10.0),
        || {
            let names: &[&str] = if cfg.full() {
                &["linf", "shifted-linf", "kink"]
            } else {
                &["linf", "kink"]
            };
            let mut worst_ratio: f64 = 0.0;
            let mut separated = true;
            let mut cases = 0;
            for name in names {
                for n in [1, 2] {
                    for eps in [0.1, 0.01] {
                        let prob = builtin(name, n)?;
                        assert_eq!(prob.side(), 2.0);
                        let bound = prob.iteration_bound(eps);
                        let res =
                            kelley_solve(&prob, &prob.lower.clone(), eps, bound as usize + 10)?;
                        worst_ratio = worst_ratio.max(res.iterations as f64 / bound);
                        let pre = res.pre_termination_iterates();
                        if pre.len() > 1 {
                            separated &= min_pairwise_distance(pre)? > eps / prob.lipschitz;
                        }
                        separated &= res.converged;
                        cases += 1;
                    }
                }
            }
            Ok(Check::at_most(
                worst_ratio,
                1.0,
                format!("max K / (lM/eps+1)^n over {cases} cases; iterates separated: {separated}"),
            )
            .and(separated))
        },
    )
}

pub fn ddp_sandwich(cfg: &SuiteConfig) -> CriterionResult {
    timed(2, "ddp sandwich and terminal gap", Some(60.0), || {
        let count = cfg.pick(6, 20);
        let cases: Vec<(usize, f64)> = (0..count)
            .flat_map(|i| [(i, DELTA), (i, FINE_DELTA)])
            .collect();
        let excess: Vec<(f64, usize)> = cases
            .par_iter()
            .map(|&(i, delta)| {
                let inst = deterministic_instance(i, cfg.seed)?;
                let config = schedule(&inst, delta)?;
                let f_star = extensive_form_value(&inst, TOL)?.value;
                let (state, status) = ddp_solve(&inst, &config)?;
                let mut worst = f64::NEG_INFINITY;
                for r in &state.history {
                    let slack = 10.0 * TOL * r.k as f64;
                    let ub = r.ub.unwrap_or(f64::INFINITY);
                    worst = worst.max(r.lb - f_star - slack).max(f_star - ub - slack);
                }
                let last = state
                    .history
                    .last()
                    .and_then(|r| r.gap)
                    .unwrap_or(f64::INFINITY);
                worst = worst.max(last - config.gap_threshold());
                if status != RunStatus::Converged {
                    worst = f64::INFINITY;
                }
                Ok((worst, state.iterations()))
            })
            .collect::<Result<_>>()?;
        let worst = excess.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        let max_k = excess.iter().map(|e| e.1).max().unwrap_or(0);
        Ok(Check::at_most(
            worst,
            0.0,
            format!(
                "largest bound violation beyond slack over {count} instances at delta {DELTA} and {FINE_DELTA}; max K = {max_k}"
            ),
        ))
    })
}

pub fn ddp_iteration_count(cfg: &SuiteConfig) -> CriterionResult {
    timed(3, "ddp iteration count", Some(60.0), || {
        let seeds = cfg.pick(2, 5) as u64;
        let mut cases = Vec::new();
        for t in [3, 4] {
            for delta in [0.5, 0.25] {
                for s in 0..seeds {
                    cases.push((t, delta, cfg.seed + 100 + s));
                }
            }
        }
        let slack: Vec<(f64, usize)> = cases
            .par_iter()
            .map(|&(t, delta, seed)| {
                let inst = generate_instance(&GeneratorSpec::inventory(t, vec![1; t], 1, seed))?;
                let config = schedule(&inst, delta)?;
                let (state, status) = ddp_solve(&inst, &config)?;
                let bound = inst.saturation_capacity(&config.schedule) + 1.0;
                let k = state.iterations();
                Ok(if status == RunStatus::Converged {
                    (k as f64 - bound, k)
                } else {
                    (f64::INFINITY, k)
                })
            })
            .collect::<Result<_>>()?;
        let worst = slack.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let max_k = slack.iter().map(|s| s.1).max().unwrap_or(0);
        Ok(Check::at_most(
            worst,
            0.0,
            format!("max K - bound over {} runs; max K = {max_k}", cases.len()),
        ))
    })
}

/// A finished solver run kept for post-hoc audits.
pub struct AuditRun {
    pub label: String,
    pub inst: Instance,
    pub state: SolverState,
}

/// DDP, EDDP and SDDP runs shared by the exactness and validity audits.
pub fn audit_runs(cfg: &SuiteConfig) -> Result<Vec<AuditRun>> {
    let b = cfg.seed;
    let mut jobs: Vec<(&str, GeneratorSpec, usize)> = vec![
        (
            "ddp",
            GeneratorSpec::inventory(3, vec![1; 3], 1, b + 200),
            1,
        ),
        ("ddp", GeneratorSpec::hydro_toy(3, vec![1; 3], b + 201), 1),
        (
            "eddp",
            GeneratorSpec::inventory(3, vec![1, 2, 2], 1, b + 202),
            1,
        ),
        (
            "eddp",
            GeneratorSpec::hydro_toy(3, vec![1, 2, 2], b + 203),
            1,
        ),
        (
            "sddp",
            GeneratorSpec::inventory(3, vec![1, 2, 2], 1, b + 204),
            1,
        ),
        (
            "sddp",
            GeneratorSpec::inventory(4, vec![1, 2, 2, 2], 1, b + 205),
            4,
        ),
    ];
    if cfg.full() {
        jobs.extend([
            (
                "ddp",
                GeneratorSpec::inventory(4, vec![1; 4], 2, b + 206),
                1,
            ),
            (
                "eddp",
                GeneratorSpec::inventory(3, vec![1, 3, 3], 2, b + 207),
                1,
            ),
            (
                "sddp",
                GeneratorSpec::hydro_toy(3, vec![1, 2, 2], b + 208),
                2,
            ),
        ]);
    }
    jobs.into_par_iter()
        .enumerate()
        .map(|(j, (solver, spec, replicas))| {
            let inst = generate_instance(&spec)?;
            let config = schedule(&inst, FINE_DELTA)?
                .with_seed(b + j as u64)
                .with_replicas(replicas)
                .with_max_iterations(60);
            let (state, _) = match solver {
                "ddp" => ddp_solve(&inst, &config)?,
                "eddp" => eddp_solve(&inst, &config)?,
                _ => sddp_solve(&inst, &config, &SddpOptions::default())?,
            };
            Ok(AuditRun {
                label: format!(
                    "{solver} {:?} T={} N={:?}",
                    spec.family, spec.num_stages, spec.counts
                ),
                inst,
                state,
            })
        })
        .collect()
}

/// Largest `|pool_T(x_{T-1}^k) - V_T(x_{T-1}^k)|` over backward iterations.
pub fn last_stage_gap(run: &AuditRun) -> Result<f64> {
    let t_max = run.inst.num_stages;
    let pool = &run.state.pools[t_max - 2];
    let mut worst: f64 = 0.0;
    for r in run.state.history.iter().filter(|r| r.backward) {
        let x = &r.path[t_max - 2];
        let model = pool.eval_at_version(x, r.k)?;
        let exact = exact_value(&run.inst, t_max, x, TOL)?;
        worst = worst.max((model - exact).abs());
    }
    Ok(worst)
}

pub fn last_stage_exactness(cfg: &SuiteConfig) -> CriterionResult {
    timed(4, "last-stage cut exactness", None, || {
        let runs = audit_runs(cfg)?;
        let gaps: Vec<f64> = runs.par_iter().map(last_stage_gap).collect::<Result<_>>()?;
        let worst = gaps.iter().copied().fold(0.0, f64::max);
        let checked: usize = runs
            .iter()
            .map(|r| r.state.history.iter().filter(|h| h.backward).count())
            .sum();
        Ok(Check::at_most(
            worst,
            10.0 * TOL,
            format!("{checked} backward passes over {} runs", runs.len()),
        ))
    })
}

fn probes(inst: &Instance, t: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| sample_box(inst.shape(t - 1), &mut rng))
        .collect()
}

pub fn cut_validity(cfg: &SuiteConfig) -> CriterionResult {
    timed(5, "cut validity audit", None, || {
        let runs = audit_runs(cfg)?;
        let count = 100;
        let res = cfg.pick(4, 8);
        let margins: Vec<(f64, f64)> = runs
            .par_iter()
            .enumerate()
            .map(|(j, run)| {
                let k = run.state.iterations() as f64;
                let lip = cost_lipschitz_bound(&run.inst);
                let mut exact_margin = f64::NEG_INFINITY;
                let mut grid_margin = f64::NEG_INFINITY;
                for pool in &run.state.pools {
                    let t = pool.stage;
                    let xs = probes(&run.inst, t, count, cfg.seed + 1000 * j as u64 + t as u64);
                    let e = audit_cut_validity_exact(&run.inst, pool, &xs, TOL)?;
                    exact_margin = exact_margin.max(e - k * TOL);
                    let grid = exact_value_grid(&run.inst, t, res, &lip, TOL)?;
                    let g = audit_cut_validity(pool, &grid, &xs)?;
                    grid_margin = grid_margin.max(g - grid.error_bound() - k * TOL);
                }
                Ok((exact_margin, grid_margin))
            })
            .collect::<Result<_>>()?;
        let exact = margins
            .iter()
            .map(|m| m.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let grid = margins
            .iter()
            .map(|m| m.1)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Check::at_most(
            exact.max(grid),
            0.0,
            format!(
                "max pool - V - k tol = {exact:.3e} (exact), {grid:.3e} (grid, minus error bound); {} runs x {count} probes per stage",
                runs.len()
            ),
        ))
    })
}

struct EddpOutcome {
    inst: Instance,
    state: SolverState,
    status: RunStatus,
    config: SolveConfig,
}

fn eddp_runs(specs: Vec<(GeneratorSpec, f64)>) -> Result<Vec<EddpOutcome>> {
    specs
        .into_par_iter()
        .map(|(spec, delta)| {
            let inst = generate_instance(&spec)?;
            let config = schedule(&inst, delta)?;
            let (state, status) = eddp_solve(&inst, &config)?;
            Ok(EddpOutcome {
                inst,
                state,
                status,
                config,
            })
        })
        .collect()
}

fn bound_specs(cfg: &SuiteConfig) -> Vec<(GeneratorSpec, f64)> {
    (0..cfg.pick(4, 10) as u64)
        .map(|s| {
            (
                GeneratorSpec::inventory(3, vec![1, 2, 2], 1, cfg.seed + 300 + s),
                DELTA,
            )
        })
        .collect()
}

pub fn eddp_iteration_bound(cfg: &SuiteConfig) -> CriterionResult {
    timed(
        6,
        "eddp iteration bound and certified policy",
        Some(120.0),
        || {
            let runs = eddp_runs(bound_specs(cfg))?;
            let mut max_k = 0;
            let mut bound: f64 = 0.0;
            let mut worst_excess = f64::NEG_INFINITY;
            let mut converged = true;
            for run in &runs {
                max_k = max_k.max(run.state.iterations());
                bound = bound.max(run.inst.saturation_capacity(&run.config.schedule) + 1.0);
                let f_star = extensive_form_value(&run.inst, TOL)?.value;
                let f1 = exact_stage_objective(&run.inst, 1, 0, &run.state.first_stage, TOL)?;
                worst_excess = worst_excess.max(f1 - f_star - run.config.schedule.eps[0]);
                converged &= run.status == RunStatus::Converged;
            }
            let certified = worst_excess <= 10.0 * TOL;
            Ok(Check::at_most(
                max_k as f64,
                bound,
                format!(
                "{} seeds; max F(x1) - F* - eps0 = {worst_excess:.3e}; all converged: {converged}",
                runs.len()
            ),
            )
            .and(certified && converged))
        },
    )
}

pub fn eddp_saturation_progress(cfg: &SuiteConfig) -> CriterionResult {
    timed(7, "eddp saturated-set separation and growth", None, || {
        let mut specs = bound_specs(cfg);
        specs.extend([
            (
                GeneratorSpec::inventory(3, vec![1, 2, 2], 1, cfg.seed + 313),
                FINE_DELTA,
            ),
            (
                GeneratorSpec::inventory(4, vec![1, 2, 2, 2], 1, cfg.seed + 310),
                0.1,
            ),
            (
                GeneratorSpec::inventory(3, vec![1, 2, 2], 2, cfg.seed + 311),
                0.1,
            ),
            (
                GeneratorSpec::hydro_toy(3, vec![1, 2, 2], cfg.seed + 312),
                0.1,
            ),
        ]);
        let runs = eddp_runs(specs)?;
        let mut min_growth = usize::MAX;
        let mut min_margin = f64::INFINITY;
        let mut admissions = 0;
        for run in &runs {
            admissions += run.state.sets.iter().map(|s| s.len()).sum::<usize>();
            for set in &run.state.sets {
                for (j, p) in set.points.iter().enumerate() {
                    for q in &set.points[..j] {
                        min_margin = min_margin.min(linf(&p.state, &q.state) - set.delta);
                    }
                }
            }
            let mut prev = 0;
            for r in &run.state.history {
                let total = r.saturated_total();
                if r.backward {
                    min_growth = min_growth.min(total - prev);
                }
                prev = total;
            }
        }
        let growth = if min_growth == usize::MAX {
            f64::INFINITY
        } else {
            min_growth as f64
        };
        Ok(Check::at_least(
            growth,
            1.0,
            format!(
                "min saturated-set growth per non-terminating iteration over {} runs; {admissions} points; min separation - delta = {min_margin:.3e}",
                runs.len()
            ),
        )
        .and(min_margin > 0.0))
    })
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn same_pools(a: &[CutPool], b: &[CutPool]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(p, q)| {
            p.stage == q.stage
                && p.floor.to_bits() == q.floor.to_bits()
                && p.cuts.len() == q.cuts.len()
                && p.cuts.iter().zip(&q.cuts).all(|(c, d)| {
                    c.born == d.born
                        && c.intercept.to_bits() == d.intercept.to_bits()
                        && same_bits(&c.anchor, &d.anchor)
                        && same_bits(&c.gradient, &d.gradient)
                })
        })
}

pub fn sddp_reduces_to_ddp(cfg: &SuiteConfig) -> CriterionResult {
    timed(
        8,
        "sddp equals ddp on single-scenario instances",
        None,
        || {
            let count = cfg.pick(4, 10);
            let mismatches: Vec<(usize, usize)> = (0..count)
                .into_par_iter()
                .map(|i| {
                    let inst = deterministic_instance(i, cfg.seed)?;
                    let config = schedule(&inst, FINE_DELTA)?.with_seed(cfg.seed + i as u64);
                    let (ddp, _) = ddp_solve(&inst, &config)?;
                    let budget = config.clone().with_max_iterations(ddp.iterations());
                    let options = SddpOptions {
                        stop: StopMode::Budget,
                        ..SddpOptions::default()
                    };
                    let (sddp, _) = sddp_solve(&inst, &budget, &options)?;
                    let paths_equal = ddp.history.len() == sddp.history.len()
                        && ddp.history.iter().zip(&sddp.history).all(|(a, b)| {
                            a.path.len() == b.path.len()
                                && a.path.iter().zip(&b.path).all(|(x, y)| same_bits(x, y))
                        });
                    let equal = same_bits(&ddp.lb_sequence(), &sddp.lb_sequence())
                        && paths_equal
                        && same_pools(&ddp.pools, &sddp.pools);
                    Ok((usize::from(!equal), ddp.iterations()))
                })
                .collect::<Result<_>>()?;
            let total: usize = mismatches.iter().map(|m| m.0).sum();
            let iterations: usize = mismatches.iter().map(|m| m.1).sum();
            Ok(Check::at_most(
            total as f64,
            0.0,
            format!("instances with any bitwise difference out of {count}; {iterations} iterations compared"),
        ))
        },
    )
}

pub fn sddp_expected_iterations(cfg: &SuiteConfig) -> CriterionResult {
    timed(9, "sddp expected iteration count", Some(600.0), || {
        let inst = tiny_stochastic(cfg.seed + 400)?;
        let config = schedule(&inst, DELTA)?;
        let k_bar = inst.saturation_capacity(&config.schedule);
        let n_bar = inst.inner_scenario_product() as f64;
        let options = SddpOptions {
            stop: StopMode::Distance,
            audit: true,
            ..SddpOptions::default()
        };
        let runs = cfg.pick(20, 100);
        let counts: Vec<(f64, bool)> = (0..runs as u64)
            .into_par_iter()
            .map(|s| {
                let c = config.clone().with_seed(cfg.seed + s);
                let (state, status) = sddp_solve(&inst, &c, &options)?;
                Ok((state.iterations() as f64, status == RunStatus::Converged))
            })
            .collect::<Result<_>>()?;
        let ks: Vec<f64> = counts.iter().map(|c| c.0).collect();
        let (mean, std) = crate::engine::mean_std(&ks);
        let converged = counts.iter().all(|c| c.1);
        Ok(Check::at_most(
            mean,
            k_bar * n_bar + 2.0 + std,
            format!(
                "mean K over {runs} seeds; K_bar = {k_bar}, N_bar = {n_bar}, sample std = {std:.3}, max K = {}; all converged: {converged}",
                ks.iter().copied().fold(0.0, f64::max)
            ),
        )
        .and(converged))
    })
}

pub fn upper_bound_estimator(cfg: &SuiteConfig) -> CriterionResult {
    timed(10, "upper-bound estimator", None, || {
        let det = generate_instance(&GeneratorSpec::inventory(3, vec![1; 3], 1, cfg.seed + 500))?;
        let det_cfg = schedule(&det, DELTA)?
            .with_replicas(8)
            .with_max_iterations(50);
        let (state, _) = sddp_solve(&det, &det_cfg, &SddpOptions::default())?;
        let zero_std = state.history.iter().all(|r| r.ub_std == Some(0.0));

        let inst = tiny_stochastic(cfg.seed + 501)?;
        let warm = schedule(&inst, DELTA)?
            .with_max_iterations(3)
            .with_seed(cfg.seed);
        let options = SddpOptions {
            stop: StopMode::Budget,
            ..SddpOptions::default()
        };
        let (warm_state, _) = sddp_solve(&inst, &warm, &options)?;
        let stream = SelectionStream::new(cfg.seed + 502);
        let replicas = 64;
        let (est, _) = estimate_upper_bound(&inst, &warm_state.pools, &stream, 1, replicas, TOL)?;
        let exact = exhaustive_policy_cost(&inst, &warm_state.pools, TOL)?;
        let err = (est.mean - exact).abs();
        Ok(Check::at_most(
            err,
            3.0 * est.sample_std / (replicas as f64).sqrt(),
            format!(
                "|mean - exhaustive| with L = {replicas}; deterministic std exactly 0: {zero_std}"
            ),
        )
        .and(zero_std))
    })
}

/// Stage value `nu_t(chi)`: exact `V_T` at the last stage, the averaged
/// stage LP value under `pools` otherwise.
fn stage_value(inst: &Instance, pools: &[CutPool], t: usize, chi: &[f64]) -> Result<f64> {
    if t == inst.num_stages {
        return exact_value(inst, t, chi, TOL);
    }
    let reals = inst.realizations(t);
    let mut acc = 0.0;
    for (i, real) in reals.iter().enumerate() {
        let sol = solve_stage(
            StageRef {
                stage: t,
                scenario: i + 1,
            },
            inst.shape(t),
            real,
            chi,
            Some(&pools[t - 1]),
            inst.lambda,
            TOL,
        )?;
        acc += sol.value;
    }
    Ok(acc / reals.len() as f64)
}

pub fn gradient_check(cfg: &SuiteConfig) -> CriterionResult {
    timed(11, "cut gradients against finite differences", None, || {
        let h = 1e-4;
        let kink = 1e-6;
        let wanted = 50;
        let mut models = Vec::new();
        for (j, spec) in [
            GeneratorSpec::inventory(3, vec![1, 2, 2], 2, cfg.seed + 600),
            GeneratorSpec::hydro_toy(3, vec![1, 2, 2], cfg.seed + 601),
            GeneratorSpec::inventory(4, vec![1, 2, 2, 2], 1, cfg.seed + 602),
        ]
        .into_iter()
        .enumerate()
        {
            let inst = generate_instance(&spec)?;
            let config = schedule(&inst, DELTA)?
                .with_seed(cfg.seed + j as u64)
                .with_max_iterations(8);
            let options = SddpOptions {
                stop: StopMode::Budget,
                ..SddpOptions::default()
            };
            let (state, _) = sddp_solve(&inst, &config, &options)?;
            models.push((inst, state.pools));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 603);
        let mut accepted = 0;
        let mut attempts = 0;
        let mut worst: f64 = 0.0;
        while accepted < wanted && attempts < 50 * wanted {
            let (inst, pools) = &models[attempts % models.len()];
            let t = 2 + (attempts / models.len()) % (inst.num_stages - 1);
            attempts += 1;
            let shape = inst.shape(t - 1);
            let mut chi = sample_box(shape, &mut rng);
            for (x, (lo, hi)) in chi.iter_mut().zip(shape.lower.iter().zip(&shape.upper)) {
                *x = x.clamp(lo + 2.0 * h, hi - 2.0 * h);
            }
            let cut = aggregate_cut(inst, pools, t, &chi, 0, TOL)?;
            let center = stage_value(inst, pools, t, &chi)?;
            let mut errors = Vec::with_capacity(chi.len());
            let mut smooth = true;
            for j in 0..chi.len() {
                let mut up = chi.clone();
                up[j] += h;
                let mut down = chi.clone();
                down[j] -= h;
                let f_up = stage_value(inst, pools, t, &up)?;
                let f_down = stage_value(inst, pools, t, &down)?;
                let forward = (f_up - center) / h;
                let backward = (center - f_down) / h;
                if (forward - backward).abs() > kink {
                    smooth = false;
                    break;
                }
                errors.push((cut.gradient[j] - (f_up - f_down) / (2.0 * h)).abs());
            }
            if smooth {
                accepted += 1;
                worst = errors.into_iter().fold(worst, f64::max);
            }
        }
        Ok(Check::at_most(
            worst,
            1e-5,
            format!("{accepted} non-degenerate anchors out of {attempts} tried"),
        )
        .and(accepted >= wanted))
    })
}

fn cli_capture(args: &[String]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = crate::cli::run(
        std::iter::once("msddp".to_string()).chain(args.iter().cloned()),
        &mut out,
        &mut err,
    );
    (code, out)
}

/// Command lines exercised by the reproducibility check, given instance
/// files for a single-scenario and a stochastic instance.
pub fn reproducibility_commands(det: &str, stoch: &str, seed: u64) -> Vec<Vec<String>> {
    let s = seed.to_string();
    let lines: Vec<Vec<&str>> = vec![
        vec![
            "gen",
            "--family",
            "inventory",
            "-T",
            "3",
            "--counts",
            "1,2,2",
            "--seed",
            &s,
        ],
        vec![
            "gen",
            "--family",
            "hydro-toy",
            "-T",
            "3",
            "--counts",
            "1,2,2",
            "--seed",
            &s,
        ],
        vec![
            "gen",
            "--family",
            "random-lp",
            "-T",
            "3",
            "--counts",
            "1,2,2",
            "--n",
            "2",
            "--seed",
            &s,
        ],
        vec![
            "kelley",
            "--function",
            "kink",
            "--n",
            "2",
            "--eps",
            "0.1",
            "--seed",
            &s,
        ],
        vec![
            "kelley",
            "--function",
            "linf",
            "--n",
            "1",
            "--eps",
            "0.01",
            "--format",
            "json",
        ],
        vec!["ddp", "--instance", det, "--delta", "0.25", "--seed", &s],
        vec![
            "ddp",
            "--instance",
            det,
            "--delta",
            "0.25",
            "--format",
            "json",
        ],
        vec!["eddp", "--instance", stoch, "--delta", "0.25", "--seed", &s],
        vec![
            "eddp",
            "--instance",
            stoch,
            "--delta",
            "0.25",
            "--format",
            "json",
        ],
        vec![
            "sddp",
            "--instance",
            stoch,
            "--seed",
            &s,
            "--replicas",
            "4",
            "--max-iter",
            "20",
        ],
        vec![
            "sddp",
            "--instance",
            stoch,
            "--seed",
            &s,
            "--audit",
            "--stop",
            "distance",
        ],
        vec![
            "sddp",
            "--instance",
            stoch,
            "--seed",
            &s,
            "--stop",
            "budget",
            "--max-iter",
            "5",
            "--format",
            "json",
        ],
        vec!["oracle", "--instance", stoch, "extensive"],
        vec![
            "oracle",
            "--instance",
            stoch,
            "grid",
            "--stage",
            "2",
            "--res",
            "4",
        ],
    ];
    lines
        .into_iter()
        .map(|l| l.into_iter().map(String::from).collect())
        .collect()
}

pub fn cli_reproducibility(cfg: &SuiteConfig) -> CriterionResult {
    timed(12, "cli byte reproducibility", None, || {
        let dir =
            std::env::temp_dir().join(format!("msddp-suite-{}-{}", std::process::id(), cfg.seed));
        std::fs::create_dir_all(&dir)?;
        let det = dir.join("det.json");
        let stoch = dir.join("stoch.json");
        let (det, stoch) = (
            det.to_string_lossy().to_string(),
            stoch.to_string_lossy().to_string(),
        );
        let seed = (cfg.seed + 700).to_string();
        for (path, counts) in [(&det, "1,1,1"), (&stoch, "1,2,2")] {
            let args: Vec<String> = [
                "gen", "-T", "3", "--counts", counts, "--seed", &seed, "--out", path,
            ]
            .map(String::from)
            .to_vec();
            let (code, _) = cli_capture(&args);
            if code != 0 {
                return Err(Error::InvalidInput(format!("gen exited with {code}")));
            }
        }
        let commands = reproducibility_commands(&det, &stoch, cfg.seed + 701);
        let mut differing = Vec::new();
        for args in &commands {
            let first = cli_capture(args);
            let second = cli_capture(args);
            if first != second || first.1.is_empty() {
                differing.push(args.join(" "));
            }
        }
        let _ = std::fs::remove_dir_all(&dir);
        Ok(Check::at_most(
            differing.len() as f64,
            0.0,
            format!(
                "{} commands run twice; differing: {differing:?}",
                commands.len()
            ),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_and_strips_timing() {
        let cfg = SuiteConfig::new(Level::Smoke);
        let report = SuiteReport {
            schema_version: REPORT_SCHEMA_VERSION,
            level: cfg.level,
            seed: 0,
            passed: true,
            criteria: vec![run_criterion(1, &cfg)],
        };
        let text = serde_json::to_string(&report).unwrap();
        let back: SuiteReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert!(back
            .without_timing()
            .criteria
            .iter()
            .all(|c| c.seconds == 0.0));
    }

    #[test]
    fn unknown_criterion_fails_cleanly() {
        let r = run_criterion(99, &SuiteConfig::new(Level::Smoke));
        assert!(!r.passed);
        assert!(r.detail.contains("no criterion"));
    }

    #[test]
    fn check_relations() {
        assert!(Check::at_most(1.0, 1.0, String::new()).holds());
        assert!(!Check::at_most(1.0, 1.0, String::new()).and(false).holds());
        assert!(Check::at_least(2.0, 1.0, String::new()).holds());
        assert!(!Check::at_least(0.0, 1.0, String::new()).holds());
    }
}
