//! Problem data for multi-stage stochastic linear programs under stage-wise
//! independence, the tolerance schedule that parameterizes every solver,
//! and sample-average instance construction.
//!
//! Stage `t` (1-based, as in all public messages) owns a decision
//! `x_t` in the box `lower <= x_t <= upper` subject to
//!
//! ```text
//! A x_t  = B x_{t-1} + b
//! G x_t <= Q x_{t-1} + q
//! ```
//!
//! with cost `c^T x_t`. Each stage carries `N_t` equally likely
//! realizations of `(A, B, b, c, G, Q, q)`; the first stage has exactly one
//! and no incoming state (its `B` and `Q` have zero columns).

use std::fmt;
use std::path::Path;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageShape {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StageShape {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, m: usize, p: usize) -> Self {
        Self {
            n: lower.len(),
            m,
            p,
            lower,
            upper,
        }
    }

    /// l-infinity diameter of the box, the `D_t` used by the counting bounds.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.n
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }
}

/// One realization of a stage's random data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Realization {
    #[serde(default)]
    pub A: Matrix,
    #[serde(default)]
    pub B: Matrix,
    #[serde(default)]
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub G: Matrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub Q: Matrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q: Vec<f64>,
}

impl Realization {
    /// Box-only realization: cost vector, no linking rows.
    pub fn cost_only(c: Vec<f64>) -> Self {
        Self {
            A: Vec::new(),
            B: Vec::new(),
            b: Vec::new(),
            c,
            G: Vec::new(),
            Q: Vec::new(),
            q: Vec::new(),
        }
    }

    /// Row `i` of `B` applied to `chi`; an empty matrix acts as zero.
    pub fn linked_eq_rhs(&self, chi: &[f64]) -> Vec<f64> {
        linked_rhs(&self.B, &self.b, chi)
    }

    pub fn linked_ineq_rhs(&self, chi: &[f64]) -> Vec<f64> {
        linked_rhs(&self.Q, &self.q, chi)
    }
}

fn linked_rhs(mat: &Matrix, offset: &[f64], chi: &[f64]) -> Vec<f64> {
    offset
        .iter()
        .enumerate()
        .map(|(i, o)| {
            o + mat
                .get(i)
                .map(|row| row.iter().zip(chi).map(|(a, x)| a * x).sum::<f64>())
                .unwrap_or(0.0)
        })
        .collect()
}

/// A full sample-average instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(rename = "T")]
    pub num_stages: usize,
    pub lambda: f64,
    pub stages: Vec<StageShape>,
    pub scenarios: Vec<Vec<Realization>>,
}

impl Instance {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }

    /// Shape of stage `t` (1-based).
    pub fn shape(&self, t: usize) -> &StageShape {
        &self.stages[t - 1]
    }

    /// Realizations of stage `t` (1-based).
    pub fn realizations(&self, t: usize) -> &[Realization] {
        &self.scenarios[t - 1]
    }

    pub fn scenario_counts(&self) -> Vec<usize> {
        self.scenarios.iter().map(Vec::len).collect()
    }

    pub fn is_single_scenario(&self) -> bool {
        self.scenarios.iter().all(|s| s.len() == 1)
    }

    /// Incoming-state dimension of stage `t` (zero for the first stage).
    pub fn state_dim_into(&self, t: usize) -> usize {
        if t <= 1 {
            0
        } else {
            self.stages[t - 2].n
        }
    }

    /// `N_bar = N_2 * ... * N_{T-1}`.
    pub fn inner_scenario_product(&self) -> usize {
        let t = self.num_stages;
        (2..t).map(|s| self.scenarios[s - 1].len()).product()
    }

    /// `sum_{t=1}^{T-1} (D_t/delta_t + 1)^{n_t}`, the saturation capacity.
    pub fn saturation_capacity(&self, schedule: &ToleranceSchedule) -> f64 {
        (1..self.num_stages)
            .map(|t| stage_capacity(self.shape(t), schedule.delta[t - 1]))
            .sum()
    }

    /// Fails with every violation found.
    pub fn check(&self) -> Result<()> {
        let v = validate_instance(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(
                v.iter().map(|v| v.to_string()).collect(),
            ))
        }
    }
}

/// `(D/delta + 1)^n` for one stage; infinite when `delta == 0`.
pub fn stage_capacity(shape: &StageShape, delta: f64) -> f64 {
    if delta <= 0.0 {
        return f64::INFINITY;
    }
    (shape.diameter() / delta + 1.0).powi(shape.n as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    StageCount,
    Discount,
    Dimension,
    NonFinite,
    Bounds,
    FirstStageScenarios,
    EmptyStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub stage: Option<usize>,
    pub scenario: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(t) = self.stage {
            write!(f, " at stage {t}")?;
        }
        if let Some(i) = self.scenario {
            write!(f, " scenario {i}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Returns every structural problem with `inst`; empty means valid.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, stage, scenario, detail: String| {
        out.push(Violation {
            kind,
            stage,
            scenario,
            detail,
        })
    };
    if inst.num_stages < 2 {
        push(
            ViolationKind::StageCount,
            None,
            None,
            format!("T = {} but at least 2 stages are required", inst.num_stages),
        );
    }
    if !(inst.lambda > 0.0 && inst.lambda <= 1.0) {
        push(
            ViolationKind::Discount,
            None,
            None,
            format!("lambda = {} is outside (0, 1]", inst.lambda),
        );
    }
    if inst.stages.len() != inst.num_stages || inst.scenarios.len() != inst.num_stages {
        push(
            ViolationKind::StageCount,
            None,
            None,
            format!(
                "T = {} but {} stage shapes and {} scenario lists",
                inst.num_stages,
                inst.stages.len(),
                inst.scenarios.len()
            ),
        );
        return out;
    }
    for (s, shape) in inst.stages.iter().enumerate() {
        let t = s + 1;
        if shape.n == 0 {
            push(
                ViolationKind::Dimension,
                Some(t),
                None,
                "n must be at least 1".into(),
            );
        }
        if shape.lower.len() != shape.n || shape.upper.len() != shape.n {
            push(
                ViolationKind::Dimension,
                Some(t),
                None,
                format!(
                    "box has lengths {}/{} but n = {}",
                    shape.lower.len(),
                    shape.upper.len(),
                    shape.n
                ),
            );
            continue;
        }
        for (j, (l, u)) in shape.lower.iter().zip(&shape.upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                push(
                    ViolationKind::NonFinite,
                    Some(t),
                    None,
                    format!("box side {j} is not finite"),
                );
            } else if l > u {
                push(
                    ViolationKind::Bounds,
                    Some(t),
                    None,
                    format!("lower[{j}] = {l} exceeds upper[{j}] = {u}"),
                );
            }
        }
    }
    if inst.scenarios[0].len() != 1 {
        push(
            ViolationKind::FirstStageScenarios,
            Some(1),
            None,
            format!(
                "first stage has {} realizations, expected 1",
                inst.scenarios[0].len()
            ),
        );
    }
    for (s, list) in inst.scenarios.iter().enumerate() {
        let t = s + 1;
        if list.is_empty() {
            push(
                ViolationKind::EmptyStage,
                Some(t),
                None,
                "no realizations".into(),
            );
        }
        let shape = &inst.stages[s];
        let prev_n = if s == 0 { 0 } else { inst.stages[s - 1].n };
        for (i, real) in list.iter().enumerate() {
            for msg in realization_problems(real, shape, prev_n, s == 0) {
                let kind = if msg.contains("finite") {
                    ViolationKind::NonFinite
                } else {
                    ViolationKind::Dimension
                };
                push(kind, Some(t), Some(i + 1), msg);
            }
        }
    }
    out
}

/// Dimension and finiteness problems of one realization.
pub fn realization_problems(
    real: &Realization,
    shape: &StageShape,
    prev_n: usize,
    first_stage: bool,
) -> Vec<String> {
    let mut out = Vec::new();
    let check_mat = |name: &str, mat: &Matrix, rows: usize, cols: usize, out: &mut Vec<String>| {
        if mat.len() != rows {
            out.push(format!("{name} has {} rows, expected {rows}", mat.len()));
            return;
        }
        for (r, row) in mat.iter().enumerate() {
            if row.len() != cols {
                out.push(format!(
                    "{name} row {r} has {} columns, expected {cols}",
                    row.len()
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                out.push(format!("{name} row {r} has a non-finite entry"));
            }
        }
    };
    let check_vec = |name: &str, v: &[f64], len: usize, out: &mut Vec<String>| {
        if v.len() != len {
            out.push(format!("{name} has length {}, expected {len}", v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            out.push(format!("{name} has a non-finite entry"));
        }
    };
    check_mat("A", &real.A, shape.m, shape.n, &mut out);
    if !(first_stage && real.B.is_empty()) {
        check_mat("B", &real.B, shape.m, prev_n, &mut out);
    }
    check_vec("b", &real.b, shape.m, &mut out);
    check_vec("c", &real.c, shape.n, &mut out);
    check_mat("G", &real.G, shape.p, shape.n, &mut out);
    if !(first_stage && real.Q.is_empty()) {
        check_mat("Q", &real.Q, shape.p, prev_n, &mut out);
    }
    check_vec("q", &real.q, shape.p, &mut out);
    out
}

/// Distinguishability radii, saturation tolerances and Lipschitz bounds,
/// all indexed per stage.
///
/// `delta[t-1]`, `lipschitz[t-1]` and `lipschitz_model[t-1]` belong to
/// stage `t = 1..T`; `eps[t]` is the tolerance `eps_t` for `t = 0..T-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSchedule {
    pub delta: Vec<f64>,
    pub eps: Vec<f64>,
    pub lipschitz: Vec<f64>,
    pub lipschitz_model: Vec<f64>,
    pub lambda: f64,
}

impl ToleranceSchedule {
    pub fn new(
        delta: Vec<f64>,
        lipschitz: Vec<f64>,
        lipschitz_model: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let t = delta.len();
        let eps = epsilon_schedule(&delta, &lipschitz, &lipschitz_model, lambda, t)?;
        Ok(Self {
            delta,
            eps,
            lipschitz,
            lipschitz_model,
            lambda,
        })
    }

    /// `delta_t = delta` and `M_t = M_under_t = m` for every stage.
    pub fn uniform(num_stages: usize, delta: f64, m: f64, lambda: f64) -> Result<Self> {
        Self::new(
            vec![delta; num_stages],
            vec![m; num_stages],
            vec![m; num_stages],
            lambda,
        )
    }

    /// Uniform `delta` with `M_t = M_under_t` from [`cost_lipschitz_bound`].
    pub fn from_cost_bound(inst: &Instance, delta: f64) -> Result<Self> {
        let m = cost_lipschitz_bound(inst);
        Self::new(vec![delta; inst.num_stages], m.clone(), m, inst.lambda)
    }

    pub fn num_stages(&self) -> usize {
        self.delta.len()
    }

    /// `sum_{t=1}^T lambda^{t-1} eps_{t-1}`, the computable-gap threshold.
    pub fn gap_threshold(&self) -> f64 {
        self.eps
            .iter()
            .enumerate()
            .map(|(s, e)| self.lambda.powi(s as i32) * e)
            .sum()
    }

    /// Termination radius for the first stage; defaults to `delta_1`.
    pub fn first_stage_radius(&self) -> f64 {
        self.delta[0]
    }
}

/// `eps_{T-1} = 0` and `eps_{t-1} = (M_t + M_under_t) delta_t + lambda eps_t`.
///
/// Inputs are per-stage slices of length `num_stages`; the output has
/// length `num_stages` with `eps[t]` for `t = 0..T-1`.
pub fn epsilon_schedule(
    delta: &[f64],
    lipschitz: &[f64],
    lipschitz_model: &[f64],
    lambda: f64,
    num_stages: usize,
) -> Result<Vec<f64>> {
    if num_stages < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 stages, got {num_stages}"
        )));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "lambda = {lambda} is outside (0, 1]"
        )));
    }
    for (name, v) in [
        ("delta", delta),
        ("M", lipschitz),
        ("M_under", lipschitz_model),
    ] {
        if v.len() != num_stages {
            return Err(Error::Dimension(format!(
                "{name} has length {}, expected {num_stages}",
                v.len()
            )));
        }
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "{name} entries must be finite and nonnegative"
            )));
        }
    }
    let mut eps = vec![0.0; num_stages];
    for t in (1..num_stages).rev() {
        eps[t - 1] = (lipschitz[t - 1] + lipschitz_model[t - 1]) * delta[t - 1] + lambda * eps[t];
    }
    Ok(eps)
}

/// Draws stage realizations for sample-average construction.
pub trait ScenarioSampler {
    fn lambda(&self) -> f64;
    fn shapes(&self) -> Vec<StageShape>;
    /// One realization of stage `t` (1-based).
    fn sample(&self, t: usize, rng: &mut dyn RngCore) -> Realization;
}

/// Builds an SAA instance with `counts[t-1]` i.i.d. draws at stage `t`.
///
/// Every stage draws from its own ChaCha stream, so the lists are
/// independent across stages and a change in one stage's count leaves the
/// other stages untouched.
pub fn build_saa(sampler: &dyn ScenarioSampler, counts: &[usize], seed: u64) -> Result<Instance> {
    let shapes = sampler.shapes();
    if counts.len() != shapes.len() {
        return Err(Error::Dimension(format!(
            "{} counts for {} stages",
            counts.len(),
            shapes.len()
        )));
    }
    if counts.first() != Some(&1) {
        return Err(Error::InvalidInput(
            "the first stage must have exactly one realization".into(),
        ));
    }
    if counts.contains(&0) {
        return Err(Error::InvalidInput(
            "every stage needs at least one realization".into(),
        ));
    }
    let mut scenarios = Vec::with_capacity(shapes.len());
    for (s, &count) in counts.iter().enumerate() {
        let t = s + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let prev_n = if s == 0 { 0 } else { shapes[s - 1].n };
        let mut list = Vec::with_capacity(count);
        for i in 0..count {
            let real = sampler.sample(t, &mut rng);
            let problems = realization_problems(&real, &shapes[s], prev_n, s == 0);
            if !problems.is_empty() {
                return Err(Error::Dimension(format!(
                    "sampler output at stage {t} draw {}: {}",
                    i + 1,
                    problems.join("; ")
                )));
            }
            list.push(real);
        }
        scenarios.push(list);
    }
    let inst = Instance {
        num_stages: shapes.len(),
        lambda: sampler.lambda(),
        stages: shapes,
        scenarios,
    };
    inst.check()?;
    Ok(inst)
}

/// Tuning knobs shared by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub schedule: ToleranceSchedule,
    pub max_iterations: usize,
    pub lp_tolerance: f64,
    pub seed: u64,
    /// Forward paths per iteration for the stochastic solver.
    pub forward_replicas: usize,
    /// Replaces the schedule's gap threshold when set.
    pub gap_override: Option<f64>,
}

impl SolveConfig {
    pub fn new(schedule: ToleranceSchedule) -> Self {
        Self {
            schedule,
            max_iterations: 1000,
            lp_tolerance: 1e-9,
            seed: 0,
            forward_replicas: 1,
            gap_override: None,
        }
    }

    pub fn with_max_iterations(mut self, k: usize) -> Self {
        self.max_iterations = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replicas(mut self, l: usize) -> Self {
        self.forward_replicas = l;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.lp_tolerance > 0.0) {
            return Err(Error::InvalidInput("lp_tolerance must be positive".into()));
        }
        if self.forward_replicas == 0 {
            return Err(Error::InvalidInput(
                "forward_replicas must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn gap_threshold(&self) -> f64 {
        self.gap_override
            .unwrap_or_else(|| self.schedule.gap_threshold())
    }
}

/// Empirical Lipschitz constants of `F_ti(x) = c_ti^T x + lambda V_{t+1}(x)`.
///
/// Samples `probe_count` points per stage box and takes the largest
/// difference quotient over consecutive pairs and over each point paired
/// with the box center, evaluating `V_{t+1}` exactly through the
/// deterministic-equivalent oracle. This is a lower estimate of the true
/// constant.
pub fn estimate_lipschitz(inst: &Instance, probe_count: usize, seed: u64) -> Result<Vec<f64>> {
    if probe_count < 2 {
        return Err(Error::InvalidInput(format!(
            "needs at least 2 probes, got {probe_count}"
        )));
    }
    inst.check()?;
    let tol = 1e-9;
    let mut out = Vec::with_capacity(inst.num_stages);
    for t in 1..=inst.num_stages {
        let shape = inst.shape(t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut points: Vec<Vec<f64>> = vec![shape
            .lower
            .iter()
            .zip(&shape.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()];
        for _ in 0..probe_count {
            points.push(crate::oracle::sample_box(shape, &mut rng));
        }
        let future: Vec<f64> = points
            .iter()
            .map(|x| {
                if t == inst.num_stages {
                    Ok(0.0)
                } else {
                    crate::oracle::exact_value(inst, t + 1, x, tol)
                }
            })
            .collect::<Result<_>>()?;
        let mut best = 0.0f64;
        for real in inst.realizations(t) {
            let f: Vec<f64> = points
                .iter()
                .zip(&future)
                .map(|(x, v)| dot(&real.c, x) + inst.lambda * v)
                .collect();
            let mut pairs: Vec<(usize, usize)> = (1..points.len()).map(|j| (0, j)).collect();
            pairs.extend((1..points.len() - 1).map(|j| (j, j + 1)));
            for (a, b) in pairs {
                let d = linf(&points[a], &points[b]);
                if d > 1e-12 {
                    best = best.max((f[a] - f[b]).abs() / d);
                }
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// `sum_{tau >= t} lambda^{tau-t} max_i ||c_{tau i}||_1` per stage.
///
/// Bounds the l-infinity Lipschitz constant of `F_ti` and of its cut models
/// whenever each stage's feasible-set map moves by at most `||chi - chi'||`
/// in Hausdorff distance (true for the movement-limited families produced
/// by the generator, where the incoming state is interior to its domain).
pub fn cost_lipschitz_bound(inst: &Instance) -> Vec<f64> {
    let t_max = inst.num_stages;
    let mut out = vec![0.0; t_max];
    let mut tail = 0.0;
    for t in (1..=t_max).rev() {
        let m = inst
            .realizations(t)
            .iter()
            .map(|r| r.c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        tail = m + inst.lambda * tail;
        out[t - 1] = tail;
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
