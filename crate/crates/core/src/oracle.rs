//! Brute-force ground truth for desk-scale instances.
//!
//! Two independent routes are provided:
//!
//! * the deterministic equivalent over the full scenario tree, which gives
//!   the optimal value `F*` and exact value functions `V_t(chi)` at any
//!   point (one LP per query, one variable block per tree node);
//! * a backward recursion on a state grid whose continuation is the convex
//!   envelope of the next stage's node values.
//!
//! Both are used by the invariant and acceptance suites to audit the
//! cutting-plane solvers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cutmodel::CutPool;
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Sense};
use crate::model::{Instance, StageShape};

/// Hard cap on deterministic-equivalent size.
pub const MAX_EXTENSIVE_VARS: usize = 100_000;

/// One root-to-leaf path `(i_2, ..., i_T)` of the SAA tree (0-based
/// indices), with its probability `1 / prod N_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTreePath {
    pub indices: Vec<usize>,
    pub probability: f64,
}

/// Every path of the tree in lexicographic order.
pub fn enumerate_paths(inst: &Instance) -> Vec<ScenarioTreePath> {
    let counts = inst.scenario_counts();
    let total: usize = counts[1..].iter().product();
    let prob = 1.0 / total as f64;
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; counts.len() - 1];
    loop {
        out.push(ScenarioTreePath {
            indices: idx.clone(),
            probability: prob,
        });
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < counts[pos + 1] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

#[derive(Debug, Clone)]
struct TreeNode {
    stage: usize,
    scenario: usize,
    parent: Option<usize>,
    weight: f64,
    offset: usize,
}

/// Deterministic equivalent of the subtree starting at stage `t`.
///
/// `roots` lists the stage-`t` realizations to include, each with equal
/// weight. Returns the program and the node table.
fn subtree_program(
    inst: &Instance,
    t: usize,
    roots: &[usize],
    chi: &[f64],
) -> Result<(LinearProgram, Vec<TreeNode>)> {
    let t_max = inst.num_stages;
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut vars = 0usize;
    let mut frontier: Vec<usize> = Vec::new();
    for &i in roots {
        nodes.push(TreeNode {
            stage: t,
            scenario: i,
            parent: None,
            weight: 1.0 / roots.len() as f64,
            offset: vars,
        });
        vars += inst.shape(t).n;
        frontier.push(nodes.len() - 1);
    }
    for tau in t + 1..=t_max {
        let n_tau = inst.realizations(tau).len();
        let mut next = Vec::with_capacity(frontier.len() * n_tau);
        for &par in &frontier {
            for i in 0..n_tau {
                nodes.push(TreeNode {
                    stage: tau,
                    scenario: i,
                    parent: Some(par),
                    weight: nodes[par].weight * inst.lambda / n_tau as f64,
                    offset: vars,
                });
                vars += inst.shape(tau).n;
                next.push(nodes.len() - 1);
            }
            if vars > MAX_EXTENSIVE_VARS {
                return Err(Error::SizeGuard(format!(
                    "deterministic equivalent exceeds {MAX_EXTENSIVE_VARS} variables"
                )));
            }
        }
        frontier = next;
    }

    let mut program = LinearProgram::new(vars);
    for node in &nodes {
        let shape = inst.shape(node.stage);
        let real = &inst.realizations(node.stage)[node.scenario];
        let n = shape.n;
        for j in 0..n {
            program.objective[node.offset + j] = node.weight * real.c[j];
            program.lower[node.offset + j] = shape.lower[j];
            program.upper[node.offset + j] = shape.upper[j];
        }
        let parent_offset = node.parent.map(|p| nodes[p].offset);
        let mut emit = |mat: &Vec<Vec<f64>>, link: &Vec<Vec<f64>>, rhs: &[f64], sense: Sense| {
            for (r, row) in mat.iter().enumerate() {
                let mut coeffs = vec![0.0; vars];
                coeffs[node.offset..node.offset + n].copy_from_slice(row);
                let mut b = rhs[r];
                if let Some(link_row) = link.get(r) {
                    match parent_offset {
                        Some(po) => {
                            for (j, a) in link_row.iter().enumerate() {
                                coeffs[po + j] -= a;
                            }
                        }
                        None => {
                            b += link_row.iter().zip(chi).map(|(a, x)| a * x).sum::<f64>();
                        }
                    }
                }
                program.add_constraint(coeffs, sense, b);
            }
        };
        emit(&real.A, &real.B, &real.b, Sense::Eq);
        emit(&real.G, &real.Q, &real.q, Sense::Le);
    }
    Ok((program, nodes))
}

fn solve_subtree(
    inst: &Instance,
    t: usize,
    roots: &[usize],
    chi: &[f64],
    tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let (program, nodes) = subtree_program(inst, t, roots, chi)?;
    let sol = lp::solve(&program, tol);
    match sol.status {
        LpStatus::Optimal => {
            let n = inst.shape(t).n;
            let first = sol.x[nodes[0].offset..nodes[0].offset + n].to_vec();
            Ok((sol.value, first))
        }
        LpStatus::Infeasible => Err(Error::RecourseViolation {
            stage: t,
            scenario: roots.first().map_or(0, |i| i + 1),
            state: chi.to_vec(),
        }),
        LpStatus::Unbounded => Err(Error::Unbounded {
            stage: t,
            reason: "deterministic equivalent is unbounded".into(),
        }),
        LpStatus::IterationLimit => Err(Error::PivotLimit { stage: t }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensiveSolution {
    pub value: f64,
    pub first_stage: Vec<f64>,
}

/// `F*` of the SAA problem and a first-stage optimizer.
pub fn extensive_form_value(inst: &Instance, tol: f64) -> Result<ExtensiveSolution> {
    let (value, first_stage) = solve_subtree(inst, 1, &[0], &[], tol)?;
    Ok(ExtensiveSolution { value, first_stage })
}

/// Exact `V_t(chi) = (1/N_t) sum_i nu_ti(chi)` for `2 <= t <= T`, and
/// `V_{T+1} = 0`.
pub fn exact_value(inst: &Instance, t: usize, chi: &[f64], tol: f64) -> Result<f64> {
    if t > inst.num_stages {
        return Ok(0.0);
    }
    if t < 2 {
        return Err(Error::InvalidInput(
            "value functions start at stage 2".into(),
        ));
    }
    let roots: Vec<usize> = (0..inst.realizations(t).len()).collect();
    Ok(solve_subtree(inst, t, &roots, chi, tol)?.0)
}

/// Exact `nu_ti(chi)` for one realization (0-based `i`).
pub fn exact_scenario_value(
    inst: &Instance,
    t: usize,
    i: usize,
    chi: &[f64],
    tol: f64,
) -> Result<f64> {
    Ok(solve_subtree(inst, t, &[i], chi, tol)?.0)
}

/// Exact `F_ti(x) = c_ti^T x + lambda V_{t+1}(x)`.
pub fn exact_stage_objective(
    inst: &Instance,
    t: usize,
    i: usize,
    x: &[f64],
    tol: f64,
) -> Result<f64> {
    let c = &inst.realizations(t)[i].c;
    Ok(crate::model::dot(c, x) + inst.lambda * exact_value(inst, t + 1, x, tol)?)
}

/// Uniform point in a stage box.
pub fn sample_box<R: Rng + ?Sized>(shape: &StageShape, rng: &mut R) -> Vec<f64> {
    shape
        .lower
        .iter()
        .zip(&shape.upper)
        .map(|(l, u)| if u > l { rng.gen_range(*l..=*u) } else { *l })
        .collect()
}

/// Node values of `V_t` on a regular grid over the box of stage `t-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridValueFunction {
    pub stage: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
    /// Row-major over the lattice, first coordinate slowest.
    pub values: Vec<f64>,
    /// Upper bound on `values - V_t` at the nodes (values never undershoot).
    pub node_error: f64,
    /// Additional error of interpolating between nodes.
    pub interpolation_error: f64,
}

impl GridValueFunction {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn step(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / self.resolution as f64)
            .fold(0.0, f64::max)
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        lattice(&self.lower, &self.upper, self.resolution)
    }

    /// Total reported error bound `node_error + interpolation_error`.
    pub fn error_bound(&self) -> f64 {
        self.node_error + self.interpolation_error
    }

    /// Multilinear interpolation of the node values.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Dimension(format!(
                "grid has dimension {d}, point has {}",
                x.len()
            )));
        }
        let r = self.resolution;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let width = self.upper[k] - self.lower[k];
            if width <= 0.0 {
                continue;
            }
            let pos = ((x[k] - self.lower[k]) / width * r as f64).clamp(0.0, r as f64);
            let cell = (pos.floor() as usize).min(r.saturating_sub(1));
            base[k] = cell;
            frac[k] = pos - cell as f64;
        }
        let stride = r + 1;
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut index = 0usize;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                let coord = base[k] + usize::from(up);
                weight *= if up { frac[k] } else { 1.0 - frac[k] };
                index = index * stride + coord.min(r);
            }
            if weight != 0.0 {
                total += weight * self.values[index];
            }
        }
        Ok(total)
    }
}

fn lattice(lower: &[f64], upper: &[f64], resolution: usize) -> Vec<Vec<f64>> {
    let d = lower.len();
    let per = resolution + 1;
    let count = per.pow(d as u32);
    (0..count)
        .map(|mut idx| {
            let mut p = vec![0.0; d];
            for k in (0..d).rev() {
                let i = idx % per;
                idx /= per;
                p[k] = lower[k] + (upper[k] - lower[k]) * i as f64 / resolution as f64;
            }
            p
        })
        .collect()
}

/// Minimum of `c^T x + lambda * env(x)` over stage `tau` feasible set at
/// `chi`, where `env` is the convex envelope of `next` (if any).
fn grid_stage_value(
    inst: &Instance,
    tau: usize,
    i: usize,
    chi: &[f64],
    next: Option<(&[Vec<f64>], &[f64])>,
    tol: f64,
) -> Result<f64> {
    let shape = inst.shape(tau);
    let real = &inst.realizations(tau)[i];
    let n = shape.n;
    let k = next.map_or(0, |(nodes, _)| nodes.len());
    let width = n + k;
    let mut program = LinearProgram::new(width);
    program.objective[..n].copy_from_slice(&real.c);
    program.lower[..n].copy_from_slice(&shape.lower);
    program.upper[..n].copy_from_slice(&shape.upper);
    let pad = |row: &[f64]| {
        let mut v = row.to_vec();
        v.resize(width, 0.0);
        v
    };
    for (row, rhs) in real.A.iter().zip(real.linked_eq_rhs(chi)) {
        program.add_constraint(pad(row), Sense::Eq, rhs);
    }
    for (row, rhs) in real.G.iter().zip(real.linked_ineq_rhs(chi)) {
        program.add_constraint(pad(row), Sense::Le, rhs);
    }
    if let Some((nodes, values)) = next {
        for (w, v) in values.iter().enumerate() {
            program.objective[n + w] = inst.lambda * v;
        }
        for j in 0..n {
            let mut row = vec![0.0; width];
            row[j] = -1.0;
            for (w, node) in nodes.iter().enumerate() {
                row[n + w] = node[j];
            }
            program.add_constraint(row, Sense::Eq, 0.0);
        }
        let mut row = vec![0.0; width];
        row[n..].iter_mut().for_each(|v| *v = 1.0);
        program.add_constraint(row, Sense::Eq, 1.0);
    }
    let sol = lp::solve(&program, tol);
    match sol.status {
        LpStatus::Optimal => Ok(sol.value),
        LpStatus::Infeasible => Err(Error::RecourseViolation {
            stage: tau,
            scenario: i + 1,
            state: chi.to_vec(),
        }),
        LpStatus::Unbounded => Err(Error::Unbounded {
            stage: tau,
            reason: "grid subproblem is unbounded".into(),
        }),
        LpStatus::IterationLimit => Err(Error::PivotLimit { stage: tau }),
    }
}

/// Grid values of `V_t` by backward recursion from `V_T`.
///
/// `value_lipschitz[tau-1]` bounds the l-infinity Lipschitz constant of
/// `V_tau`; it only enters the reported error bounds.
pub fn exact_value_grid(
    inst: &Instance,
    t: usize,
    resolution: usize,
    value_lipschitz: &[f64],
    tol: f64,
) -> Result<GridValueFunction> {
    let t_max = inst.num_stages;
    if t < 2 || t > t_max {
        return Err(Error::InvalidInput(format!(
            "grid stage {t} outside 2..={t_max}"
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput(
            "grid resolution must be positive".into(),
        ));
    }
    for tau in t..=t_max {
        let d = inst.state_dim_into(tau);
        if d > 2 {
            return Err(Error::SizeGuard(format!(
                "grid recursion needs state dimension <= 2, stage {tau} has {d}"
            )));
        }
    }
    if value_lipschitz.len() < t_max {
        return Err(Error::Dimension(
            "one Lipschitz bound per stage is required".into(),
        ));
    }
    let mut next: Option<GridValueFunction> = None;
    for tau in (t..=t_max).rev() {
        let prev = inst.shape(tau - 1);
        let nodes = lattice(&prev.lower, &prev.upper, resolution);
        let cont_nodes = next.as_ref().map(|g| (g.nodes(), g.values.clone()));
        let n_tau = inst.realizations(tau).len();
        let values: Vec<f64> = nodes
            .iter()
            .map(|chi| {
                let mut acc = 0.0;
                for i in 0..n_tau {
                    acc += grid_stage_value(
                        inst,
                        tau,
                        i,
                        chi,
                        cont_nodes
                            .as_ref()
                            .map(|(n, v)| (n.as_slice(), v.as_slice())),
                        tol,
                    )?;
                }
                Ok(acc / n_tau as f64)
            })
            .collect::<Result<_>>()?;
        let node_error = match &next {
            None => 0.0,
            Some(g) => inst.lambda * (g.node_error + value_lipschitz[tau] * g.step()),
        };
        let mut grid = GridValueFunction {
            stage: tau,
            lower: prev.lower.clone(),
            upper: prev.upper.clone(),
            resolution,
            values,
            node_error,
            interpolation_error: 0.0,
        };
        grid.interpolation_error = value_lipschitz[tau - 1] * grid.step();
        next = Some(grid);
    }
    Ok(next.expect("at least one stage"))
}

/// First-stage value through the grid recursion, an upper estimate of `F*`
/// with slack at most the returned bound.
pub fn grid_first_stage_value(
    inst: &Instance,
    resolution: usize,
    value_lipschitz: &[f64],
    tol: f64,
) -> Result<(f64, f64)> {
    let grid = exact_value_grid(inst, 2, resolution, value_lipschitz, tol)?;
    let nodes = grid.nodes();
    let v = grid_stage_value(inst, 1, 0, &[], Some((&nodes, &grid.values)), tol)?;
    let bound = inst.lambda * (grid.node_error + value_lipschitz[1] * grid.step());
    Ok((v, bound))
}

/// `max_x pool(x) - grid(x)` over the probes.
pub fn audit_cut_validity(
    pool: &CutPool,
    grid: &GridValueFunction,
    probes: &[Vec<f64>],
) -> Result<f64> {
    if pool.stage != grid.stage {
        return Err(Error::InvalidInput(format!(
            "pool is for stage {} but grid is for stage {}",
            pool.stage, grid.stage
        )));
    }
    let mut worst = f64::NEG_INFINITY;
    for x in probes {
        worst = worst.max(pool.eval(x)? - grid.eval(x)?);
    }
    Ok(worst)
}

/// `max_x pool(x) - V_t(x)` with `V_t` from the deterministic equivalent.
pub fn audit_cut_validity_exact(
    inst: &Instance,
    pool: &CutPool,
    probes: &[Vec<f64>],
    tol: f64,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for x in probes {
        worst = worst.max(pool.eval(x)? - exact_value(inst, pool.stage, x, tol)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutmodel::Cut;
    use crate::generate::{generate_instance, GeneratorSpec};
    use crate::model::{cost_lipschitz_bound, Realization};
    use approx::assert_abs_diff_eq;

    const TOL: f64 = 1e-9;

    fn two_stage() -> Instance {
        // stage 1: x1 in [0,1], cost -1; stage 2: x2 >= x1 - 0.5 (x1 - x2 <= 0.5), cost 2
        let s1 = StageShape::new(vec![0.0], vec![1.0], 0, 0);
        let s2 = StageShape::new(vec![0.0], vec![1.0], 0, 1);
        Instance {
            num_stages: 2,
            lambda: 1.0,
            stages: vec![s1, s2],
            scenarios: vec![
                vec![Realization::cost_only(vec![-1.0])],
                vec![Realization {
                    A: vec![],
                    B: vec![],
                    b: vec![],
                    c: vec![2.0],
                    G: vec![vec![-1.0]],
                    Q: vec![vec![-1.0]],
                    q: vec![0.5],
                }],
            ],
        }
    }

    #[test]
    fn single_scenario_two_stage_value() {
        // F(x1) = -x1 + 2 max(0, x1 - 0.5): optimum at x1 = 0.5, value -0.5
        let sol = extensive_form_value(&two_stage(), TOL).unwrap();
        assert_abs_diff_eq!(sol.value, -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.first_stage[0], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn zero_discount_kills_future() {
        let mut inst = two_stage();
        inst.lambda = 0.0;
        let sol = extensive_form_value(&inst, TOL).unwrap();
        assert_abs_diff_eq!(sol.value, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn tree_with_four_leaves_matches_path_enumeration() {
        let inst = generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 2], 1, 5)).unwrap();
        let paths = enumerate_paths(&inst);
        assert_eq!(paths.len(), 4);
        assert_abs_diff_eq!(paths.iter().map(|p| p.probability).sum::<f64>(), 1.0);
        let f = extensive_form_value(&inst, TOL).unwrap();
        // x1 fixed at the optimizer, the remaining value must equal V_2(x1)
        let c1 = inst.realizations(1)[0].c[0];
        let v2 = exact_value(&inst, 2, &f.first_stage, TOL).unwrap();
        assert_abs_diff_eq!(
            f.value,
            c1 * f.first_stage[0] + inst.lambda * v2,
            epsilon = 1e-8
        );
    }

    #[test]
    fn last_stage_grid_is_exact() {
        let inst = two_stage();
        let lip = cost_lipschitz_bound(&inst);
        let grid = exact_value_grid(&inst, 2, 8, &lip, TOL).unwrap();
        assert_eq!(grid.node_error, 0.0);
        for (x, v) in grid.nodes().iter().zip(&grid.values) {
            let exact = exact_value(&inst, 2, x, TOL).unwrap();
            assert_abs_diff_eq!(*v, exact, epsilon = 1e-9);
        }
    }

    #[test]
    fn linear_value_function_grid_is_exact() {
        // x2 = x1 with cost 3 at stage 2 and 1 at stage 3 (x3 = x2): V linear
        let s = StageShape::new(vec![0.0], vec![1.0], 1, 0);
        let link = Realization {
            A: vec![vec![1.0]],
            B: vec![vec![1.0]],
            b: vec![0.0],
            c: vec![3.0],
            G: vec![],
            Q: vec![],
            q: vec![],
        };
        let mut last = link.clone();
        last.c = vec![1.0];
        let inst = Instance {
            num_stages: 3,
            lambda: 1.0,
            stages: vec![StageShape::new(vec![0.0], vec![1.0], 0, 0), s.clone(), s],
            scenarios: vec![
                vec![Realization::cost_only(vec![1.0])],
                vec![link],
                vec![last],
            ],
        };
        let lip = cost_lipschitz_bound(&inst);
        let grid = exact_value_grid(&inst, 2, 4, &lip, TOL).unwrap();
        for (x, v) in grid.nodes().iter().zip(&grid.values) {
            assert_abs_diff_eq!(*v, 4.0 * x[0], epsilon = 1e-9);
        }
        assert_abs_diff_eq!(grid.eval(&[0.3]).unwrap(), 1.2, epsilon = 1e-9);
    }

    #[test]
    fn doubling_resolution_halves_interpolation_bound() {
        let inst = two_stage();
        let lip = cost_lipschitz_bound(&inst);
        let a = exact_value_grid(&inst, 2, 5, &lip, TOL).unwrap();
        let b = exact_value_grid(&inst, 2, 10, &lip, TOL).unwrap();
        assert_abs_diff_eq!(
            a.interpolation_error,
            2.0 * b.interpolation_error,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_recursion_agrees_with_extensive_form() {
        for seed in 1..4 {
            let inst =
                generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 2], 1, seed)).unwrap();
            let lip = cost_lipschitz_bound(&inst);
            let exact = extensive_form_value(&inst, TOL).unwrap().value;
            let (grid, bound) = grid_first_stage_value(&inst, 20, &lip, TOL).unwrap();
            assert!(grid >= exact - 1e-8, "grid {grid} below exact {exact}");
            assert!(
                grid - exact <= bound + 1e-8,
                "gap {} > {bound}",
                grid - exact
            );
        }
    }

    #[test]
    fn grid_dimension_guard() {
        let inst = generate_instance(&GeneratorSpec::random_lp(3, vec![1, 1, 1], 3, 2)).unwrap();
        let lip = vec![1.0; 3];
        assert!(matches!(
            exact_value_grid(&inst, 2, 4, &lip, TOL),
            Err(Error::SizeGuard(_))
        ));
    }

    #[test]
    fn audit_detects_corrupted_cut() {
        let inst = two_stage();
        let lip = cost_lipschitz_bound(&inst);
        let grid = exact_value_grid(&inst, 2, 10, &lip, TOL).unwrap();
        let probes: Vec<Vec<f64>> = (0..=20).map(|i| vec![i as f64 / 20.0]).collect();
        let pool = CutPool::new(2, 1, 0.0);
        assert!(audit_cut_validity(&pool, &grid, &probes).unwrap() <= 0.0);

        // exact supporting line at 0.75: V(x) = 2(x - 0.5) for x >= 0.5
        let mut good = pool.clone();
        good.push(Cut::new(vec![0.75], 0.5, vec![2.0], 1)).unwrap();
        assert!(audit_cut_validity(&good, &grid, &probes).unwrap() <= 1e-9);
        assert!(audit_cut_validity_exact(&inst, &good, &probes, TOL).unwrap() <= 1e-9);

        let mut bad = pool;
        bad.push(Cut::new(vec![0.75], 1.5, vec![2.0], 1)).unwrap();
        assert!(audit_cut_validity(&bad, &grid, &probes).unwrap() > 0.5);
    }
}
