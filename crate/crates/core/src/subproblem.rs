//! One stage subproblem as a linear program.
//!
//! ```text
//! min  c^T x + lambda * theta
//! s.t. A x       = B chi + b        (duals y, Lagrangian sign)
//!      G x      <= Q chi + q        (duals mu >= 0)
//!      g_j^T x - theta <= g_j^T a_j - v_j   for every cut j
//!      lower <= x <= upper,  theta >= floor
//! ```
//!
//! `theta` is only present when the stage has a continuation model. With
//! the Lagrangian `c^T x + lambda theta + y^T (A x - B chi - b) + mu^T (G x - Q chi - q)`
//! the optimal value's gradient in `chi` is `-(B^T y + Q^T mu)`.

use serde::{Deserialize, Serialize};

use crate::cutmodel::{Cut, CutPool};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Sense};
use crate::model::{Realization, StageShape};

/// Identifies the subproblem being solved, for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageRef {
    pub stage: usize,
    pub scenario: usize,
}

/// The assembled stage LP.
#[derive(Debug, Clone)]
pub struct StageLp {
    pub program: LinearProgram,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub num_cuts: usize,
    pub has_theta: bool,
}

impl StageLp {
    pub fn build(
        shape: &StageShape,
        real: &Realization,
        chi: &[f64],
        continuation: Option<&CutPool>,
        lambda: f64,
    ) -> Self {
        let n = shape.n;
        let has_theta = continuation.is_some();
        let width = n + usize::from(has_theta);
        let mut program = LinearProgram::new(width);
        program.objective[..n].copy_from_slice(&real.c);
        program.lower[..n].copy_from_slice(&shape.lower);
        program.upper[..n].copy_from_slice(&shape.upper);

        let pad = |row: &[f64]| {
            let mut v = row.to_vec();
            v.resize(width, 0.0);
            v
        };
        let eq_rhs = real.linked_eq_rhs(chi);
        for (row, rhs) in real.A.iter().zip(eq_rhs) {
            program.add_constraint(pad(row), Sense::Eq, rhs);
        }
        let ineq_rhs = real.linked_ineq_rhs(chi);
        for (row, rhs) in real.G.iter().zip(ineq_rhs) {
            program.add_constraint(pad(row), Sense::Le, rhs);
        }
        let mut num_cuts = 0;
        if let Some(pool) = continuation {
            program.objective[n] = lambda;
            program.lower[n] = pool.floor;
            program.upper[n] = f64::INFINITY;
            for cut in &pool.cuts {
                let mut row = cut.gradient.clone();
                row.push(-1.0);
                program.add_constraint(row, Sense::Le, -cut.offset());
                num_cuts += 1;
            }
        }
        Self {
            program,
            n,
            m: real.A.len(),
            p: real.G.len(),
            num_cuts,
            has_theta,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.program.constraints.len()
    }

    pub fn solve(&self, tol: f64) -> StageSolution {
        let sol = lp::solve(&self.program, tol);
        let status = match sol.status {
            LpStatus::Optimal => SolveStatus::Optimal,
            LpStatus::Infeasible => SolveStatus::Infeasible,
            LpStatus::Unbounded => SolveStatus::Unbounded,
            LpStatus::IterationLimit => SolveStatus::PivotLimit,
        };
        if status != SolveStatus::Optimal {
            return StageSolution {
                x: Vec::new(),
                theta: f64::NAN,
                value: f64::NAN,
                dual_value: f64::NAN,
                y: Vec::new(),
                mu: Vec::new(),
                cut_duals: Vec::new(),
                status,
            };
        }
        let (m, p) = (self.m, self.p);
        let neg = |v: &[f64]| {
            v.iter()
                .map(|d| if *d == 0.0 { 0.0 } else { -d })
                .collect::<Vec<_>>()
        };
        StageSolution {
            x: sol.x[..self.n].to_vec(),
            theta: if self.has_theta { sol.x[self.n] } else { 0.0 },
            value: sol.value,
            dual_value: sol.dual_value(&self.program),
            y: neg(&sol.duals[..m]),
            mu: neg(&sol.duals[m..m + p]),
            cut_duals: neg(&sol.duals[m + p..]),
            status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    PivotLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    pub x: Vec<f64>,
    pub theta: f64,
    /// `c^T x + lambda * theta`
    pub value: f64,
    pub dual_value: f64,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub cut_duals: Vec<f64>,
    pub status: SolveStatus,
}

impl StageSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Stage cost `c^T x` alone.
    pub fn stage_cost(&self, real: &Realization) -> f64 {
        crate::model::dot(&real.c, &self.x)
    }
}

/// Solves the stage LP and maps failures onto typed errors.
pub fn solve_stage(
    at: StageRef,
    shape: &StageShape,
    real: &Realization,
    chi: &[f64],
    continuation: Option<&CutPool>,
    lambda: f64,
    tol: f64,
) -> Result<StageSolution> {
    let sol = StageLp::build(shape, real, chi, continuation, lambda).solve(tol);
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        SolveStatus::Infeasible => Err(Error::RecourseViolation {
            stage: at.stage,
            scenario: at.scenario,
            state: chi.to_vec(),
        }),
        SolveStatus::Unbounded => Err(Error::Unbounded {
            stage: at.stage,
            reason: if continuation.is_some() {
                "unbounded box direction".into()
            } else {
                "missing theta lower bound or unbounded box".into()
            },
        }),
        SolveStatus::PivotLimit => Err(Error::PivotLimit { stage: at.stage }),
    }
}

/// Supporting hyperplane of the stage value `nu(chi)` at `chi`.
///
/// The gradient is `-(B^T y + Q^T mu)`.
pub fn cut_from_solution(
    sol: &StageSolution,
    real: &Realization,
    chi: &[f64],
    born: usize,
) -> Result<Cut> {
    if !sol.is_optimal() {
        return Err(Error::InvalidInput(format!(
            "cannot build a cut from a {:?} solve",
            sol.status
        )));
    }
    let mut gradient = vec![0.0; chi.len()];
    for (row, y) in real.B.iter().zip(&sol.y) {
        for (g, a) in gradient.iter_mut().zip(row) {
            *g -= a * y;
        }
    }
    for (row, mu) in real.Q.iter().zip(&sol.mu) {
        for (g, a) in gradient.iter_mut().zip(row) {
            *g -= a * mu;
        }
    }
    Ok(Cut::new(chi.to_vec(), sol.value, gradient, born))
}

/// Pluggable backend for stage solves. The reference backend is the dense
/// simplex; a convex-programming backend only needs to return the same
/// optimizer, value and multipliers.
pub trait StageSolver: Sync {
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        at: StageRef,
        shape: &StageShape,
        real: &Realization,
        chi: &[f64],
        continuation: Option<&CutPool>,
        lambda: f64,
    ) -> Result<StageSolution>;
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexStageSolver {
    pub tolerance: f64,
}

impl StageSolver for SimplexStageSolver {
    fn solve(
        &self,
        at: StageRef,
        shape: &StageShape,
        real: &Realization,
        chi: &[f64],
        continuation: Option<&CutPool>,
        lambda: f64,
    ) -> Result<StageSolution> {
        solve_stage(at, shape, real, chi, continuation, lambda, self.tolerance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const TOL: f64 = 1e-9;
    const AT: StageRef = StageRef {
        stage: 2,
        scenario: 1,
    };

    fn linking_stage() -> (StageShape, Realization) {
        (
            StageShape::new(vec![0.0], vec![2.0], 1, 0),
            Realization {
                A: vec![vec![1.0]],
                B: vec![vec![1.0]],
                b: vec![0.0],
                c: vec![2.0],
                G: vec![],
                Q: vec![],
                q: vec![],
            },
        )
    }

    #[test]
    fn corner_solution_without_linking() {
        let shape = StageShape::new(vec![0.0], vec![2.0], 0, 0);
        let real = Realization::cost_only(vec![1.0]);
        let pool = CutPool::new(3, 1, 0.0);
        let sol = solve_stage(AT, &shape, &real, &[], Some(&pool), 1.0, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.0);
        assert_abs_diff_eq!(sol.value, 0.0);
        assert_abs_diff_eq!(sol.theta, 0.0);
    }

    #[test]
    fn equality_linking_duals_certify_slope() {
        let (shape, real) = linking_stage();
        let pool = CutPool::new(3, 1, 0.0);
        let sol = solve_stage(AT, &shape, &real, &[0.5], Some(&pool), 1.0, TOL).unwrap();
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.value, 1.0, epsilon = 1e-12);
        // -B^T y = 2
        assert_abs_diff_eq!(-sol.y[0], 2.0, epsilon = 1e-12);
        let cut = cut_from_solution(&sol, &real, &[0.5], 1).unwrap();
        assert_abs_diff_eq!(cut.gradient[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cut.intercept, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.dual_value, sol.value, epsilon = 1e-12);
    }

    #[test]
    fn no_linking_gives_flat_cut() {
        let shape = StageShape::new(vec![-1.0, -1.0], vec![1.0, 1.0], 0, 1);
        let real = Realization {
            A: vec![],
            B: vec![],
            b: vec![],
            c: vec![1.0, -1.0],
            G: vec![vec![1.0, 1.0]],
            Q: vec![vec![0.0, 0.0]],
            q: vec![0.5],
        };
        let sol = solve_stage(AT, &shape, &real, &[0.3, 0.9], None, 1.0, TOL).unwrap();
        let cut = cut_from_solution(&sol, &real, &[0.3, 0.9], 1).unwrap();
        assert!(cut.gradient.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn out_of_range_state_is_recourse_violation() {
        let (shape, real) = linking_stage();
        let err = solve_stage(AT, &shape, &real, &[3.0], None, 1.0, TOL).unwrap_err();
        match err {
            Error::RecourseViolation { stage, state, .. } => {
                assert_eq!(stage, 2);
                assert_eq!(state, vec![3.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let sol = StageLp::build(&shape, &real, &[3.0], None, 1.0).solve(TOL);
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_box_is_typed_error() {
        let shape = StageShape::new(vec![f64::NEG_INFINITY], vec![0.0], 0, 0);
        let real = Realization::cost_only(vec![1.0]);
        let err = solve_stage(AT, &shape, &real, &[], None, 1.0, TOL).unwrap_err();
        assert!(matches!(err, Error::Unbounded { .. }));
    }

    #[test]
    fn cut_rows_and_theta() {
        // V_{t+1}(x) >= |x - 1| via two cuts, stage cost 0: optimum at x = 1
        let shape = StageShape::new(vec![0.0], vec![2.0], 0, 0);
        let real = Realization::cost_only(vec![0.0]);
        let mut pool = CutPool::new(3, 1, -5.0);
        pool.push(Cut::new(vec![1.0], 0.0, vec![1.0], 1)).unwrap();
        pool.push(Cut::new(vec![1.0], 0.0, vec![-1.0], 1)).unwrap();
        let lp = StageLp::build(&shape, &real, &[], Some(&pool), 0.5);
        assert_eq!(lp.num_rows(), 2);
        let sol = lp.solve(TOL);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.theta, 0.0, epsilon = 1e-12);
        assert!(sol.cut_duals.iter().all(|d| *d >= -1e-12));
        assert_abs_diff_eq!(sol.cut_duals.iter().sum::<f64>(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn non_optimal_solution_cannot_make_cut() {
        let (shape, real) = linking_stage();
        let sol = StageLp::build(&shape, &real, &[3.0], None, 1.0).solve(TOL);
        assert!(cut_from_solution(&sol, &real, &[3.0], 1).is_err());
    }

    #[test]
    fn identical_inputs_identical_outputs() {
        let (shape, real) = linking_stage();
        let pool = CutPool::new(3, 1, 0.0);
        let a = solve_stage(AT, &shape, &real, &[0.7], Some(&pool), 1.0, TOL).unwrap();
        let b = solve_stage(AT, &shape, &real, &[0.7], Some(&pool), 1.0, TOL).unwrap();
        assert_eq!(a, b);
    }
}
