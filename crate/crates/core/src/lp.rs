//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! The engine is sized for desk-scale programs (tens of columns, a few
//! hundred rows). It returns the optimizer together with the row duals
//! `d value / d rhs`, which is everything the cutting-plane solvers need.
//!
//! Variables carry simple bounds. A finite lower bound is shifted out, a
//! finite upper bound becomes an extra `<=` row, and a free variable is
//! split into a positive and a negative part. Each row of the internal
//! tableau starts with an identity column (slack or artificial), and the
//! final reduced costs of those columns are read back as the duals.

use serde::{Deserialize, Serialize};

/// Relation between a row's activity and its right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }
}

/// `min objective^T x` subject to `constraints` and `lower <= x <= upper`.
///
/// Infinite bounds are expressed with `f64::NEG_INFINITY` / `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// A program over `n` nonnegative variables with zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.constraints.push(Constraint::new(coeffs, sense, rhs));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
    /// Sensitivity of the optimal value to each constraint's right-hand side.
    /// Nonpositive for `Le` rows and nonnegative for `Ge` rows.
    pub duals: Vec<f64>,
    /// `c_j - sum_i duals_i a_ij` for each original variable.
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    fn failed(status: LpStatus, n: usize, m: usize, pivots: usize) -> Self {
        Self {
            status,
            x: vec![f64::NAN; n],
            value: f64::NAN,
            duals: vec![f64::NAN; m],
            reduced_costs: vec![f64::NAN; n],
            pivots,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Dual objective `sum_i duals_i rhs_i + sum_j d_j * (active bound of j)`.
    ///
    /// Equals `value` at an optimal basis up to rounding.
    pub fn dual_value(&self, lp: &LinearProgram) -> f64 {
        let mut total: f64 = self
            .duals
            .iter()
            .zip(&lp.constraints)
            .map(|(y, row)| y * row.rhs)
            .sum();
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            if d > 0.0 && lp.lower[j].is_finite() {
                total += d * lp.lower[j];
            } else if d < 0.0 && lp.upper[j].is_finite() {
                total += d * lp.upper[j];
            }
        }
        total
    }
}

const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

/// How an original variable maps onto nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum ColumnMap {
    /// x = offset + z
    Shifted { col: usize, offset: f64 },
    /// x = offset - z
    Reflected { col: usize, offset: f64 },
    /// x = z+ - z-
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// row-major, `rows x (cols + 1)`, last entry of each row is the rhs
    data: Vec<f64>,
    /// reduced costs, last entry is minus the objective value
    obj: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.data[pr * w + pc];
        for c in 0..w {
            self.data[pr * w + c] /= p;
        }
        self.data[pr * w + pc] = 1.0;
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    let v = self.data[pr * w + c];
                    if v != 0.0 {
                        self.data[r * w + c] -= f * v;
                    }
                }
                self.data[r * w + pc] = 0.0;
            }
        }
        let f = self.obj[pc];
        if f != 0.0 {
            for c in 0..w {
                let v = self.data[pr * w + c];
                if v != 0.0 {
                    self.obj[c] -= f * v;
                }
            }
            self.obj[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    /// Load `costs` as the objective and price out the current basis.
    fn set_objective(&mut self, costs: &[f64]) {
        self.obj.clear();
        self.obj.extend_from_slice(costs);
        self.obj.push(0.0);
        let w = self.cols + 1;
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    self.obj[c] -= cb * self.data[r * w + c];
                }
            }
        }
    }

    /// Runs Bland-rule simplex iterations. `allowed` masks columns that may
    /// enter the basis.
    fn optimize(&mut self, allowed: &[bool], tol: f64) -> LpStatus {
        loop {
            if self.pivots >= MAX_PIVOTS {
                return LpStatus::IterationLimit;
            }
            let entering = (0..self.cols).find(|&c| allowed[c] && self.obj[c] < -tol);
            let Some(pc) = entering else {
                return LpStatus::Optimal;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-13
                                || (ratio <= bratio + 1e-13 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match best {
                Some((pr, _)) => self.pivot(pr, pc),
                None => return LpStatus::Unbounded,
            }
        }
    }
}

/// Solves `lp` to optimality. `tol` is the feasibility and optimality
/// tolerance used for pricing and for the phase-one infeasibility test.
pub fn solve(lp: &LinearProgram, tol: f64) -> LpSolution {
    let n = lp.num_vars();
    let m_orig = lp.constraints.len();
    assert_eq!(lp.lower.len(), n, "lower bound length");
    assert_eq!(lp.upper.len(), n, "upper bound length");

    for j in 0..n {
        if lp.lower[j] > lp.upper[j] + tol {
            return LpSolution::failed(LpStatus::Infeasible, n, m_orig, 0);
        }
    }

    // Column mapping for structural variables.
    let mut maps = Vec::with_capacity(n);
    let mut ns = 0usize;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l.is_finite() {
            maps.push(ColumnMap::Shifted { col: ns, offset: l });
            if u.is_finite() {
                bound_rows.push((ns, (u - l).max(0.0)));
            }
            ns += 1;
        } else if u.is_finite() {
            maps.push(ColumnMap::Reflected { col: ns, offset: u });
            ns += 1;
        } else {
            maps.push(ColumnMap::Split {
                pos: ns,
                neg: ns + 1,
            });
            ns += 2;
        }
    }

    // Transformed rows over structural columns.
    let m = m_orig + bound_rows.len();
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = Vec::with_capacity(m);
    for con in &lp.constraints {
        assert_eq!(con.coeffs.len(), n, "constraint width");
        let mut coeffs = vec![0.0; ns];
        let mut rhs = con.rhs;
        for (j, &a) in con.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                ColumnMap::Shifted { col, offset } => {
                    coeffs[col] += a;
                    rhs -= a * offset;
                }
                ColumnMap::Reflected { col, offset } => {
                    coeffs[col] -= a;
                    rhs -= a * offset;
                }
                ColumnMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push((coeffs, con.sense, rhs));
    }
    for &(col, width) in &bound_rows {
        let mut coeffs = vec![0.0; ns];
        coeffs[col] = 1.0;
        rows.push((coeffs, Sense::Le, width));
    }

    // Normalize to nonnegative rhs and lay out slack/artificial columns.
    let mut flip = vec![1.0; m];
    let mut senses = Vec::with_capacity(m);
    for (i, row) in rows.iter_mut().enumerate() {
        if row.2 < 0.0 {
            flip[i] = -1.0;
            row.0.iter_mut().for_each(|a| *a = -*a);
            row.2 = -row.2;
            row.1 = match row.1 {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        senses.push(row.1);
    }
    let n_slack = senses.iter().filter(|s| **s != Sense::Eq).count();
    let n_art = senses.iter().filter(|s| **s != Sense::Le).count();
    let cols = ns + n_slack + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    let mut basis = vec![0usize; m];
    let mut identity_col = vec![0usize; m];
    let mut is_art = vec![false; cols];
    let (mut next_slack, mut next_art) = (ns, ns + n_slack);
    for (i, (coeffs, sense, rhs)) in rows.iter().enumerate() {
        data[i * w..i * w + ns].copy_from_slice(coeffs);
        data[i * w + cols] = *rhs;
        match sense {
            Sense::Le => {
                data[i * w + next_slack] = 1.0;
                basis[i] = next_slack;
                identity_col[i] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                data[i * w + next_slack] = -1.0;
                next_slack += 1;
                data[i * w + next_art] = 1.0;
                basis[i] = next_art;
                identity_col[i] = next_art;
                is_art[next_art] = true;
                next_art += 1;
            }
            Sense::Eq => {
                data[i * w + next_art] = 1.0;
                basis[i] = next_art;
                identity_col[i] = next_art;
                is_art[next_art] = true;
                next_art += 1;
            }
        }
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        data,
        obj: Vec::with_capacity(w),
        basis,
        pivots: 0,
    };

    // Phase one.
    if n_art > 0 {
        let costs: Vec<f64> = (0..cols)
            .map(|c| if is_art[c] { 1.0 } else { 0.0 })
            .collect();
        tab.set_objective(&costs);
        let allowed = vec![true; cols];
        match tab.optimize(&allowed, tol * 1e-3) {
            LpStatus::Optimal => {}
            LpStatus::IterationLimit => {
                return LpSolution::failed(LpStatus::IterationLimit, n, m_orig, tab.pivots)
            }
            // phase one is bounded below by zero
            _ => unreachable!("phase one cannot be unbounded"),
        }
        let infeasibility = -tab.obj[cols];
        if infeasibility > tol {
            return LpSolution::failed(LpStatus::Infeasible, n, m_orig, tab.pivots);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if is_art[tab.basis[r]] {
                if let Some(pc) = (0..cols).find(|&c| !is_art[c] && tab.at(r, c).abs() > 1e-9) {
                    tab.pivot(r, pc);
                }
            }
        }
    }

    // Phase two.
    let mut costs = vec![0.0; cols];
    for (j, map) in maps.iter().enumerate() {
        let c = lp.objective[j];
        match *map {
            ColumnMap::Shifted { col, .. } => costs[col] += c,
            ColumnMap::Reflected { col, .. } => costs[col] -= c,
            ColumnMap::Split { pos, neg } => {
                costs[pos] += c;
                costs[neg] -= c;
            }
        }
    }
    tab.set_objective(&costs);
    let allowed: Vec<bool> = (0..cols).map(|c| !is_art[c]).collect();
    match tab.optimize(&allowed, tol * 1e-3) {
        LpStatus::Optimal => {}
        status => return LpSolution::failed(status, n, m_orig, tab.pivots),
    }

    // Primal recovery.
    let mut z = vec![0.0; cols];
    for r in 0..m {
        z[tab.basis[r]] = tab.rhs(r).max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            ColumnMap::Shifted { col, offset } => offset + z[col],
            ColumnMap::Reflected { col, offset } => offset - z[col],
            ColumnMap::Split { pos, neg } => z[pos] - z[neg],
        })
        .collect();
    let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();

    // Duals of the flipped rows are minus the reduced costs of their
    // identity columns (which have zero phase-two cost).
    let duals: Vec<f64> = (0..m_orig)
        .map(|i| {
            let d = -tab.obj[identity_col[i]];
            let d = flip[i] * d;
            if d == 0.0 {
                0.0
            } else {
                d
            }
        })
        .collect();
    let reduced_costs: Vec<f64> = (0..n)
        .map(|j| {
            let mut d = lp.objective[j];
            for (i, con) in lp.constraints.iter().enumerate() {
                d -= duals[i] * con.coeffs[j];
            }
            d
        })
        .collect();

    LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
        duals,
        reduced_costs,
        pivots: tab.pivots,
    }
}
