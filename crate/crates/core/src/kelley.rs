//! Kelley's cutting-plane method for convex Lipschitz functions on a box.
//!
//! Iteration `k` adds the cut at `x_k`, minimizes the model over the box
//! (an LP in `(x, theta)` with `theta` free) to get `x_{k+1}` and
//! `lb_k`, and evaluates `f(x_{k+1})` to update `ub_k`. The run stops once
//! `ub_k - lb_k <= eps`.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Sense};
use crate::model::{dot, linf};

pub type Oracle = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync>;

/// `min f(x)` over `lower <= x <= upper`, with `f` `lipschitz`-Lipschitz in
/// the l-infinity norm.
pub struct StaticProblem {
    pub name: String,
    pub oracle: Oracle,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lipschitz: f64,
}

impl std::fmt::Debug for StaticProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StaticProblem")
            .field("name", &self.name)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl StaticProblem {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Largest box side `l`.
    pub fn side(&self) -> f64 {
        linf(&self.lower, &self.upper)
    }

    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.oracle)(x)
    }

    /// `(l M / eps + 1)^n`.
    pub fn iteration_bound(&self, eps: f64) -> f64 {
        (self.side() * self.lipschitz / eps + 1.0).powi(self.dim() as i32)
    }

    /// Checks the Lipschitz constant on `pairs` random point pairs.
    pub fn check_lipschitz(&self, pairs: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..pairs {
            let a = self.sample(&mut rng);
            let b = self.sample(&mut rng);
            let d = linf(&a, &b);
            let diff = (self.eval(&a).0 - self.eval(&b).0).abs();
            if diff > self.lipschitz * d + 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "{}: |f(a) - f(b)| = {diff} exceeds M * {d}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if u > l { rng.gen_range(*l..=*u) } else { *l })
            .collect()
    }
}

fn linf_norm_oracle(center: Vec<f64>) -> Oracle {
    Box::new(move |x: &[f64]| {
        let mut best = 0;
        for j in 1..x.len() {
            if (x[j] - center[j]).abs() > (x[best] - center[best]).abs() {
                best = j;
            }
        }
        let mut g = vec![0.0; x.len()];
        let d = x[best] - center[best];
        g[best] = if d >= 0.0 { 1.0 } else { -1.0 };
        (d.abs(), g)
    })
}

/// Names accepted by [`builtin`].
pub const BUILTINS: [&str; 5] = ["linf", "shifted-linf", "kink", "l1", "constant"];

/// Piecewise-linear test functions on `[-1, 1]^n`:
///
/// * `linf`: `||x||_inf`, `M = 1`
/// * `shifted-linf`: `||x - a||_inf` with `a_j = 0.3 (-1)^j`, `M = 1`
/// * `kink`: `max_j max(x_j, -2 x_j)`, `M = 2`
/// * `l1`: `||x||_1`, `M = n`
/// * `constant`: `1`, `M = 0`
pub fn builtin(name: &str, n: usize) -> Result<StaticProblem> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let (oracle, lipschitz): (Oracle, f64) = match name {
        "linf" => (linf_norm_oracle(vec![0.0; n]), 1.0),
        "shifted-linf" => (
            linf_norm_oracle(
                (0..n)
                    .map(|j| if j % 2 == 0 { 0.3 } else { -0.3 })
                    .collect(),
            ),
            1.0,
        ),
        "kink" => (
            Box::new(|x: &[f64]| {
                let mut best = (f64::NEG_INFINITY, 0, 0.0);
                for (j, v) in x.iter().enumerate() {
                    for slope in [1.0, -2.0] {
                        if slope * v > best.0 {
                            best = (slope * v, j, slope);
                        }
                    }
                }
                let mut g = vec![0.0; x.len()];
                g[best.1] = best.2;
                (best.0, g)
            }),
            2.0,
        ),
        "l1" => (
            Box::new(|x: &[f64]| {
                let g = x
                    .iter()
                    .map(|v| if *v >= 0.0 { 1.0 } else { -1.0 })
                    .collect();
                (x.iter().map(|v| v.abs()).sum(), g)
            }),
            n as f64,
        ),
        "constant" => (Box::new(|x: &[f64]| (1.0, vec![0.0; x.len()])), 0.0),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown test function `{other}`; expected one of {BUILTINS:?}"
            )))
        }
    };
    Ok(StaticProblem {
        name: name.to_string(),
        oracle,
        lower: vec![-1.0; n],
        upper: vec![1.0; n],
        lipschitz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KelleyRecord {
    pub k: usize,
    /// `x_{k+1}`, the model minimizer.
    pub x: Vec<f64>,
    pub f: f64,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KelleyResult {
    pub x_best: Vec<f64>,
    pub ub: f64,
    pub lb: f64,
    /// `x_1, ..., x_{K+1}`.
    pub iterates: Vec<Vec<f64>>,
    pub records: Vec<KelleyRecord>,
    /// `K`, the number of completed iterations.
    pub iterations: usize,
    pub converged: bool,
}

impl KelleyResult {
    /// `x_1..x_K`, the points generated before the stopping test passed.
    pub fn pre_termination_iterates(&self) -> &[Vec<f64>] {
        &self.iterates[..self.iterations.min(self.iterates.len())]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.iterates.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|j| format!("x{j}")));
        header.extend(["f", "lb", "ub"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.k.to_string()];
            row.extend(r.x.iter().map(|v| crate::telemetry::fmt_f64(*v)));
            row.extend([r.f, r.lb, r.ub].map(crate::telemetry::fmt_f64));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

pub fn kelley_solve(
    prob: &StaticProblem,
    x1: &[f64],
    eps: f64,
    max_iter: usize,
) -> Result<KelleyResult> {
    let n = prob.dim();
    if x1.len() != n {
        return Err(Error::Dimension(format!(
            "start has length {}, box has {n}",
            x1.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps = {eps} must be positive")));
    }
    if x1
        .iter()
        .zip(prob.lower.iter().zip(&prob.upper))
        .any(|(x, (l, u))| x < l || x > u)
    {
        return Err(Error::InvalidInput(
            "start point lies outside the box".into(),
        ));
    }
    let mut program = LinearProgram::new(n + 1);
    program.objective[n] = 1.0;
    program.lower[..n].copy_from_slice(&prob.lower);
    program.upper[..n].copy_from_slice(&prob.upper);
    program.lower[n] = f64::NEG_INFINITY;

    let mut iterates = vec![x1.to_vec()];
    let (f1, mut g) = prob.eval(x1);
    let mut f_last = f1;
    let mut ub = f1;
    let mut x_best = x1.to_vec();
    let mut lb = f64::NEG_INFINITY;
    let mut records = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=max_iter {
        let xk = iterates.last().expect("nonempty").clone();
        // g^T x - theta <= g^T x_k - f(x_k)
        let mut row = g.clone();
        row.push(-1.0);
        program.add_constraint(row, Sense::Le, dot(&g, &xk) - f_last);
        let sol = lp::solve(&program, 1e-10);
        if sol.status != LpStatus::Optimal {
            return Err(Error::InvalidInput(format!(
                "model minimization ended with {:?}",
                sol.status
            )));
        }
        let next = sol.x[..n].to_vec();
        lb = sol.value;
        let (f_next, g_next) = prob.eval(&next);
        if f_next < ub {
            ub = f_next;
            x_best = next.clone();
        }
        records.push(KelleyRecord {
            k,
            x: next.clone(),
            f: f_next,
            lb,
            ub,
        });
        iterates.push(next);
        f_last = f_next;
        g = g_next;
        iterations = k;
        if ub - lb <= eps {
            converged = true;
            break;
        }
    }
    Ok(KelleyResult {
        x_best,
        ub,
        lb,
        iterates,
        records,
        iterations,
        converged,
    })
}

/// Smallest pairwise l-infinity distance.
pub fn min_pairwise_distance(iterates: &[Vec<f64>]) -> Result<f64> {
    if iterates.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 iterates".into()));
    }
    let mut best = f64::INFINITY;
    for (i, a) in iterates.iter().enumerate() {
        for b in &iterates[i + 1..] {
            best = best.min(linf(a, b));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn abs_converges_in_three_iterations() {
        let prob = builtin("linf", 1).unwrap();
        let res = kelley_solve(&prob, &[1.0], 1e-9, 50).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 3);
        assert_abs_diff_eq!(res.ub, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(res.lb, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(res.x_best[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_stops_after_one_iteration() {
        let prob = builtin("constant", 2).unwrap();
        let res = kelley_solve(&prob, &[0.5, 0.5], 1e-6, 10).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.ub - res.lb, 0.0);
    }

    #[test]
    fn kink_matches_grid_minimum() {
        let prob = builtin("kink", 1).unwrap();
        let eps = 1e-6;
        let res = kelley_solve(&prob, &[0.7], eps, 100).unwrap();
        let grid_min = (0..=2000)
            .map(|i| prob.eval(&[-1.0 + i as f64 / 1000.0]).0)
            .fold(f64::INFINITY, f64::min);
        assert!(res.converged);
        assert!(res.ub - grid_min <= eps);
        assert!(res.lb <= grid_min + 1e-12);
    }

    #[test]
    fn pairwise_distance_examples() {
        assert_eq!(min_pairwise_distance(&[vec![0.0], vec![1.0]]).unwrap(), 1.0);
        assert_eq!(
            min_pairwise_distance(&[vec![0.2], vec![0.2], vec![0.9]]).unwrap(),
            0.0
        );
        assert!(min_pairwise_distance(&[vec![0.0]]).is_err());
    }

    #[test]
    fn separation_and_bounds_hold_on_every_builtin() {
        for name in BUILTINS {
            for n in [1, 2] {
                let prob = builtin(name, n).unwrap();
                prob.check_lipschitz(200, 1).unwrap();
                for eps in [0.1, 0.01] {
                    let res = kelley_solve(&prob, &vec![1.0; n], eps, 5000).unwrap();
                    assert!(res.converged, "{name} n={n}");
                    assert!(res.iterations as f64 <= prob.iteration_bound(eps));
                    let pre = res.pre_termination_iterates();
                    if pre.len() >= 2 && prob.lipschitz > 0.0 {
                        assert!(min_pairwise_distance(pre).unwrap() > eps / prob.lipschitz);
                    }
                    for w in res.records.windows(2) {
                        assert!(w[1].lb >= w[0].lb - 1e-12 && w[1].ub <= w[0].ub);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_has_one_row_per_iteration() {
        let prob = builtin("shifted-linf", 2).unwrap();
        let res = kelley_solve(&prob, &[1.0, 1.0], 0.1, 100).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,x1,x2,f,lb,ub\n"));
        assert_eq!(text.lines().count(), res.iterations + 1);
    }

    #[test]
    fn rejects_bad_start() {
        let prob = builtin("linf", 1).unwrap();
        assert!(kelley_solve(&prob, &[2.0], 0.1, 10).is_err());
        assert!(kelley_solve(&prob, &[0.0], 0.0, 10).is_err());
        assert!(builtin("nope", 1).is_err());
    }
}
