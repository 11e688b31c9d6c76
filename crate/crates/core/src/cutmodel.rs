//! Piecewise-linear lower models of the stage value functions.
//!
//! A [`CutPool`] for stage `t` represents
//! `max(floor, max_j intercept_j + gradient_j^T (x - anchor_j))`, an
//! under-estimate of `V_t` as a function of the incoming state `x_{t-1}`.
//! Pools are append-only and every cut records the iteration that produced
//! it, so the model of any earlier iteration is the prefix of cuts born
//! at or before it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub anchor: Vec<f64>,
    pub intercept: f64,
    pub gradient: Vec<f64>,
    pub born: usize,
}

impl Cut {
    pub fn new(anchor: Vec<f64>, intercept: f64, gradient: Vec<f64>, born: usize) -> Self {
        Self {
            anchor,
            intercept,
            gradient,
            born,
        }
    }

    /// Affine value at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .gradient
                .iter()
                .zip(x.iter().zip(&self.anchor))
                .map(|(g, (xi, ai))| g * (xi - ai))
                .sum::<f64>()
    }

    /// `intercept - gradient^T anchor`, the value at the origin.
    pub fn offset(&self) -> f64 {
        self.intercept
            - self
                .gradient
                .iter()
                .zip(&self.anchor)
                .map(|(g, a)| g * a)
                .sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite()
            && self.gradient.iter().all(|v| v.is_finite())
            && self.anchor.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutPool {
    pub stage: usize,
    pub floor: f64,
    pub cuts: Vec<Cut>,
    #[serde(skip)]
    dim: Option<usize>,
}

impl CutPool {
    pub fn new(stage: usize, dim: usize, floor: f64) -> Self {
        Self {
            stage,
            floor,
            cuts: Vec::new(),
            dim: Some(dim),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
            .or_else(|| self.cuts.first().map(|c| c.gradient.len()))
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != len => Err(Error::Dimension(format!(
                "stage {} pool has dimension {d}, got a vector of length {len}",
                self.stage
            ))),
            _ => Ok(()),
        }
    }

    /// Model value at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.eval_unchecked(x, usize::MAX))
    }

    /// Model value at `x` using only cuts born at or before `version`.
    pub fn eval_at_version(&self, x: &[f64], version: usize) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.eval_unchecked(x, version))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], version: usize) -> f64 {
        self.cuts
            .iter()
            .filter(|c| c.born <= version)
            .map(|c| c.eval(x))
            .fold(self.floor, f64::max)
    }

    /// Appends `cut` in place.
    pub fn push(&mut self, cut: Cut) -> Result<()> {
        self.check_dim(cut.gradient.len())?;
        self.check_dim(cut.anchor.len())?;
        if !cut.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite cut for stage {}",
                self.stage
            )));
        }
        if self.dim.is_none() {
            self.dim = Some(cut.gradient.len());
        }
        self.cuts.push(cut);
        Ok(())
    }

    /// A new pool version with `cut` added; `self` is left untouched.
    pub fn add_cut(&self, cut: Cut) -> Result<CutPool> {
        let mut next = self.clone();
        next.push(cut)?;
        Ok(next)
    }

    /// Snapshot holding only the cuts born at or before `version`.
    pub fn version(&self, version: usize) -> CutPool {
        CutPool {
            stage: self.stage,
            floor: self.floor,
            cuts: self
                .cuts
                .iter()
                .filter(|c| c.born <= version)
                .cloned()
                .collect(),
            dim: self.dim(),
        }
    }

    /// Largest l1 norm of any cut gradient: the empirical model Lipschitz
    /// constant in the l-infinity state norm.
    pub fn max_gradient_l1(&self) -> f64 {
        self.cuts
            .iter()
            .map(|c| c.gradient.iter().map(|g| g.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let mut pool: CutPool = serde_json::from_str(s)?;
        pool.dim = pool.cuts.first().map(|c| c.gradient.len());
        if let Some(d) = pool.dim {
            if pool
                .cuts
                .iter()
                .any(|c| c.gradient.len() != d || c.anchor.len() != d)
            {
                return Err(Error::Dimension("cuts of mixed dimension".into()));
            }
        }
        Ok(pool)
    }
}

/// Aggregate cut with the mean value and mean gradient of `cuts`, all of
/// which must share one anchor.
pub fn average_cuts(cuts: &[Cut], born: usize) -> Result<Cut> {
    let first = cuts
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot average zero cuts".into()))?;
    let d = first.gradient.len();
    if cuts
        .iter()
        .any(|c| c.gradient.len() != d || c.anchor != first.anchor)
    {
        return Err(Error::Dimension(
            "averaged cuts must share an anchor".into(),
        ));
    }
    let w = 1.0 / cuts.len() as f64;
    let mut gradient = vec![0.0; d];
    let mut intercept = 0.0;
    for c in cuts {
        intercept += c.intercept;
        for (g, s) in gradient.iter_mut().zip(&c.gradient) {
            *g += s;
        }
    }
    gradient.iter_mut().for_each(|g| *g *= w);
    Ok(Cut::new(
        first.anchor.clone(),
        intercept * w,
        gradient,
        born,
    ))
}

/// Writes all pools of a run as one JSON array for checkpointing.
pub fn save_pools(pools: &[CutPool], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(pools)? + "\n")?;
    Ok(())
}

pub fn load_pools(path: impl AsRef<Path>) -> Result<Vec<CutPool>> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    raw.into_iter()
        .map(|v| CutPool::from_json_str(&v.to_string()))
        .collect()
}

/// Valid constant lower bound on `V_t` (stage `t >= 2`).
///
/// `sum_{tau=t}^T lambda^{tau-t} min_i min_{x in box_tau} c_{tau i}^T x`.
/// Every term is a minimum over a superset of the true feasible set, so
/// the bound holds for every incoming state.
pub fn initial_floor(inst: &Instance, t: usize) -> Result<f64> {
    if t < 1 || t > inst.num_stages {
        return Err(Error::InvalidInput(format!(
            "stage {t} is outside 1..={}",
            inst.num_stages
        )));
    }
    let mut total = 0.0;
    let mut weight = 1.0;
    for tau in t..=inst.num_stages {
        let shape = inst.shape(tau);
        if shape
            .lower
            .iter()
            .chain(&shape.upper)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "stage {tau} box is unbounded; no finite floor exists"
            )));
        }
        let worst = inst
            .realizations(tau)
            .iter()
            .map(|r| {
                r.c.iter()
                    .zip(shape.lower.iter().zip(&shape.upper))
                    .map(|(c, (l, u))| (c * l).min(c * u))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        total += weight * worst;
        weight *= inst.lambda;
    }
    Ok(total)
}

/// Empty pools for stages `2..=T` with their analytic floors.
pub fn initial_pools(inst: &Instance) -> Result<Vec<CutPool>> {
    (2..=inst.num_stages)
        .map(|t| {
            Ok(CutPool::new(
                t,
                inst.state_dim_into(t),
                initial_floor(inst, t)?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Realization, StageShape};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn average_of_two_cuts() {
        let a = Cut::new(vec![0.5], 1.0, vec![1.0], 3);
        let b = Cut::new(vec![0.5], 3.0, vec![3.0], 3);
        let avg = average_cuts(&[a.clone(), b], 3).unwrap();
        assert_abs_diff_eq!(avg.intercept, 2.0);
        assert_abs_diff_eq!(avg.gradient[0], 2.0);
        assert_eq!(average_cuts(std::slice::from_ref(&a), 3).unwrap(), a);
        assert!(average_cuts(&[], 1).is_err());
    }

    #[test]
    fn empty_pool_is_floor() {
        let pool = CutPool::new(2, 1, 0.0);
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(pool.eval(&[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_cut_evaluation() {
        let mut pool = CutPool::new(2, 1, 0.0);
        pool.push(Cut::new(vec![0.5], 1.0, vec![2.0], 1)).unwrap();
        assert_abs_diff_eq!(pool.eval(&[1.0]).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn two_cuts_make_abs() {
        let mut pool = CutPool::new(2, 1, -10.0);
        pool.push(Cut::new(vec![1.0], 1.0, vec![1.0], 1)).unwrap();
        pool.push(Cut::new(vec![-1.0], 1.0, vec![-1.0], 1)).unwrap();
        assert_abs_diff_eq!(pool.eval(&[0.0]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pool.eval(&[-0.5]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let pool = CutPool::new(2, 2, 0.0);
        assert!(pool.eval(&[1.0]).is_err());
        assert!(pool
            .add_cut(Cut::new(vec![0.0], 0.0, vec![1.0], 1))
            .is_err());
    }

    #[test]
    fn dominated_cut_changes_nothing() {
        let pool = CutPool::new(2, 1, 0.0);
        let next = pool
            .add_cut(Cut::new(vec![0.0], -5.0, vec![0.5], 1))
            .unwrap();
        for i in 0..100 {
            let x = -1.0 + 2.0 * i as f64 / 99.0;
            assert_eq!(pool.eval(&[x]).unwrap(), next.eval(&[x]).unwrap());
        }
        assert!(pool.is_empty(), "old version untouched");
    }

    #[test]
    fn anchor_tightness() {
        let pool = CutPool::new(2, 2, 0.0);
        let next = pool
            .add_cut(Cut::new(vec![0.3, -0.2], 4.0, vec![1.0, -2.0], 1))
            .unwrap();
        assert_abs_diff_eq!(next.eval(&[0.3, -0.2]).unwrap(), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn versions_are_prefixes() {
        let mut pool = CutPool::new(3, 1, 0.0);
        pool.push(Cut::new(vec![0.0], 1.0, vec![1.0], 1)).unwrap();
        pool.push(Cut::new(vec![1.0], 3.0, vec![0.0], 2)).unwrap();
        assert_eq!(pool.version(1).len(), 1);
        assert_abs_diff_eq!(pool.eval_at_version(&[1.0], 1).unwrap(), 2.0);
        assert_abs_diff_eq!(pool.eval_at_version(&[1.0], 2).unwrap(), 3.0);
        assert_eq!(pool.eval_at_version(&[1.0], 0).unwrap(), 0.0);
    }

    #[test]
    fn json_round_trip() {
        let mut pool = CutPool::new(2, 2, -1.5);
        pool.push(Cut::new(vec![0.5, 0.1], 1.0, vec![2.0, -1.0], 3))
            .unwrap();
        let s = pool.to_json_string().unwrap();
        let raw: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["stage", "floor", "cuts"] {
            assert!(raw.get(key).is_some());
        }
        for key in ["anchor", "intercept", "gradient", "born"] {
            assert!(raw["cuts"][0].get(key).is_some());
        }
        let back = CutPool::from_json_str(&s).unwrap();
        assert_eq!(back.cuts, pool.cuts);
        assert_eq!(back.dim(), Some(2));
    }

    fn floor_instance(lambda: f64) -> Instance {
        let s = StageShape::new(vec![-1.0], vec![2.0], 0, 0);
        Instance {
            num_stages: 2,
            lambda,
            stages: vec![s.clone(), s],
            scenarios: vec![
                vec![Realization::cost_only(vec![1.0])],
                vec![
                    Realization::cost_only(vec![3.0]),
                    Realization::cost_only(vec![-1.0]),
                ],
            ],
        }
    }

    #[test]
    fn floor_last_stage_is_box_minimum() {
        // min over box [-1,2] of 3x is -3, of -x is -2 -> -3
        let inst = floor_instance(1.0);
        assert_abs_diff_eq!(initial_floor(&inst, 2).unwrap(), -3.0);
    }

    #[test]
    fn floor_discounted_tail() {
        // stage 1 term: min of x over [-1,2] = -1; stage 2 term: -3 * 0.5
        let inst = floor_instance(0.5);
        assert_abs_diff_eq!(initial_floor(&inst, 1).unwrap(), -1.0 - 1.5);
    }

    #[test]
    fn floor_nonnegative_costs() {
        let mut inst = floor_instance(1.0);
        for s in &mut inst.stages {
            s.lower = vec![0.0];
        }
        for list in &mut inst.scenarios {
            for r in list {
                r.c = vec![r.c[0].abs()];
            }
        }
        assert_eq!(initial_floor(&inst, 2).unwrap(), 0.0);
    }

    #[test]
    fn floor_rejects_unbounded_box() {
        let mut inst = floor_instance(1.0);
        inst.stages[1].upper = vec![f64::INFINITY];
        assert!(initial_floor(&inst, 2).is_err());
    }

    proptest! {
        #[test]
        fn adding_cuts_is_monotone_and_convex(
            cuts in prop::collection::vec((-1.0f64..1.0, -2.0f64..2.0, -3.0f64..3.0), 1..12),
            probes in prop::collection::vec(-2.0f64..2.0, 20),
        ) {
            let mut pool = CutPool::new(2, 1, -5.0);
            let mut prev: Vec<f64> = probes.iter().map(|x| pool.eval(&[*x]).unwrap()).collect();
            for (k, (a, v, g)) in cuts.iter().enumerate() {
                let cut = Cut::new(vec![*a], *v, vec![*g], k + 1);
                let next = pool.add_cut(cut.clone()).unwrap();
                for (i, x) in probes.iter().enumerate() {
                    let now = next.eval(&[*x]).unwrap();
                    prop_assert!(now >= prev[i]);
                    prop_assert_eq!(now, prev[i].max(cut.eval(&[*x])));
                    prev[i] = now;
                }
                pool = next;
            }
            for w in probes.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let lhs = pool.eval(&[mid]).unwrap();
                let rhs = 0.5 * (pool.eval(&[w[0]]).unwrap() + pool.eval(&[w[1]]).unwrap());
                prop_assert!(lhs <= rhs + 1e-12);
            }
        }
    }
}
