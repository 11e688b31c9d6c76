//! Seeded instance families with recourse certified by construction.
//!
//! * `inventory`: `x_t in [0,1]^n`, movement limits
//!   `-d <= x_t - x_{t-1} <= u` with random `u, d > 0`, random costs.
//!   Staying put is always feasible.
//! * `hydro-toy`: `x_t = (storage, release)` with the balance
//!   `s_t + r_t = s_{t-1} + inflow`, storage capped, release priced.
//!   Spilling through the release keeps every state feasible.
//! * `random-lp`: dense random `G x_t <= Q x_{t-1} + q` whose right-hand
//!   side is shifted until the box center is feasible for every incoming
//!   state in the previous box.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_saa, Instance, Realization, ScenarioSampler, StageShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Inventory,
    HydroToy,
    RandomLp,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inventory" => Ok(Family::Inventory),
            "hydro-toy" => Ok(Family::HydroToy),
            "random-lp" => Ok(Family::RandomLp),
            other => Err(Error::InvalidInput(format!("unknown family `{other}`"))),
        }
    }
}

/// Parameter ranges shared by the families; each family reads the ones it
/// needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub cost_range: (f64, f64),
    /// Movement limits `u, d` for `inventory`.
    pub move_range: (f64, f64),
    /// Box side for `inventory` and `random-lp`.
    pub box_width: f64,
    /// Storage capacity for `hydro-toy`.
    pub capacity: f64,
    pub inflow_range: (f64, f64),
    pub price_range: (f64, f64),
    /// Inequality rows per stage for `random-lp`.
    pub rows: usize,
    /// Slack added to certified right-hand sides for `random-lp`.
    pub slack: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            cost_range: (-1.0, 1.0),
            move_range: (0.2, 0.5),
            box_width: 1.0,
            capacity: 1.0,
            inflow_range: (0.0, 0.5),
            price_range: (0.5, 1.5),
            rows: 2,
            slack: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    #[serde(rename = "T")]
    pub num_stages: usize,
    pub counts: Vec<usize>,
    pub n: usize,
    pub seed: u64,
    pub lambda: f64,
    #[serde(default)]
    pub params: GeneratorParams,
}

impl GeneratorSpec {
    pub fn new(family: Family, num_stages: usize, counts: Vec<usize>, n: usize, seed: u64) -> Self {
        Self {
            family,
            num_stages,
            counts,
            n,
            seed,
            lambda: 0.9,
            params: GeneratorParams::default(),
        }
    }

    pub fn inventory(num_stages: usize, counts: Vec<usize>, n: usize, seed: u64) -> Self {
        Self::new(Family::Inventory, num_stages, counts, n, seed)
    }

    /// Always two-dimensional: `(storage, release)`.
    pub fn hydro_toy(num_stages: usize, counts: Vec<usize>, seed: u64) -> Self {
        Self::new(Family::HydroToy, num_stages, counts, 2, seed)
    }

    pub fn random_lp(num_stages: usize, counts: Vec<usize>, n: usize, seed: u64) -> Self {
        Self::new(Family::RandomLp, num_stages, counts, n, seed)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Every reason the spec cannot produce a certified instance.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = &self.params;
        if self.num_stages < 2 {
            out.push(format!(
                "T = {} but at least 2 stages are needed",
                self.num_stages
            ));
        }
        if self.counts.len() != self.num_stages {
            out.push(format!(
                "{} scenario counts for T = {}",
                self.counts.len(),
                self.num_stages
            ));
        }
        if self.counts.first().is_some_and(|&c| c != 1) {
            out.push("the first stage must have exactly one realization".into());
        }
        if self.counts.contains(&0) {
            out.push("every stage needs at least one realization".into());
        }
        if self.n == 0 {
            out.push("n must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            out.push(format!("lambda = {} is outside (0, 1]", self.lambda));
        }
        let range = |out: &mut Vec<String>, name: &str, (lo, hi): (f64, f64), min: f64| {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
                out.push(format!(
                    "{name} = ({lo}, {hi}) must be finite, ordered and >= {min}"
                ));
            }
        };
        range(&mut out, "cost_range", p.cost_range, f64::NEG_INFINITY);
        match self.family {
            Family::Inventory => {
                range(&mut out, "move_range", p.move_range, 0.0);
                if !(p.box_width.is_finite() && p.box_width > 0.0) {
                    out.push(format!(
                        "box_width = {} gives a degenerate box",
                        p.box_width
                    ));
                }
            }
            Family::HydroToy => {
                if self.n != 2 {
                    out.push(format!(
                        "hydro-toy states are 2-dimensional, got n = {}",
                        self.n
                    ));
                }
                range(&mut out, "inflow_range", p.inflow_range, 0.0);
                range(&mut out, "price_range", p.price_range, f64::NEG_INFINITY);
                if !(p.capacity.is_finite() && p.capacity > 0.0) {
                    out.push(format!("capacity = {} must be positive", p.capacity));
                }
            }
            Family::RandomLp => {
                if !(p.box_width.is_finite() && p.box_width > 0.0) {
                    out.push(format!(
                        "box_width = {}: zero-width boxes cannot certify recourse",
                        p.box_width
                    ));
                }
                if !(p.slack.is_finite() && p.slack >= 0.0) {
                    out.push(format!("slack = {} must be nonnegative", p.slack));
                }
            }
        }
        out
    }
}

fn uniform(rng: &mut dyn RngCore, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn identity_stack(n: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(2 * n);
    for sign in [1.0, -1.0] {
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = sign;
            rows.push(row);
        }
    }
    rows
}

struct Sampler<'a> {
    spec: &'a GeneratorSpec,
}

impl Sampler<'_> {
    fn inventory(&self, t: usize, rng: &mut dyn RngCore) -> Realization {
        let n = self.spec.n;
        let p = &self.spec.params;
        let c = (0..n).map(|_| uniform(rng, p.cost_range)).collect();
        if t == 1 {
            return Realization::cost_only(c);
        }
        let up: Vec<f64> = (0..n).map(|_| uniform(rng, p.move_range)).collect();
        let down: Vec<f64> = (0..n).map(|_| uniform(rng, p.move_range)).collect();
        Realization {
            A: vec![],
            B: vec![],
            b: vec![],
            c,
            G: identity_stack(n),
            Q: identity_stack(n),
            q: up.into_iter().chain(down).collect(),
        }
    }

    fn hydro(&self, t: usize, rng: &mut dyn RngCore) -> Realization {
        let p = &self.spec.params;
        let inflow = uniform(rng, p.inflow_range);
        let price = uniform(rng, p.price_range);
        Realization {
            A: vec![vec![1.0, 1.0]],
            // the first stage starts from half-full storage
            B: if t == 1 { vec![] } else { vec![vec![1.0, 0.0]] },
            b: vec![if t == 1 {
                0.5 * p.capacity + inflow
            } else {
                inflow
            }],
            c: vec![0.0, -price],
            G: vec![],
            Q: vec![],
            q: vec![],
        }
    }

    fn random_lp(&self, t: usize, rng: &mut dyn RngCore) -> Realization {
        let n = self.spec.n;
        let p = &self.spec.params;
        let w = p.box_width;
        let center = vec![0.5 * w; n];
        let c = (0..n).map(|_| uniform(rng, p.cost_range)).collect();
        let g: Vec<Vec<f64>> = (0..p.rows)
            .map(|_| (0..n).map(|_| uniform(rng, (-1.0, 1.0))).collect())
            .collect();
        let qm: Vec<Vec<f64>> = if t == 1 {
            vec![vec![]; p.rows]
        } else {
            (0..p.rows)
                .map(|_| (0..n).map(|_| uniform(rng, (-1.0, 1.0))).collect())
                .collect()
        };
        // q_r = G_r x0 - min_{chi in box} Q_r chi + slack
        let q = g
            .iter()
            .zip(&qm)
            .map(|(gr, qr)| {
                let gx: f64 = gr.iter().zip(&center).map(|(a, x)| a * x).sum();
                let qmin: f64 = qr.iter().map(|a| (a * w).min(0.0)).sum();
                gx - qmin + p.slack
            })
            .collect();
        Realization {
            A: vec![],
            B: vec![],
            b: vec![],
            c,
            G: g,
            Q: if t == 1 { vec![] } else { qm },
            q,
        }
    }
}

impl ScenarioSampler for Sampler<'_> {
    fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    fn shapes(&self) -> Vec<StageShape> {
        let spec = self.spec;
        let p = &spec.params;
        (1..=spec.num_stages)
            .map(|t| match spec.family {
                Family::Inventory => {
                    let rows = if t == 1 { 0 } else { 2 * spec.n };
                    StageShape::new(vec![0.0; spec.n], vec![p.box_width; spec.n], 0, rows)
                }
                Family::HydroToy => StageShape::new(
                    vec![0.0, 0.0],
                    vec![p.capacity, p.capacity + p.inflow_range.1],
                    1,
                    0,
                ),
                Family::RandomLp => {
                    StageShape::new(vec![0.0; spec.n], vec![p.box_width; spec.n], 0, p.rows)
                }
            })
            .collect()
    }

    fn sample(&self, t: usize, rng: &mut dyn RngCore) -> Realization {
        match self.spec.family {
            Family::Inventory => self.inventory(t, rng),
            Family::HydroToy => self.hydro(t, rng),
            Family::RandomLp => self.random_lp(t, rng),
        }
    }
}

/// Deterministic per seed; fails with every spec problem found.
pub fn generate_instance(spec: &GeneratorSpec) -> Result<Instance> {
    let problems = spec.problems();
    if !problems.is_empty() {
        return Err(Error::InvalidInput(problems.join("; ")));
    }
    build_saa(&Sampler { spec }, &spec.counts, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;
    use crate::oracle::extensive_form_value;

    #[test]
    fn inventory_passes_validation() {
        let inst = generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 2], 1, 1)).unwrap();
        assert!(validate_instance(&inst).is_empty());
        assert_eq!(inst.scenario_counts(), vec![1, 2, 2]);
    }

    #[test]
    fn same_spec_gives_identical_bytes() {
        for spec in [
            GeneratorSpec::inventory(3, vec![1, 2, 2], 2, 9),
            GeneratorSpec::hydro_toy(4, vec![1, 3, 3, 3], 9),
            GeneratorSpec::random_lp(3, vec![1, 2, 2], 2, 9),
        ] {
            let a = generate_instance(&spec).unwrap().to_json_string().unwrap();
            let b = generate_instance(&spec).unwrap().to_json_string().unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn seeds_change_the_draws() {
        let a = generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 2], 1, 1)).unwrap();
        let b = generate_instance(&GeneratorSpec::inventory(3, vec![1, 2, 2], 1, 2)).unwrap();
        assert_ne!(a, b);
        assert_ne!(a.realizations(2)[0], a.realizations(2)[1]);
    }

    #[test]
    fn zero_width_random_lp_is_rejected() {
        let mut spec = GeneratorSpec::random_lp(3, vec![1, 2, 2], 2, 1);
        spec.params.box_width = 0.0;
        let err = generate_instance(&spec).unwrap_err().to_string();
        assert!(err.contains("zero-width"), "{err}");
    }

    #[test]
    fn bad_counts_are_rejected() {
        assert!(generate_instance(&GeneratorSpec::inventory(3, vec![2, 2, 2], 1, 1)).is_err());
        assert!(generate_instance(&GeneratorSpec::inventory(3, vec![1, 2], 1, 1)).is_err());
        assert!(generate_instance(&GeneratorSpec::hydro_toy(3, vec![1, 0, 2], 1)).is_err());
    }

    #[test]
    fn every_family_is_feasible() {
        for seed in 0..5 {
            for spec in [
                GeneratorSpec::inventory(3, vec![1, 2, 2], 2, seed),
                GeneratorSpec::hydro_toy(3, vec![1, 2, 2], seed),
                GeneratorSpec::random_lp(3, vec![1, 2, 2], 2, seed),
            ] {
                let inst = generate_instance(&spec).unwrap();
                extensive_form_value(&inst, 1e-9).unwrap();
            }
        }
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = GeneratorSpec::hydro_toy(3, vec![1, 2, 2], 4);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"hydro-toy\""));
        let back: GeneratorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
