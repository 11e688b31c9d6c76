//! Per-iteration solver telemetry and its CSV/JSON encodings.
//!
//! The CSV schema is fixed (see [`CSV_COLUMNS`]) and carries no wall-clock
//! column, so runs with the same inputs produce identical bytes. Vector
//! fields are `;`-joined inside one column; scenario indices are 1-based.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cutmodel::CutPool;
use crate::eddp::SaturatedSet;
use crate::error::Result;

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 14] = [
    "k",
    "lb",
    "ub",
    "ub_mean",
    "ub_std",
    "gap",
    "g1",
    "q",
    "saturated",
    "admitted",
    "g_bar",
    "indices",
    "path_cost",
    "path",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// First-stage model value `F_1^{k-1}(x_1^k)`.
    pub lb: f64,
    /// Best deterministic path cost so far (single-scenario solvers).
    pub ub: Option<f64>,
    pub ub_mean: Option<f64>,
    pub ub_std: Option<f64>,
    pub gap: Option<f64>,
    /// `g_t^k(x_t^k)` for `t = 1..T-1` along the chosen path.
    #[serde(with = "inf_as_null")]
    pub distances: Vec<f64>,
    /// Average candidate distances per stage (audit mode only, else empty).
    #[serde(with = "inf_as_null")]
    pub g_bar: Vec<f64>,
    /// `|S_t|` for `t = 1..T-1` at the end of the iteration.
    pub saturated: Vec<usize>,
    /// Stages whose saturated set grew this iteration.
    pub admitted: Vec<usize>,
    /// Whether any set grew (`q^k`).
    pub new_saturation: Option<bool>,
    /// 1-based realization index chosen at each stage.
    pub indices: Vec<usize>,
    pub path: Vec<Vec<f64>>,
    pub path_cost: f64,
    /// Whether the backward phase ran (false on the terminating iteration).
    pub backward: bool,
    pub wall_ms: f64,
}

impl IterationRecord {
    pub fn first_stage_distance(&self) -> f64 {
        self.distances.first().copied().unwrap_or(0.0)
    }

    pub fn saturated_total(&self) -> usize {
        self.saturated.iter().sum()
    }

    fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let join_f = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
        let join_u = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        vec![
            self.k.to_string(),
            fmt_f64(self.lb),
            opt(self.ub),
            opt(self.ub_mean),
            opt(self.ub_std),
            opt(self.gap),
            self.distances
                .first()
                .map(|g| fmt_f64(*g))
                .unwrap_or_default(),
            self.new_saturation
                .map(|q| u8::from(q).to_string())
                .unwrap_or_default(),
            join_u(&self.saturated),
            join_u(&self.admitted),
            join_f(&self.g_bar),
            join_u(&self.indices),
            fmt_f64(self.path_cost),
            self.path
                .iter()
                .map(|x| join_f(x))
                .collect::<Vec<_>>()
                .join("|"),
        ]
    }
}

/// Shortest round-trip representation; infinities spelled `inf`/`-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_csv<W: Write>(records: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record(r.csv_fields()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(records: &[IterationRecord], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, records)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::InvalidInput(format!("csv: {e}"))
}

/// JSON has no infinity: the empty-set distance sentinel is written as
/// `null` and read back as `+inf`.
mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|x| x.unwrap_or(f64::INFINITY))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// The solver's stopping rule fired.
    Converged,
    /// `max_iterations` was reached first.
    BudgetExhausted,
}

/// Everything a solve leaves behind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverState {
    /// Pools for stages `2..=T`.
    pub pools: Vec<CutPool>,
    /// Saturated sets for stages `1..T-1`.
    pub sets: Vec<SaturatedSet>,
    pub lb: f64,
    pub ub: Option<f64>,
    pub first_stage: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl SolverState {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn lb_sequence(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.lb).collect()
    }

    /// Largest cut-gradient l1 norm per pool: the empirical `M_under_t`.
    pub fn model_lipschitz(&self) -> Vec<f64> {
        self.pools.iter().map(CutPool::max_gradient_l1).collect()
    }
}
