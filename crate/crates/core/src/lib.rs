//! Cutting-plane solvers for multi-stage stochastic linear programs under
//! stage-wise independence.
//!
//! * [`kelley`]: the static cutting-plane method on a box.
//! * [`ddp`]: dual dynamic programming for single-scenario instances.
//! * [`eddp`]: explorative DDP over sample-average instances.
//! * [`sddp`]: stochastic DDP with statistical upper bounds.
//! * [`oracle`]: deterministic-equivalent and grid ground truth.
//!
//! Every solver keeps an append-only [`CutPool`] per stage as the lower
//! model of the value function and reports one [`IterationRecord`] per
//! iteration.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cutmodel;
pub mod ddp;
pub mod eddp;
mod engine;
pub mod error;
pub mod generate;
pub mod kelley;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod sddp;
pub mod subproblem;
pub mod suite;
pub mod telemetry;

pub use cutmodel::{Cut, CutPool};
pub use engine::{aggregate_cut, mean_std, replay_forward, ForwardPath};
pub use error::{Error, Result};
pub use model::{Instance, Realization, SolveConfig, StageShape, ToleranceSchedule};
pub use telemetry::{IterationRecord, RunStatus, SolverState};
