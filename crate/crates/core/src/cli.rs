//! Command-line front end shared by the `msddp` binary and the test suite.
//!
//! [`run`] parses arguments, dispatches one subcommand and returns the
//! process exit code:
//!
//! * `0` terminated by its stopping rule (or a requested budget run)
//! * `1` the acceptance suite reported a failing criterion
//! * `2` iteration budget exhausted
//! * `3` infeasible or unbounded instance
//! * `4` bad input

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::ddp::ddp_solve;
use crate::eddp::eddp_solve;
use crate::error::{Error, Result};
use crate::generate::{generate_instance, Family, GeneratorSpec};
use crate::kelley::{builtin, kelley_solve, BUILTINS};
use crate::model::{cost_lipschitz_bound, Instance, SolveConfig, ToleranceSchedule};
use crate::oracle::{exact_value_grid, extensive_form_value};
use crate::sddp::{sddp_solve, SddpOptions, StopMode};
use crate::suite::{run_suite, Level, SuiteConfig};
use crate::telemetry::{write_csv, write_json, IterationRecord, RunStatus, SolverState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SUITE_FAILED: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_BAD_INPUT: i32 = 4;
const EXIT_SOLVER: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "msddp",
    version,
    about = "Cutting-plane solvers for multi-stage stochastic LPs"
)]
pub struct Cli {
    /// Worker threads for parallel stage solves (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kelley's method on a built-in test function over [-1, 1]^n.
    Kelley(KelleyArgs),
    /// Dual dynamic programming on a single-scenario instance.
    Ddp(SolveArgs),
    /// Explorative DDP with saturated-set bookkeeping.
    Eddp(SolveArgs),
    /// Stochastic DDP with sampled forward passes.
    Sddp(SddpArgs),
    /// Ground-truth values from the deterministic equivalent.
    Oracle(OracleArgs),
    /// Writes a generated instance as JSON.
    Gen(GenArgs),
    /// Runs the acceptance battery and writes a JSON report.
    Suite(SuiteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,

    /// Keep measured wall times in the output.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct KelleyArgs {
    /// One of linf, shifted-linf, kink, l1, constant.
    #[arg(long, default_value = "linf")]
    pub function: String,

    #[arg(long, default_value_t = 1)]
    pub n: usize,

    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,

    /// Comma-separated start point (default: the lower corner).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,

    #[arg(long = "max-iter", default_value_t = 100_000)]
    pub max_iter: usize,

    /// Accepted for uniformity; the method is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,

    /// Distinguishability radius used at every stage.
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,

    /// Uniform Lipschitz bound for every stage (default: from the costs).
    #[arg(long)]
    pub lipschitz: Option<f64>,

    #[arg(long = "max-iter", default_value_t = 1000)]
    pub max_iter: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SddpArgs {
    #[command(flatten)]
    pub solve: SolveArgs,

    /// Forward paths per iteration.
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,

    /// Track saturated sets on replica 0.
    #[arg(long)]
    pub audit: bool,

    #[arg(long, value_enum, default_value = "statistical")]
    pub stop: StopArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StopArg {
    Distance,
    Statistical,
    Budget,
}

impl From<StopArg> for StopMode {
    fn from(s: StopArg) -> Self {
        match s {
            StopArg::Distance => StopMode::Distance,
            StopArg::Statistical => StopMode::Statistical,
            StopArg::Budget => StopMode::Budget,
        }
    }
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,

    /// Lipschitz bound for the grid error estimate (default: from the costs).
    #[arg(long)]
    pub lipschitz: Option<f64>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub query: OracleQuery,
}

#[derive(Debug, Subcommand)]
pub enum OracleQuery {
    /// Optimal value and first-stage decision.
    Extensive,
    /// Values of `V_t` on a uniform grid over the stage `t-1` box.
    Grid {
        #[arg(long)]
        stage: usize,
        #[arg(long, default_value_t = 8)]
        res: usize,
    },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Full generator spec as JSON; overrides the other flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    #[arg(long, default_value = "inventory")]
    pub family: String,

    #[arg(long = "stages", short = 'T', default_value_t = 3)]
    pub num_stages: usize,

    /// Comma-separated realization counts, one per stage.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,

    /// State dimension (default: 2 for hydro-toy, 1 otherwise).
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long, default_value_t = 0.9)]
    pub lambda: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long, value_enum, default_value = "smoke")]
    pub level: Level,

    /// Offset added to every generator and selection seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Keep measured runtimes in the report.
    #[arg(long)]
    pub timing: bool,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_BAD_INPUT
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let mut buffer = Vec::new();
    let outcome = match cli.threads {
        Some(0) => Err(Error::InvalidInput("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli.command, &mut buffer))),
        None => dispatch(&cli.command, &mut buffer),
    };
    if let Err(e) = stdout.write_all(&buffer).and_then(|_| stdout.flush()) {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_BAD_INPUT;
    }
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::RecourseViolation { .. } | Error::Unbounded { .. } | Error::InvalidInstance(_) => {
            EXIT_INFEASIBLE
        }
        Error::PivotLimit { .. } => EXIT_SOLVER,
        Error::Dimension(_)
        | Error::InvalidInput(_)
        | Error::SizeGuard(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_BAD_INPUT,
    }
}

fn dispatch(command: &Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Kelley(a) => kelley(a, stdout),
        Command::Ddp(a) => {
            let (inst, config) = load(a)?;
            let (state, status) = ddp_solve(&inst, &config)?;
            emit_run(state, status, &a.output, stdout)
        }
        Command::Eddp(a) => {
            let (inst, config) = load(a)?;
            let (state, status) = eddp_solve(&inst, &config)?;
            emit_run(state, status, &a.output, stdout)
        }
        Command::Sddp(a) => {
            let (inst, config) = load(&a.solve)?;
            let config = config.with_replicas(a.replicas);
            let options = SddpOptions {
                stop: a.stop.into(),
                audit: a.audit,
                ..SddpOptions::default()
            };
            let (state, status) = sddp_solve(&inst, &config, &options)?;
            let code = emit_run(state, status, &a.solve.output, stdout)?;
            Ok(if options.stop == StopMode::Budget {
                EXIT_OK
            } else {
                code
            })
        }
        Command::Oracle(a) => oracle(a, stdout),
        Command::Gen(a) => gen(a, stdout),
        Command::Suite(a) => {
            let report = run_suite(&SuiteConfig {
                level: a.level,
                seed: a.seed,
            });
            let report = if a.timing {
                report
            } else {
                report.without_timing()
            };
            let passed = report.passed;
            with_output(a.out.as_deref(), stdout, |w| json_to(w, &report))?;
            Ok(if passed { EXIT_OK } else { EXIT_SUITE_FAILED })
        }
    }
}

fn kelley(a: &KelleyArgs, stdout: &mut dyn Write) -> Result<i32> {
    if !BUILTINS.contains(&a.function.as_str()) {
        return Err(Error::InvalidInput(format!(
            "unknown test function `{}`; expected one of {BUILTINS:?}",
            a.function
        )));
    }
    let prob = builtin(&a.function, a.n)?;
    let start = a.start.clone().unwrap_or_else(|| prob.lower.clone());
    let result = kelley_solve(&prob, &start, a.eps, a.max_iter)?;
    with_output(a.output.out.as_deref(), stdout, |w| match a.output.format {
        Format::Csv => result.write_csv(w),
        Format::Json => json_to(w, &result),
    })?;
    Ok(if result.converged {
        EXIT_OK
    } else {
        EXIT_BUDGET
    })
}

fn load(a: &SolveArgs) -> Result<(Instance, SolveConfig)> {
    let inst = Instance::load(&a.instance)?;
    inst.check()?;
    if !(a.delta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "--delta {} must be positive",
            a.delta
        )));
    }
    let schedule = match a.lipschitz {
        Some(m) => ToleranceSchedule::uniform(inst.num_stages, a.delta, m, inst.lambda)?,
        None => ToleranceSchedule::from_cost_bound(&inst, a.delta)?,
    };
    let config = SolveConfig::new(schedule)
        .with_max_iterations(a.max_iter)
        .with_seed(a.seed);
    Ok((inst, config))
}

fn emit_run(
    state: SolverState,
    status: RunStatus,
    output: &OutputArgs,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let mut records: Vec<IterationRecord> = state.history;
    if !output.timing {
        for r in &mut records {
            r.wall_ms = 0.0;
        }
    }
    with_output(output.out.as_deref(), stdout, |w| match output.format {
        Format::Csv => write_csv(&records, w),
        Format::Json => write_json(&records, w),
    })?;
    Ok(match status {
        RunStatus::Converged => EXIT_OK,
        RunStatus::BudgetExhausted => EXIT_BUDGET,
    })
}

#[derive(Serialize)]
struct GridReport {
    stage: usize,
    resolution: usize,
    nodes: Vec<Vec<f64>>,
    values: Vec<f64>,
    node_error: f64,
    interpolation_error: f64,
}

fn oracle(a: &OracleArgs, stdout: &mut dyn Write) -> Result<i32> {
    let inst = Instance::load(&a.instance)?;
    inst.check()?;
    let tol = 1e-9;
    match &a.query {
        OracleQuery::Extensive => {
            let sol = extensive_form_value(&inst, tol)?;
            with_output(a.out.as_deref(), stdout, |w| json_to(w, &sol))?;
        }
        OracleQuery::Grid { stage, res } => {
            let lip = match a.lipschitz {
                Some(m) => vec![m; inst.num_stages],
                None => cost_lipschitz_bound(&inst),
            };
            let grid = exact_value_grid(&inst, *stage, *res, &lip, tol)?;
            let report = GridReport {
                stage: grid.stage,
                resolution: grid.resolution,
                nodes: grid.nodes(),
                values: grid.values.clone(),
                node_error: grid.node_error,
                interpolation_error: grid.interpolation_error,
            };
            with_output(a.out.as_deref(), stdout, |w| json_to(w, &report))?;
        }
    }
    Ok(EXIT_OK)
}

fn gen(a: &GenArgs, stdout: &mut dyn Write) -> Result<i32> {
    let spec = match &a.spec {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let family: Family = a.family.parse()?;
            let counts = a.counts.clone().unwrap_or_else(|| vec![1; a.num_stages]);
            let n =
                a.n.unwrap_or(if family == Family::HydroToy { 2 } else { 1 });
            GeneratorSpec::new(family, a.num_stages, counts, n, a.seed).with_lambda(a.lambda)
        }
    };
    let inst = generate_instance(&spec)?;
    let text = inst.to_json_string()?;
    with_output(a.out.as_deref(), stdout, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(EXIT_OK)
}

fn json_to<T: Serialize>(w: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn with_output(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            body(stdout)?;
            stdout.flush()?;
        }
    }
    Ok(())
}
