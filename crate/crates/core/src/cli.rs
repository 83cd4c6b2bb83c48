//! Batch commands behind the `specpolicy` binary.
//!
//! Exit codes: 0 success, 1 I/O failure while writing, 2 malformed input
//! (feature file, document, config, numeric argument), 3 usage or
//! variant/state mismatch, 4 epoch protocol violation.
//!
//! `SPECPOLICY_THREADS` caps the worker threads used for per-file and
//! per-sample parallelism. Outputs do not depend on it.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::beta::{reg_inc_beta, BetaParams};
use crate::feature::SampleSeed;
use crate::formats::{self, ConfigFile, FormatError, PlanDocument, PlanEntry};
use crate::kernels::apply_plan;
use crate::policy::{make_plan, AugmentVariant, PolicyError, PolicyState};
use crate::sim::{run_simulation, SimError, SimulationRun};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;
pub const EXIT_PROTOCOL: i32 = 4;

pub const THREADS_ENV: &str = "SPECPOLICY_THREADS";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    fn parse(path: &Path, err: impl fmt::Display) -> Self {
        CliError::new(EXIT_PARSE, format!("{}: {err}", path.display()))
    }

    fn write(err: FormatError) -> Self {
        CliError::new(EXIT_IO, err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "specpolicy", version, about = "Loss-driven adaptive spectrogram augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Augment feature files and write the realized plan.
    Augment(AugmentArgs),
    /// Write a fresh epoch-0 policy state.
    InitState(InitStateArgs),
    /// Advance a policy state by one epoch of validation losses.
    PolicyStep(PolicyStepArgs),
    /// Run the closed-loop surrogate experiment and write its trace.
    Simulate(SimulateArgs),
    /// Print I_x(a, b) and 1 - I_x(a, b).
    Ibf(IbfArgs),
    /// Convert a headerless CSV (one frame per row) into a feature file.
    ImportCsv { input: PathBuf, output: PathBuf },
    /// Print a feature file as CSV.
    ExportCsv { input: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub variant: AugmentVariant,
    /// Master seed; defaults to the state's seed, else 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Policy state; required by the loss-driven variants.
    #[arg(long)]
    pub state: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InitStateArgs {
    #[arg(long)]
    pub variant: AugmentVariant,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Takes the beta shapes from `[augment.beta]`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyStepArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// JSON loss report: {"epoch": n, "losses": [tw, fm, tm]}.
    #[arg(long)]
    pub report: PathBuf,
    /// Where to write the new state; defaults to replacing `--state`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `simulation.variant`.
    #[arg(long)]
    pub variant: Option<AugmentVariant>,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct IbfArgs {
    #[arg(allow_hyphen_values = true)]
    pub x: String,
    #[arg(allow_hyphen_values = true)]
    pub a: String,
    #[arg(allow_hyphen_values = true)]
    pub b: String,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    match path {
        Some(p) => ConfigFile::read(p).map_err(|e| CliError::parse(p, e)),
        None => Ok(ConfigFile::default()),
    }
}

fn load_state(path: &Path) -> Result<PolicyState, CliError> {
    formats::read_state(path).map_err(|e| CliError::parse(path, e))
}

/// Result of an `augment` run.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub outputs: Vec<PathBuf>,
    pub plan_path: PathBuf,
    pub plan: PlanDocument,
}

pub const PLAN_FILE: &str = "plan.json";

pub fn cmd_augment(args: &AugmentArgs) -> Result<AugmentOutcome, CliError> {
    let config = load_config(args.config.as_deref())?.augment;
    let state = match &args.state {
        Some(p) => {
            let s = load_state(p)?;
            if s.variant != args.variant {
                return Err(CliError::new(
                    EXIT_USAGE,
                    format!("{}: state is for variant {}, requested {}", p.display(), s.variant, args.variant),
                ));
            }
            Some(s)
        }
        None if args.variant.needs_losses() => {
            return Err(CliError::new(EXIT_USAGE, format!("variant {} requires --state", args.variant)));
        }
        None => None,
    };
    let seed = args.seed.or(state.as_ref().map(|s| s.master_seed)).unwrap_or(0);
    let state = state.unwrap_or_else(|| PolicyState::new(args.variant, config.beta, seed));

    let mut names = HashSet::new();
    let mut outputs = Vec::with_capacity(args.inputs.len());
    for input in &args.inputs {
        let name = input
            .file_name()
            .ok_or_else(|| CliError::new(EXIT_USAGE, format!("{}: not a file path", input.display())))?;
        if !names.insert(name.to_owned()) || name == PLAN_FILE {
            return Err(CliError::new(
                EXIT_USAGE,
                format!("{}: output name collides with another output", input.display()),
            ));
        }
        outputs.push(args.out.join(name));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", args.out.display())))?;

    let entries = args
        .inputs
        .par_iter()
        .zip(outputs.par_iter())
        .enumerate()
        .map(|(i, (input, output))| {
            let m = formats::read_feature_file(input).map_err(|e| CliError::parse(input, e))?;
            let sample_seed = SampleSeed::new(seed, state.epoch, i as u64);
            let plan = make_plan(args.variant, &state, sample_seed, &m, &config)
                .map_err(|e| CliError::new(EXIT_USAGE, format!("{}: {e}", input.display())))?;
            let out = apply_plan(&m, &plan).map_err(|e| CliError::new(EXIT_USAGE, format!("{}: {e}", input.display())))?;
            formats::write_feature_file(output, &out).map_err(CliError::write)?;
            let name = output.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok(PlanEntry { input: input.display().to_string(), output: name, plan })
        })
        .collect::<Vec<Result<_, CliError>>>()
        // Report the first failing input in argument order.
        .into_iter()
        .collect::<Result<Vec<_>, CliError>>()?;

    let plan = PlanDocument::new(args.variant, seed, state.epoch, entries);
    let plan_path = args.out.join(PLAN_FILE);
    formats::write_atomic(&plan_path, plan.to_json().as_bytes()).map_err(CliError::write)?;
    Ok(AugmentOutcome { outputs, plan_path, plan })
}

pub fn cmd_init_state(args: &InitStateArgs) -> Result<PolicyState, CliError> {
    let beta = load_config(args.config.as_deref())?.augment.beta;
    let state = PolicyState::new(args.variant, beta, args.seed);
    formats::write_state(&args.out, &state).map_err(CliError::write)?;
    Ok(state)
}

pub fn cmd_policy_step(args: &PolicyStepArgs) -> Result<PolicyState, CliError> {
    let state = load_state(&args.state)?;
    let report = formats::read_loss_report(&args.report)
        .map_err(|e| CliError::parse(&args.report, e))?
        .into_report(&state);
    let next = state.advance_epoch(&report).map_err(|e| match e {
        PolicyError::EpochMismatch { .. } => CliError::new(EXIT_PROTOCOL, format!("{}: {e}", args.report.display())),
        other => CliError::parse(&args.report, other),
    })?;
    let out = args.out.as_ref().unwrap_or(&args.state);
    formats::write_state(out, &next).map_err(CliError::write)?;
    Ok(next)
}

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulationRun, CliError> {
    let mut config = load_config(args.config.as_deref())?.sim_config();
    if let Some(v) = args.variant {
        config.variant = v;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let run = run_simulation(&config).map_err(|e| match e {
        SimError::InvalidConfig(_) | SimError::InvalidShape(_) => CliError::new(EXIT_PARSE, format!("bad config: {e}")),
        other => CliError::new(EXIT_USAGE, other.to_string()),
    })?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", args.out.display())))?;
    let csv = formats::trace_to_csv(&run.traces).map_err(CliError::write)?;
    formats::write_atomic(&args.out.join(TRACE_FILE), csv.as_bytes()).map_err(CliError::write)?;
    let summary = formats::summary_line(&run) + "\n";
    formats::write_atomic(&args.out.join(SUMMARY_FILE), summary.as_bytes()).map_err(CliError::write)?;
    Ok(run)
}

/// Returns `(I_x(a, b), 1 - I_x(a, b))`.
pub fn cmd_ibf(x: f64, a: f64, b: f64) -> Result<(f64, f64), CliError> {
    let p = BetaParams::new(a, b).map_err(|e| CliError::new(EXIT_PARSE, e.to_string()))?;
    let v = reg_inc_beta(x, p).map_err(|e| CliError::new(EXIT_PARSE, e.to_string()))?;
    Ok((v, 1.0 - v))
}

/// Formats `v` with `digits` significant digits in positional notation.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{:.*}", digits.saturating_sub(1), v);
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn parse_number(name: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::new(EXIT_PARSE, format!("{name}: {s:?} is not a number")))
}

fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::new(EXIT_USAGE, format!("{THREADS_ENV}={v:?} must be a positive integer"))),
        },
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Augment(args) => {
            let outcome = cmd_augment(args)?;
            println!("wrote {} file(s) and {}", outcome.outputs.len(), outcome.plan_path.display());
        }
        Command::InitState(args) => {
            let s = cmd_init_state(args)?;
            println!("wrote epoch-{} {} state to {}", s.epoch, s.variant, args.out.display());
        }
        Command::PolicyStep(args) => {
            let s = cmd_policy_step(args)?;
            println!("epoch {}", s.epoch);
            println!("probabilities {:?}", s.probabilities);
            println!("relative      {:?}", s.relative);
            println!("lambda        {:?}", s.lambda);
        }
        Command::Simulate(args) => {
            let run = cmd_simulate(args)?;
            println!("{}", formats::summary_line(&run));
        }
        Command::Ibf(args) => {
            let (v, c) = cmd_ibf(parse_number("x", &args.x)?, parse_number("a", &args.a)?, parse_number("b", &args.b)?)?;
            println!("I_x(a,b)     {}", format_significant(v, 12));
            println!("1 - I_x(a,b) {}", format_significant(c, 12));
        }
        Command::ImportCsv { input, output } => {
            let text = std::fs::read_to_string(input).map_err(|e| CliError::parse(input, e))?;
            let m = formats::features_from_csv(&text).map_err(|e| CliError::parse(input, e))?;
            formats::write_feature_file(output, &m).map_err(CliError::write)?;
            println!("wrote {}x{} features to {}", m.tau(), m.nu(), output.display());
        }
        Command::ExportCsv { input } => {
            let m = formats::read_feature_file(input).map_err(|e| CliError::parse(input, e))?;
            print!("{}", formats::features_to_csv(&m));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = thread_count().and_then(|threads| match threads {
        None => dispatch(&cli.command),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::new(EXIT_USAGE, e.to_string()))?
            .install(|| dispatch(&cli.command)),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
