//! `gausscause` command-line front end.
//!
//! | exit code | meaning |
//! |---|---|
//! | 0 | success (for `validate`: every criterion passed) |
//! | 1 | usage error, invalid query or arguments, or a failed validation criterion |
//! | 2 | model error: unparseable or non-stationary model file |
//! | 3 | data error: unreadable CSV, too few rows |
//! | 4 | numerical error: collinear regressors, singular or non-positive-definite covariances |

pub mod report;
pub mod roles;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use gausscause::causality::EQUIVALENCE_TOL;
use gausscause::inference::chi2_test;
use gausscause::regression::{ols_fit, orthogonality_check};
use gausscause::validation::{run_criterion, ValidationConfig, DEFAULT_TRIALS, MIN_TRIALS, NUM_CRITERIA};
use gausscause::var::simulate;
use gausscause::{
    analyze_design, permutation_test, CausalityQuery, Error, Execution, LagSpec, ModelFile, PredictiveCovariances,
    TimeSeriesPanel,
};

use report::{
    AnalysisReport, CausalitySection, EstimationSection, InputInfo, QueryEcho, SignificanceSection, ToolInfo,
};
use roles::RolesManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MODEL: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "gausscause", version, about = "Granger causality and Gaussian transfer entropy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a VAR model and write the panel as CSV.
    Simulate(SimulateArgs),
    /// Estimate Granger causality and transfer entropy from a CSV panel.
    Analyze(AnalyzeArgs),
    /// Run the acceptance checks.
    Validate(ValidateArgs),
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Model description file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub steps: usize,
    /// Overrides the seed in the model file (default 0 if neither is given).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Discarded initial steps; defaults to ceil(10 / (1 - spectral radius)).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestKind {
    Chi2,
    Perm,
}

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    /// Input CSV with a header row.
    pub data: PathBuf,
    /// TOML manifest of column roles and lags; flags take precedence.
    #[arg(long)]
    pub roles: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub predictee: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub predictor: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub condition: Vec<String>,
    /// Predictee lags (default 1).
    #[arg(short = 'p')]
    pub p: Option<usize>,
    /// Predictor lags (default 1).
    #[arg(short = 'q')]
    pub q: Option<usize>,
    /// Conditioning lags (default 1 when there is a conditioning block).
    #[arg(short = 'r')]
    pub r: Option<usize>,
    #[arg(long, value_enum, default_value_t = TestKind::Chi2)]
    pub test: TestKind,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ridge added to the regressor covariance diagonal.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Report path; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ValidateArgs {
    /// Trials for the null-calibration criterion.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subset of criteria to run, e.g. `1,5,8`.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<u8>,
    /// Run trials on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, default_value_t = 0, hide = true)]
    pub dof_offset: usize,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy)]
enum Stage {
    Model,
    Data,
    Compute,
}

fn classify(err: Error, stage: Stage) -> CliError {
    let code = match (err.root(), stage) {
        (Error::NonStationary { .. }, _) => EXIT_MODEL,
        (Error::InvalidLags(_) | Error::InvalidQuery(_) | Error::InvalidArgument(_), _) => EXIT_FAILURE,
        (_, Stage::Model) => EXIT_MODEL,
        (Error::Parse { .. } | Error::Csv(_) | Error::Io(_), _) => EXIT_DATA,
        (Error::InsufficientData { .. } | Error::NonFinite { .. } | Error::Shape(_), _) => EXIT_DATA,
        _ => EXIT_NUMERICAL,
    };
    CliError {
        code,
        message: err.to_string(),
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_FAILURE,
        message: message.into(),
    }
}

fn io_error(path: &Path, err: io::Error, code: i32) -> CliError {
    CliError {
        code,
        message: format!("{}: {err}", path.display()),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Validate(args) => cmd_validate(&args),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<i32> {
    let text = fs::read_to_string(&args.model).map_err(|e| io_error(&args.model, e, EXIT_MODEL))?;
    let file = ModelFile::parse(&text).map_err(|e| classify(e.context(args.model.display().to_string()), Stage::Model))?;
    let model = &file.model;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let burn_in = args.burn_in.unwrap_or_else(|| model.default_burn_in());
    let panel = simulate(model, args.steps, burn_in, seed).map_err(|e| classify(e, Stage::Compute))?;
    let mut buf = Vec::new();
    panel.write_csv(&mut buf).map_err(|e| classify(e, Stage::Data))?;
    fs::write(&args.out, buf).map_err(|e| io_error(&args.out, e, EXIT_DATA))?;
    println!("spectral radius: {}", model.spectral_radius());
    println!("burn-in: {burn_in}");
    println!("seed: {seed}");
    println!("wrote {} rows x {} columns to {}", panel.num_steps(), panel.num_vars(), args.out.display());
    Ok(EXIT_OK)
}

fn resolve_query(args: &AnalyzeArgs) -> CliResult<CausalityQuery> {
    let manifest = match &args.roles {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e, EXIT_FAILURE))?;
            RolesManifest::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RolesManifest::default(),
    };
    let pick = |flag: &[String], file: &[String]| if flag.is_empty() { file.to_vec() } else { flag.to_vec() };
    let predictee = pick(&args.predictee, &manifest.predictee);
    let predictor = pick(&args.predictor, &manifest.predictor);
    let condition = pick(&args.condition, &manifest.condition);
    let lags = manifest.lags.unwrap_or_default();
    let p = args.p.or(lags.p).unwrap_or(1);
    let q = args.q.or(lags.q).unwrap_or(1);
    let r = match args.r.or(lags.r) {
        Some(r) => r,
        None if condition.is_empty() => 0,
        None => 1,
    };
    if !condition.is_empty() && r == 0 {
        return Err(usage("a conditioning block needs r >= 1"));
    }
    let lags = LagSpec::new(p, q, r).map_err(|e| classify(e, Stage::Compute))?;
    CausalityQuery::new(predictee, predictor, condition, lags).map_err(|e| classify(e, Stage::Compute))
}

fn build_report(args: &AnalyzeArgs, query: &CausalityQuery, panel: &TimeSeriesPanel) -> gausscause::Result<AnalysisReport> {
    let design = query.designs(panel)?;
    let analysis = analyze_design(&design, args.jitter)?;
    let m = &analysis.measures;
    let chi2 = chi2_test(m.gc, design.effective_rows, design.dims.x, design.dims.y, design.lags.q)?;
    let significance = match args.test {
        TestKind::Chi2 => chi2,
        TestKind::Perm => permutation_test(query, panel, args.permutations, args.seed, Execution::Parallel)?,
    };

    let (_, full_residual) = PredictiveCovariances::from_design(&design, args.jitter)?.residual_covariances()?;
    let (ols_formula_gap, orthogonality) = match ols_fit(&design.full_regressors, &design.target) {
        Ok(fit) => {
            let residuals = fit.residuals(&design.full_regressors, &design.target);
            (
                Some((fit.residual_cov.values() - full_residual.values()).abs().max()),
                Some(orthogonality_check(&fit, &design.full_regressors, &residuals)),
            )
        }
        Err(_) => (None, None),
    };

    let perm = args.test == TestKind::Perm;
    Ok(AnalysisReport {
        tool: ToolInfo {
            name: "gausscause".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        },
        input: InputInfo {
            source: args.data.display().to_string(),
            columns: panel.names().to_vec(),
            num_steps: panel.num_steps(),
        },
        query: QueryEcho {
            predictee: query.predictee.clone(),
            predictor: query.predictor.clone(),
            conditioning: query.conditioning.clone(),
            lags: query.lags,
        },
        causality: CausalitySection {
            granger_causality: m.gc,
            transfer_entropy: m.te,
            transfer_entropy_entropy_route: m.te_entropy_route,
            equivalence_gap: m.equivalence_gap(),
            equivalence_holds: m.equivalence_gap() <= EQUIVALENCE_TOL,
            restricted_logdet: m.restricted_logdet,
            full_logdet: m.full_logdet,
        },
        significance: SignificanceSection {
            method: significance.method,
            statistic: significance.statistic,
            dof: significance.dof,
            p_value: significance.p_value,
            chi2_p_value: chi2.p_value,
            alpha: args.alpha,
            rejected: significance.p_value <= args.alpha,
            permutations: perm.then_some(args.permutations),
            seed: perm.then_some(args.seed),
        },
        estimation: EstimationSection {
            num_steps: panel.num_steps(),
            effective_obs: design.effective_rows,
            max_lag: query.max_lag(),
            full_regressors: design.full_regressors.ncols(),
            jitter: args.jitter,
            regressor_pivot_ratio: analysis.regressor_pivot_ratio,
            ols_formula_gap,
            residual_orthogonality: orthogonality,
        },
    })
}

fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<i32> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    if !(args.jitter >= 0.0 && args.jitter.is_finite()) {
        return Err(usage(format!("--jitter must be a non-negative number, got {}", args.jitter)));
    }
    if args.jitter > 0.0 && args.test == TestKind::Perm {
        return Err(usage("--jitter applies to the chi2 test only"));
    }
    let query = resolve_query(args)?;
    let panel = TimeSeriesPanel::from_csv_path(&args.data)
        .map_err(|e| classify(e.context(args.data.display().to_string()), Stage::Data))?;
    let report = build_report(args, &query, &panel)
        .map_err(|e| classify(e.context(format!("query {}", query.describe())), Stage::Compute))?;
    let text = report.to_toml();
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e, EXIT_DATA))?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| io_error(Path::new("<stdout>"), e, EXIT_DATA))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_validate(args: &ValidateArgs) -> CliResult<i32> {
    if args.trials < MIN_TRIALS {
        return Err(usage(format!("--trials must be at least {MIN_TRIALS}")));
    }
    let ids: Vec<u8> = if args.criteria.is_empty() {
        (1..=NUM_CRITERIA).collect()
    } else {
        let mut ids = args.criteria.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    if let Some(bad) = ids.iter().find(|&&id| id == 0 || id > NUM_CRITERIA) {
        return Err(usage(format!("no criterion {bad}; criteria are 1-{NUM_CRITERIA}")));
    }
    let config = ValidationConfig {
        trials: args.trials,
        seed: args.seed,
        exec: if args.sequential { Execution::Sequential } else { Execution::Parallel },
        dof_offset: args.dof_offset,
    };
    let mut failed = 0;
    for id in &ids {
        let outcome = run_criterion(*id, &config).map_err(|e| classify(e, Stage::Compute))?;
        if !outcome.passed {
            failed += 1;
        }
        println!("{outcome}");
    }
    println!("{} of {} criteria passed (seed {}, trials {})", ids.len() - failed, ids.len(), args.seed, args.trials);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}
