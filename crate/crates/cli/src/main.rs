//! Command-line front end: load survey data, solve allocation programs,
//! check published allocations, print moment summaries, and run Monte Carlo
//! validations. Reports print as aligned tables or as JSON.
//!
//! Exit codes: 0 on success, 1 on input or validation errors, 2 when a
//! solve proves the problem infeasible.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use stratalloc::estimators::{self, Allocation};
use stratalloc::simulator::{self, Functional, SyntheticPopulationSpec};
use stratalloc::solvers::{self, Formulation, ProblemSpec, SolveReport};
use stratalloc::strata::{self, FileFormat, SurveyFrame};

const DATA_DIR_ENV: &str = "STRATALLOC_DATA_DIR";
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "stratalloc",
    about = "Optimum sample allocation for multivariate stratified surveys",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize sampling cost subject to the chosen precision constraints.
    Solve(SolveArgs),
    /// Evaluate the constraints at a given allocation without solving.
    Check(CheckArgs),
    /// Print the moment summary of an allocation.
    Moments(MomentsArgs),
    /// Monte Carlo validation on a synthetic population.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputMode {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationName {
    PerVariable,
    Prekopa,
    Trace,
    Det,
}

#[derive(Args)]
struct FrameArgs {
    /// Survey data file; relative paths also resolve under $STRATALLOC_DATA_DIR.
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, value_enum)]
    formulation: FormulationName,
    /// Per-characteristic variance budgets, comma separated; `inf` disables
    /// a characteristic.
    #[arg(long)]
    v0: Option<String>,
    /// Budget for the trace or determinant functional.
    #[arg(long)]
    tau: Option<f64>,
    /// Chance-constraint probability; omitting it selects the deterministic
    /// variant where one exists.
    #[arg(long)]
    p0: Option<f64>,
    /// Fixed total sample size constraint.
    #[arg(long)]
    total_n: Option<u64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    frame: FrameArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "table")]
    output: OutputMode,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    frame: FrameArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Allocation to check, comma separated.
    #[arg(long)]
    alloc: String,
    #[arg(long, value_enum, default_value = "table")]
    output: OutputMode,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    frame: FrameArgs,
    /// Allocation to evaluate, comma separated.
    #[arg(long)]
    alloc: String,
    #[arg(long, value_enum, default_value = "table")]
    output: OutputMode,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic population spec (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Per-stratum sample sizes, comma separated.
    #[arg(long)]
    alloc: String,
    /// Coverage budget; omitting it runs the normality validation instead.
    #[arg(long)]
    tau: Option<f64>,
    /// Functional for the coverage run.
    #[arg(long, value_enum, default_value = "trace")]
    formulation: SimFunctional,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    replications: u64,
    #[arg(long, value_enum, default_value = "table")]
    output: OutputMode,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimFunctional {
    Trace,
    Det,
}

/// Solve/check output: the report plus the variance diagonal the published
/// tables print next to each allocation.
#[derive(Serialize, Deserialize)]
struct SolveOutput {
    report: SolveReport,
    var_hat: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CheckOutput {
    report: solvers::CheckReport,
    var_hat: Vec<f64>,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Solve(args) => cmd_solve(args),
        Command::Check(args) => cmd_check(args),
        Command::Moments(args) => cmd_moments(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

fn resolve_input(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            let under = Path::new(&dir).join(path);
            if under.exists() {
                return Ok(under);
            }
            bail!(
                "input file not found: tried `{}` and `{}`",
                path.display(),
                under.display()
            );
        }
    }
    bail!("input file not found: `{}`", path.display());
}

fn load_frame(args: &FrameArgs) -> Result<SurveyFrame> {
    let path = resolve_input(&args.input)?;
    let format = match args.format {
        Some(InputFormat::Csv) => FileFormat::Csv,
        Some(InputFormat::Json) => FileFormat::Json,
        None => strata::format_for_path(&path),
    };
    strata::load_survey(&path, format)
        .with_context(|| format!("cannot load survey data from `{}`", path.display()))
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if tok.eq_ignore_ascii_case("inf") {
                return Ok(f64::INFINITY);
            }
            tok.parse::<f64>().map_err(|_| anyhow!("cannot parse `{tok}` in {what}"))
        })
        .collect()
}

fn parse_alloc(text: &str, frame: &SurveyFrame) -> Result<Allocation> {
    let values: Result<Vec<u64>> = text
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| anyhow!("cannot parse `{}` in the allocation list", tok.trim()))
        })
        .collect();
    Ok(Allocation::new(values?, frame)?)
}

fn build_spec(args: &ProblemArgs, frame: &SurveyFrame) -> Result<ProblemSpec> {
    let v0 = args.v0.as_deref().map(|s| parse_list(s, "--v0")).transpose()?;
    let need_v0 = || v0.clone().ok_or_else(|| anyhow!("this formulation needs --v0"));
    let need_tau = || args.tau.ok_or_else(|| anyhow!("this formulation needs --tau"));
    let formulation = match (args.formulation, args.p0) {
        (FormulationName::PerVariable, None) => Formulation::PerVariable { v0: need_v0()? },
        (FormulationName::PerVariable, Some(p0)) | (FormulationName::Prekopa, Some(p0)) => {
            Formulation::PrekopaChance { v0: need_v0()?, p0 }
        }
        (FormulationName::Prekopa, None) => {
            bail!("the prekopa formulation is a chance constraint; pass --p0 (use per-variable for the deterministic budgets)")
        }
        (FormulationName::Trace, None) => Formulation::TraceDeterministic { tau: need_tau()? },
        (FormulationName::Trace, Some(p0)) => {
            Formulation::TraceChance { tau: need_tau()?, p0 }
        }
        (FormulationName::Det, Some(p0)) => Formulation::DetChance { tau: need_tau()?, p0 },
        (FormulationName::Det, None) => {
            bail!("the det formulation is a chance constraint; pass --p0")
        }
    };
    let _ = frame;
    Ok(ProblemSpec { formulation, total_n: args.total_n })
}

/// Six significant digits, the precision the published tables use.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 6 - 1 - x.abs().log10().floor() as i32;
    format!("{:.*}", digits.clamp(0, 12) as usize, x)
}

fn var_hat_diagonal(alloc: &Allocation, frame: &SurveyFrame) -> Vec<f64> {
    let cov = estimators::cov_hat_stratified(alloc, frame);
    (0..frame.g()).map(|j| cov.get(j, j)).collect()
}

fn print_constraint_table(rows: &[solvers::ConstraintReport]) {
    println!("{:<18} {:>14} {:>6} {:>14} {:>14}", "constraint", "value", "", "bound", "slack");
    for row in rows {
        let sense = match row.sense {
            solvers::Sense::LessEq => "<=",
            solvers::Sense::GreaterEq => ">=",
            solvers::Sense::Eq => "=",
        };
        println!(
            "{:<18} {:>14} {:>6} {:>14} {:>14}",
            row.name,
            sig6(row.value),
            sense,
            sig6(row.bound),
            sig6(row.slack)
        );
    }
}

fn alloc_row(n: &[u64]) -> String {
    n.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let frame = load_frame(&args.frame)?;
    let spec = build_spec(&args.problem, &frame)?;
    let report = solvers::solve(&spec, &frame)?;
    let var_hat = report.allocation.as_ref().map(|a| var_hat_diagonal(a, &frame));
    let feasible = report.feasible;
    let output = SolveOutput { report, var_hat };
    match args.output {
        OutputMode::Json => println!("{}", serde_json::to_string_pretty(&output)?),
        OutputMode::Table => {
            if let (Some(alloc), Some(cost)) =
                (&output.report.allocation, output.report.objective_cost)
            {
                println!("allocation: {}", alloc_row(alloc.n()));
                let vars = output.var_hat.as_ref().expect("feasible solve has variances");
                let labels: Vec<String> = (0..frame.g()).map(|j| frame.label(j)).collect();
                for (label, v) in labels.iter().zip(vars) {
                    println!("Var[{label}]: {}", sig6(*v));
                }
                println!("cost: {}", sig6(cost));
                println!(
                    "nodes: {}   relaxation bound: {}   wall: {:.3}s",
                    output.report.nodes_explored,
                    output.report.relaxation_bound.map(sig6).unwrap_or_else(|| "-".into()),
                    output.report.wall_time_seconds
                );
            } else {
                println!("infeasible: no allocation satisfies the constraints");
                println!("certificate (constraints at their most favorable corner):");
            }
            print_constraint_table(&output.report.constraint_values);
        }
    }
    Ok(if feasible { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INFEASIBLE) })
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let frame = load_frame(&args.frame)?;
    let spec = build_spec(&args.problem, &frame)?;
    let alloc = parse_alloc(&args.alloc, &frame)?;
    let report = solvers::check_allocation(&alloc, &spec, &frame)?;
    let output = CheckOutput { var_hat: var_hat_diagonal(&alloc, &frame), report };
    let feasible = output.report.feasible;
    match args.output {
        OutputMode::Json => println!("{}", serde_json::to_string_pretty(&output)?),
        OutputMode::Table => {
            println!("allocation: {}", alloc_row(output.report.allocation.n()));
            for (j, v) in output.var_hat.iter().enumerate() {
                println!("Var[{}]: {}", frame.label(j), sig6(*v));
            }
            println!("cost: {}", sig6(output.report.objective_cost));
            println!("feasible: {feasible}");
            print_constraint_table(&output.report.constraint_values);
        }
    }
    Ok(if feasible { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INFEASIBLE) })
}

fn cmd_moments(args: MomentsArgs) -> Result<ExitCode> {
    let frame = load_frame(&args.frame)?;
    let alloc = parse_alloc(&args.alloc, &frame)?;
    let report = estimators::moment_report(&alloc, &frame);
    match args.output {
        OutputMode::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        OutputMode::Table => {
            println!("allocation: {}", alloc_row(alloc.n()));
            let pilots: Vec<String> = frame
                .strata()
                .iter()
                .map(|s| s.pilot_sample_size.map(|n| n.to_string()).unwrap_or_else(|| "-".into()))
                .collect();
            // Pilot sizes are fixed properties of the data, distinct from
            // the allocation above.
            println!("pilot sample sizes: {}", pilots.join(" "));
            println!("covariance estimate of the stratified mean:");
            for i in 0..report.cov_hat.rows() {
                let row: Vec<String> =
                    (0..report.cov_hat.cols()).map(|j| sig6(report.cov_hat.get(i, j))).collect();
                println!("  [{}]", row.join(", "));
            }
            let mean: Vec<String> = report.mean_vech.data().iter().map(|v| sig6(*v)).collect();
            println!("mean of vech: [{}]", mean.join(", "));
            match &report.cov_vech {
                Some(cov) => {
                    println!("covariance of vech:");
                    for i in 0..cov.rows() {
                        let row: Vec<String> =
                            (0..cov.cols()).map(|j| sig6(cov.get(i, j))).collect();
                        println!("  [{}]", row.join(", "));
                    }
                }
                None => println!("covariance of vech: unavailable (no fourth moments in the data)"),
            }
            println!("trace mean: {}", sig6(report.trace_mean));
            match report.trace_var {
                Some(v) => println!("trace variance: {}", sig6(v)),
                None => println!("trace variance: unavailable (no fourth moments in the data)"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let path = resolve_input(&args.input)?;
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read `{}`", path.display()))?;
    let spec: SyntheticPopulationSpec = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse population spec `{}`", path.display()))?;
    let population = simulator::generate_population(&spec)?;
    let n: Result<Vec<u64>> = args
        .alloc
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u64>()
                .map_err(|_| anyhow!("cannot parse `{}` in the allocation list", tok.trim()))
        })
        .collect();
    let n = n?;
    let report = match args.tau {
        Some(tau) => {
            let functional = match args.formulation {
                SimFunctional::Trace => Functional::Trace,
                SimFunctional::Det => Functional::Det,
            };
            simulator::validate_coverage(
                &population,
                &n,
                tau,
                functional,
                args.replications,
                args.seed,
            )?
        }
        None => simulator::validate_normality(&population, &n, args.replications, args.seed)?,
    };
    match args.output {
        OutputMode::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        OutputMode::Table => {
            println!("replications: {}", report.replications);
            if let Some(p) = report.empirical_probability {
                println!("empirical probability: {}", sig6(p));
            }
            if let Some(p) = report.nominal_p0 {
                println!("nominal p0: {}", sig6(p));
            }
            if let Some((lo, hi)) = report.wilson_interval {
                println!("wilson 95% interval: [{}, {}]", sig6(lo), sig6(hi));
            }
            if let Some(normality) = &report.normality {
                let stats = &normality.stratified;
                println!("stratified vech estimator:");
                print_component_stats(stats);
                for (h, stats) in normality.per_stratum_s.iter().enumerate() {
                    println!("stratum {} sample covariance:", h + 1);
                    print_component_stats(stats);
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_component_stats(stats: &simulator::ComponentStats) {
    let fmt = |v: &[f64]| v.iter().map(|x| sig6(*x)).collect::<Vec<_>>().join(", ");
    println!("  empirical mean: [{}]", fmt(&stats.empirical_mean));
    println!("  reference mean: [{}]", fmt(&stats.reference_mean));
    println!("  mean std error: [{}]", fmt(&stats.mean_standard_error));
    println!("  skewness:       [{}]", fmt(&stats.skewness));
    println!("  excess kurt.:   [{}]", fmt(&stats.excess_kurtosis));
    println!("  max CDF gap:    {}", sig6(stats.max_cdf_gap));
}
