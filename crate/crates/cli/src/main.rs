//! `treelin`: linearization solvers, tree enumeration, small-divisor
//! arithmetic and growth diagnostics from the command line.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on domain errors
//! (resonances, family violations, failed verification). The thread count
//! is taken from `RAYON_NUM_THREADS`.

mod commands;
mod error;
mod fixtures;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};


#[derive(Parser)]
#[command(name = "treelin", version, about = "Tree expansions for formal linearization problems")]
struct Cli {
    /// Seed for randomized fixtures.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a germ, vector field or inversion problem.
    Linearize(LinearizeArgs),
    /// Enumerate plane trees or labeled trees.
    Trees {
        #[command(subcommand)]
        cmd: TreesCmd,
    },
    /// Continued fraction and Bruno partial sums of a rotation number.
    Bruno(BrunoArgs),
    /// Tabulate a small-divisor function as CSV.
    Omega(OmegaArgs),
    /// Growth, class and arithmetical-condition reports.
    Diagnose {
        #[command(subcommand)]
        cmd: DiagnoseCmd,
    },
    /// Check solutions and run randomized solver comparisons.
    Verify {
        #[command(subcommand)]
        cmd: VerifyCmd,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Germ,
    Field,
    Inversion,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Recursive,
    Tree,
    Fixedpoint,
    All,
}

#[derive(Args)]
struct LinearizeArgs {
    kind: KindArg,
    #[arg(long)]
    input: PathBuf,
    /// Truncation degree; defaults to the document's.
    #[arg(long)]
    degree: Option<u32>,
    /// Defaults to the document's method, then `recursive`.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Require every residual to pass and all methods to agree.
    #[arg(long)]
    verify: bool,
    /// Write `degree,maxcoef` rows of the first solution.
    #[arg(long)]
    emit_csv: Option<PathBuf>,
    /// Omit coefficients with a divisor under tolerance instead of failing.
    #[arg(long)]
    clip: bool,
    /// Add wall-clock timings to the report (makes it non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TreesCmd {
    Enum(TreesEnumArgs),
}

#[derive(Args)]
struct TreesEnumArgs {
    #[arg(long)]
    order: usize,
    #[arg(long)]
    labeled: bool,
    /// Total momentum, e.g. `2,1`.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<u32>,
    /// Root line axis, 1-based.
    #[arg(long, default_value_t = 1)]
    axis: usize,
    /// Series document whose support gives the allowed node labels.
    #[arg(long)]
    support: Option<PathBuf>,
    /// Allow every node label of degree `2..=K` instead of a file.
    #[arg(long)]
    support_degree: Option<u32>,
    /// Keep labelings whose weight vanishes.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct BrunoArgs {
    #[arg(long, allow_hyphen_values = true)]
    omega: f64,
    #[arg(long)]
    terms: usize,
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Tilde,
    Frac,
    Hat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TildeModeArg {
    Realizable,
    Full,
}

#[derive(Args)]
struct OmegaArgs {
    /// JSON spectrum: `{"rotation": [...]}`, `{"eigenvalues": [[re, im], ...]}`
    /// or `{"omega": [[re, im], ...]}`.
    #[arg(long)]
    spectrum: PathBuf,
    #[arg(long)]
    p_max: u64,
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "realizable")]
    mode: TildeModeArg,
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DiagnoseCmd {
    /// Per-degree coefficient maxima, radius and Gevrey fits.
    Growth(GrowthArgs),
    /// Check the hypotheses on a weight sequence, optionally fitting a series.
    Class(ClassArgs),
    /// The arithmetical condition sequence for a rotation vector.
    Condition(ConditionArgs),
    /// Radius of the germ family or domain size of the field family.
    Family(FamilyArgs),
}

#[derive(Args)]
struct GrowthArgs {
    /// A series document or a `linearize` report.
    #[arg(long)]
    input: PathBuf,
    /// `gevrey:s`, `geometric:C`, `table:v1,v2,...` or `table:FILE`.
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ClassArgs {
    #[arg(long)]
    class: String,
    #[arg(long, default_value_t = 40)]
    k_max: usize,
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct ConditionArgs {
    /// Rotation vector, e.g. `0.618,0.786`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    omega: Vec<f64>,
    #[arg(long, default_value = "geometric:1")]
    m_class: String,
    #[arg(long, default_value = "geometric:1")]
    n_class: String,
    #[arg(long, default_value_t = 200)]
    d_max: usize,
    /// `powers` (p_k = 2^{k+1}), `convergents` (one-dimensional only) or
    /// a comma-separated list.
    #[arg(long, default_value = "powers")]
    p_sequence: String,
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Args)]
struct FamilyArgs {
    /// Germ family `λz(1 − z^k/k)`.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    #[arg(long, default_value_t = 40)]
    degree: u32,
    /// Field family member from a problem document.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Field family member with every coefficient 1 through this degree.
    #[arg(long)]
    worst_case: Option<u32>,
    /// Radius for the majorant partial sums.
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long)]
    emit_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Residual of a stored solution.
    Conjugacy(ConjugacyArgs),
    /// Tree sum against recursion on random problems.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct ConjugacyArgs {
    #[arg(long)]
    input: PathBuf,
    /// Series document or `linearize` report holding `h`.
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleKind {
    Germ,
    Field,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_enum)]
    kind: OracleKind,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 8)]
    degree: u32,
    #[arg(long, default_value_t = 4)]
    f_degree: u32,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
