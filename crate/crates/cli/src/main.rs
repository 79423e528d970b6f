//! `ddm`: batch front-end for diffuse-domain solves, convergence studies and
//! error-constant validation.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddm_core::DdmError;

use config::{
    Command, DiscretizationSection, GeometrySection, LevelSetSection, MultigridSection,
    OutputSection, ProblemSection, RunConfig,
};

#[derive(Parser)]
#[command(name = "ddm", version, about = "Diffuse-domain solver front-end")]
struct Cli {
    /// Config file; command-line flags take precedence over its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Resolve and check everything, write the effective config, but do not solve.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// One solve at a single eps, with field dumps.
    Solve(Flags),
    /// Convergence table over the eps schedule, printed as CSV.
    Converge(Flags),
    /// Measured against predicted error constants.
    Constants(Flags),
    /// Truncation and analytic parts of the error at fixed eps.
    Split(Flags),
    /// Level-set motion only.
    LevelsetDemo(Flags),
}

#[derive(Args, Default)]
struct Flags {
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    eps_schedule: Option<Vec<f64>>,
    #[arg(long)]
    h: Option<f64>,
    /// `eps/c` or `eps^1.5/c`.
    #[arg(long)]
    h_rule: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Spacings `h = eps/c` for split.
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    dump_times: Option<Vec<f64>>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    mask_normal: Option<bool>,
    #[arg(long)]
    analytic_grad: Option<bool>,
    #[arg(long)]
    mg_levels: Option<usize>,
    #[arg(long)]
    mg_pre: Option<usize>,
    #[arg(long)]
    mg_post: Option<usize>,
    #[arg(long)]
    mg_tol: Option<f64>,
    #[arg(long)]
    mg_max_cycles: Option<usize>,
    #[arg(long)]
    mg_min_coarse: Option<usize>,
    /// `galerkin` or `rediscretize`.
    #[arg(long)]
    mg_coarse_operator: Option<String>,
    #[arg(long)]
    reinit_steps: Option<usize>,
    #[arg(long)]
    reinit_band: Option<f64>,
    #[arg(long)]
    extension_band: Option<f64>,
}

impl Flags {
    fn into_config(self, command: Command) -> RunConfig {
        RunConfig {
            command: Some(command),
            problem: ProblemSection {
                case: self.case,
                scheme: self.scheme,
            },
            discretization: DiscretizationSection {
                eps: self.eps,
                eps_schedule: self.eps_schedule,
                h: self.h,
                h_rule: self.h_rule,
                dt: self.dt,
                t_end: self.t_end,
                c: self.c,
            },
            output: OutputSection {
                dir: self.out,
                dump_times: self.dump_times,
            },
            geometry: GeometrySection {
                tau: self.tau,
                mask_normal: self.mask_normal,
                analytic_grad: self.analytic_grad,
            },
            multigrid: MultigridSection {
                levels: self.mg_levels,
                pre_smooth: self.mg_pre,
                post_smooth: self.mg_post,
                tolerance: self.mg_tol,
                max_vcycles: self.mg_max_cycles,
                min_coarse_nodes: self.mg_min_coarse,
                coarse_operator: self.mg_coarse_operator,
            },
            levelset: LevelSetSection {
                reinit_steps: self.reinit_steps,
                reinit_band: self.reinit_band,
                extension_band: self.extension_band,
            },
        }
    }
}

const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 3;

fn kind(e: &DdmError) -> &'static str {
    match e.root() {
        DdmError::Unknown { .. } => "unknown",
        DdmError::InvalidParameter(_) => "invalid-parameter",
        DdmError::Invariant(_) => "invariant",
        DdmError::Parse(_) => "parse",
        DdmError::InvalidGrid(_) => "invalid-grid",
        DdmError::NotConverged { .. } => "not-converged",
        DdmError::ZeroPivot { .. } => "zero-pivot",
        DdmError::Cfl { .. } => "cfl",
        DdmError::NoPlateau { .. } => "no-plateau",
        DdmError::Fit(_) => "fit",
        DdmError::MissingExtension { .. } => "missing-extension",
        DdmError::Io(_) | DdmError::Csv(_) => "io",
        _ => "internal",
    }
}

/// Usage errors exit with 2; failures during the computation with 3.
fn exit_code(e: &DdmError) -> u8 {
    match e.root() {
        DdmError::Unknown { .. }
        | DdmError::InvalidParameter(_)
        | DdmError::Invariant(_)
        | DdmError::Parse(_)
        | DdmError::InvalidGrid(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn report(code: u8, kind: &str, msg: &str) -> ExitCode {
    let msg = msg.replace('\n', " ");
    eprintln!("error: code={code} kind={kind} msg={}", msg.trim());
    ExitCode::from(code)
}

fn init_threads() -> Result<(), DdmError> {
    let Ok(v) = std::env::var("DDM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        DdmError::InvalidParameter(format!("DDM_THREADS = '{v}' is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| DdmError::InvalidParameter(format!("thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), DdmError> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(cmd) = cli.command {
        let (command, flags) = match cmd {
            Cmd::Solve(f) => (Command::Solve, f),
            Cmd::Converge(f) => (Command::Converge, f),
            Cmd::Constants(f) => (Command::Constants, f),
            Cmd::Split(f) => (Command::Split, f),
            Cmd::LevelsetDemo(f) => (Command::LevelsetDemo, f),
        };
        cfg.overlay(&flags.into_config(command));
    }
    let res = config::resolve(&cfg)?;
    res.preflight()?;
    commands::write_effective(&res)?;
    if cli.dry_run {
        eprintln!(
            "dry run: {} on {} with {} checked",
            res.command, res.case.id, res.scheme
        );
        return Ok(());
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    commands::run(&res, &mut lock)?;
    lock.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_string();
            return report(EXIT_USAGE, "usage", &first);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(exit_code(&e), kind(&e), &e.to_string()),
    }
}
