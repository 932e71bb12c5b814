use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bregman_cli::{resolve, run, CliError, Command, Hooks, Overrides, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bregman-ocp", version, about = "Inexact Bregman iteration for bang-bang optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Error histories per mesh for the manufactured example.
    FigureRepro(Common),
    /// Convergence order of the discretization error δ(h).
    FemOrder(Common),
    /// Sublevel-set measure of the optimal adjoint.
    AscCheck(Common),
    /// Stopping index k(h) across the mesh family.
    StoppingIndex(Common),
    /// Consolidated property suite.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Perturb one mass-matrix entry (harness self-test).
        #[arg(long, hide = true)]
        corrupt_mass: bool,
    },
    /// Print the resolved configuration as TOML.
    ShowConfig(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subdivisions per side; repeat for a mesh family.
    #[arg(long = "n-div")]
    n_div: Vec<usize>,
    /// Regularization schedule: `0.1`, `c*k^p` or `c*r^k`.
    #[arg(long)]
    alpha: Option<String>,
    /// Accuracy schedule, same forms as --alpha.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Newton iteration cap per subproblem.
    #[arg(long)]
    ssn_max_iter: Option<usize>,
    #[arg(long)]
    quad_degree: Option<usize>,
    /// Output directory; each command writes into its own subdirectory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Budget C of the stopping index.
    #[arg(long)]
    c_budget: Option<f64>,
    /// Reference mesh for δ(h); must be a multiple of every --n-div.
    #[arg(long)]
    reference_n_div: Option<usize>,
    /// Cells per side of the sublevel-measure grid.
    #[arg(long)]
    asc_resolution: Option<usize>,
    /// Inline δ(h), one per --n-div, for stopping-index.
    #[arg(long, allow_negative_numbers = true)]
    delta: Vec<f64>,
}

impl Common {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            n_div: self.n_div,
            alpha: self.alpha,
            eps: self.eps,
            k_max: self.k_max,
            ssn_max_iter: self.ssn_max_iter,
            quad_degree: self.quad_degree,
            out: self.out,
            seed: self.seed,
            c_budget: self.c_budget,
            reference_n_div: self.reference_n_div,
            asc_resolution: self.asc_resolution,
            delta: self.delta,
        };
        resolve(self.config.as_deref(), overrides)
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let (command, common, hooks) = match cli.command {
        Cmd::FigureRepro(c) => (Command::FigureRepro, c, Hooks::default()),
        Cmd::FemOrder(c) => (Command::FemOrder, c, Hooks::default()),
        Cmd::AscCheck(c) => (Command::AscCheck, c, Hooks::default()),
        Cmd::StoppingIndex(c) => (Command::StoppingIndex, c, Hooks::default()),
        Cmd::Validate { common, corrupt_mass } => (Command::Validate, common, Hooks { corrupt_mass }),
        Cmd::ShowConfig(c) => {
            print!("{}", c.resolve()?.to_toml()?);
            return Ok(true);
        }
    };
    let cfg = common.resolve()?;
    let report = run(command, &cfg, hooks)?;
    // A closed stdout (e.g. piped into `head`) must not mask the exit code.
    let mut out = std::io::stdout().lock();
    for check in &report.checks {
        let _ = writeln!(out, "{check}");
    }
    let _ = writeln!(out, "report: {}", cfg.out.join(command.name()).join("report.toml").display());
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
