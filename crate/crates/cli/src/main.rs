use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use jumprisk_core::NegJumpMode;

mod commands;
mod config;

use commands::{CliError, Context, Overrides};

#[derive(Parser)]
#[command(name = "jumprisk", version, about = "Consumption and investment under VaR/ES limits in jump-diffusion markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Number of simulated paths.
    #[arg(long, global = true)]
    paths: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    negjump_method: Option<Method>,
    /// Evaluate formulas even when a precondition fails.
    #[arg(long, global = true)]
    force: bool,
    /// Also write the effective configuration to config.txt.
    #[arg(long, global = true)]
    dump_config: bool,
    /// Strategy CSV (columns t, pi_1..pi_d, v) used instead of the solver's.
    #[arg(long, global = true)]
    strategy: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and write strategy.csv and report.csv.
    Solve,
    /// Check whether the unconstrained optimum satisfies the constraint.
    Certify,
    /// Simulate wealth and write per-node mean, quantile and tail mean.
    Simulate,
    /// Run feasibility and optimality checks; exit 3 if any fails.
    Verify,
    /// Optimal policy with and without jumps.
    Compare,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Off,
    Paper,
    Thinning,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.ok_or_else(|| CliError::Parse("--config is required".into()))?;
    let overrides = Overrides {
        paths: cli.paths,
        seed: cli.seed,
        negjump: cli.negjump_method.map(|m| match m {
            Method::Off => NegJumpMode::Off,
            Method::Paper => NegJumpMode::PaperFormula,
            Method::Thinning => NegJumpMode::ExactThinning,
        }),
        force: cli.force,
        dump_config: cli.dump_config,
        strategy: cli.strategy,
    };
    let ctx = Context::load(&config, &cli.out, &overrides)?;
    match cli.command {
        Command::Solve => commands::cmd_solve(&ctx),
        Command::Certify => commands::cmd_certify(&ctx),
        Command::Simulate => commands::cmd_simulate(&ctx),
        Command::Verify => commands::cmd_verify(&ctx),
        Command::Compare => commands::cmd_compare(&ctx),
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
