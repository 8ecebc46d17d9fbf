use ccm_adapt_cli::commands::{self, GlobalOptions};
use ccm_adapt_cli::exit;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Adaptive geodesic control: simulation, metric verification and
/// geodesic solves driven by scenario files.
#[derive(Debug, Parser)]
#[command(name = "ccm-adapt", version, about)]
struct Cli {
    /// Directory for CSV, SVG and JSON artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also write an SVG chart of each simulated run.
    #[arg(long, global = true)]
    svg: bool,

    /// Print the configuration after overrides and exit.
    #[arg(long, global = true)]
    dump_effective_config: bool,

    /// Suppress progress and summary output.
    #[arg(long, short, global = true)]
    quiet: bool,

    /// Override a config value, e.g. `--set controller.lambda=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write its trajectory log.
    Simulate { config: PathBuf },
    /// Check the contraction, Killing, parameter-derivative and
    /// matched-invariance conditions on a grid.
    VerifyMetric { config: PathBuf },
    /// Solve one minimizing geodesic from `p` to `q`.
    Geodesic {
        config: PathBuf,
        #[arg(allow_hyphen_values = true)]
        p: String,
        #[arg(allow_hyphen_values = true)]
        q: String,
        /// Metric parameters; the initial extended-matched estimate by default.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
    },
    /// Simulate several scenarios concurrently.
    Batch {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "warn" }))
        .init();
    let opts = GlobalOptions {
        out: cli.out,
        svg: cli.svg,
        dump_effective_config: cli.dump_effective_config,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Simulate { config } => commands::simulate(config, &cli.overrides, &opts),
        Command::VerifyMetric { config } => commands::verify_metric(config, &cli.overrides, &opts),
        Command::Geodesic { config, p, q, theta } => {
            commands::geodesic(config, &cli.overrides, p, q, theta.as_deref(), &opts)
        }
        Command::Batch { configs } => commands::batch(configs, &cli.overrides, &opts),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    debug_assert!((exit::OK..=exit::OPTIMIZER_DIVERGED).contains(&code));
    ExitCode::from(code as u8)
}
