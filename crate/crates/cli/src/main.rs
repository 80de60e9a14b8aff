use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ufd_cli::{compare, moser, run, CliError, MoserArgs, Overrides};

#[derive(Parser)]
#[command(name = "ufd", version, about = "Weighted ultrafast diffusion experiments")]
struct Cli {
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Record every k-th step.
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Seed for the random initial-data preset.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment.
    Run { config: PathBuf },
    /// Run two configs that differ only in initial data and report L1 contraction.
    Compare { a: PathBuf, b: PathBuf },
    /// Print the Moser exponent schedule and the Harnack exponents.
    Moser {
        #[arg(long)]
        d: u32,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        q0: f64,
        /// Sobolev exponent, required for d <= 2.
        #[arg(long)]
        p_star: Option<f64>,
        #[arg(long, default_value_t = 1e-12)]
        tail_tol: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides { out: cli.out.clone(), stride: cli.stride, seed: cli.seed };
    let result: Result<i32, CliError> = match &cli.command {
        Command::Run { config } => run(config, &ov).map(|c| c.exit_code()),
        Command::Compare { a, b } => compare(a, b, &ov).map(|c| c.exit_code()),
        Command::Moser { d, r, q0, p_star, tail_tol } => {
            let args = MoserArgs { d: *d, r: *r, q0: *q0, p_star: *p_star, tail_tol: *tail_tol };
            moser(&args, cli.out.as_deref()).map(|_| 0)
        }
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("ufd: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
