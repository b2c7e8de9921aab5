use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use convexmc_cli::{cmd_baseline, cmd_plan, cmd_run, cmd_spectral, CliError, Format, InnerBody, PlanRequest};

#[derive(Parser)]
#[command(name = "convexmc", version, about = "MCMC integration over convex bodies with certified error bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the burn-in and error bound of a certified sampler plan.
    Plan {
        #[command(subcommand)]
        scenario: PlanScenario,
    },
    /// Run a replicated experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        format: OutFormat,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Spectral report of a reversible transition matrix (file path or inline "0.7,0.3;0.3,0.7").
    Spectral {
        input: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Acceptance statistics of rejection sampling from the outer ball r B_d.
    Baseline {
        #[arg(long, value_enum, default_value_t = Inner::Ball)]
        body: Inner,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum PlanScenario {
    /// Hit-and-run on a body between B_d and r B_d.
    Har {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: f64,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        n: Vec<u64>,
    },
    /// Independent Metropolis for densities with 1 <= rho <= C.
    IndepMh {
        #[arg(long = "C")]
        c: f64,
        #[arg(long)]
        vol: f64,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        n: Vec<u64>,
    },
    /// Lazy ball walk for alpha-log-Lipschitz log-concave densities on B_d.
    BallWalk {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        d: usize,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        n: Vec<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Inner {
    Ball,
    Box,
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Plan { scenario } => {
            let (req, ns) = match scenario {
                PlanScenario::Har { d, r, n } => (PlanRequest::HitAndRun { d, r }, n),
                PlanScenario::IndepMh { c, vol, n } => (PlanRequest::IndependentMh { c, vol }, n),
                PlanScenario::BallWalk { alpha, d, n } => (PlanRequest::BallWalk { alpha, d }, n),
            };
            cmd_plan(&req, &ns)
        }
        Command::Run { config, seed, out, format, threads } => {
            let format = match format {
                OutFormat::Json => Format::Json,
                OutFormat::Csv => Format::Csv,
            };
            cmd_run(&config, seed, out.as_deref(), format, threads)
        }
        Command::Spectral { input, tol } => cmd_spectral(&input, tol),
        Command::Baseline { body, d, r, n, seed } => {
            let inner = match body {
                Inner::Ball => InnerBody::Ball,
                Inner::Box => InnerBody::Box,
            };
            cmd_baseline(inner, d, r, n, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
