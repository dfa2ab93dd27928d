use std::path::PathBuf;
use std::process::ExitCode;

use bellreg_cli::config::{Command, ModelChoice, Overrides, PriorConfig};
use bellreg_cli::{load_config, run, EXIT_UNCONVERGED};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bellreg", version, about = "Bayesian Bell regression for overdispersed counts")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Fit the chosen model(s) and write posterior summaries and criteria
    Fit,
    /// Run the replicated simulation study on synthetic Bell data
    Simulate,
    /// Chi-square goodness of fit of the Bell and Poisson laws to the counts
    Gof,
    /// Fit Bell and Poisson, test goodness of fit and compare criteria
    Compare,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Fit => Command::Fit,
            Sub::Simulate => Command::Simulate,
            Sub::Gof => Command::Gof,
            Sub::Compare => Command::Compare,
        }
    }
}

#[derive(Args)]
struct Opts {
    /// CSV file with a header row and a count column `y`
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// JSON run configuration; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelChoice>,
    /// gprior or flat
    #[arg(long, global = true)]
    prior: Option<PriorConfig>,
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long, global = true)]
    burnin: Option<usize>,
    #[arg(long, global = true)]
    thin: Option<usize>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replications per simulation cell
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Simulation sample sizes, comma separated
    #[arg(long, global = true, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Simulation design widths (intercept included), comma separated
    #[arg(long, global = true, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    /// Exit 0 even when a chain fails the R-hat gate
    #[arg(long, global = true)]
    allow_unconverged: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let o = cli.opts;
    let overrides = Overrides {
        data: o.data,
        model: o.model,
        prior: o.prior,
        iters: o.iters,
        burnin: o.burnin,
        thin: o.thin,
        chains: o.chains,
        seed: o.seed,
        out: o.out,
        reps: o.reps,
        n: o.n,
        p: o.p,
        allow_unconverged: o.allow_unconverged,
    };
    let config = match load_config(o.config.as_deref(), cli.command.into(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    match run(&config) {
        Ok(out) => {
            for fit in &out.report.fits {
                for w in &fit.warnings {
                    eprintln!("warning: {} model: {w}", fit.model);
                }
            }
            let code = out.exit_code();
            if code == EXIT_UNCONVERGED {
                eprintln!(
                    "error: R-hat above {} for at least one fit; rerun longer or pass --allow-unconverged",
                    config.rhat_threshold
                );
            }
            eprintln!("wrote {}", config.output_dir.join("report.json").display());
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
