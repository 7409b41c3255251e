use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fakeinv_runner::commands::{self, Overrides, Outcome};
use fakeinv_runner::config::ConfigError;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        matches!(s, Switch::On)
    }
}

#[derive(Debug, Parser)]
#[command(name = "fakeinv", version, about = "Benchmarks, exact claim checks and training runs for fake-invariant features")]
struct Cli {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Benchmark and verification seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Keep (on) or drop (off) the fake-invariant branch.
    #[arg(long, global = true)]
    fake_branch: Option<Switch>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write training and shifted test datasets, the codebook and the config echo.
    Generate {
        /// Number of classes.
        #[arg(long)]
        k: Option<usize>,
        /// Also write the exact pooled joint table.
        #[arg(long)]
        exact: bool,
    },
    /// Run the exact claim suite; exits 1 if any claim fails.
    Verify {
        /// Threshold a quantity must exceed to count as strictly positive.
        #[arg(long)]
        tol: Option<f64>,
        /// Random instances per sampled claim.
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Train every method per seed and evaluate on ID and each shift.
    Train {
        /// Training seeds, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Read datasets written by `generate` instead of sampling in memory.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Extra selector-loss weights to train, comma separated.
        #[arg(long, value_delimiter = ',')]
        ablate_lambda: Option<Vec<f64>>,
        /// MI term state for the ablation: `off` also trains the alternating loop without it.
        #[arg(long)]
        ablate_mi: Option<Switch>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Merge training reports into one long-format CSV.
    Report {
        #[arg(required = true)]
        run_ids: Vec<String>,
        /// Destination; defaults to `<out>/report.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut o = Overrides {
        config: cli.config,
        seed: cli.seed,
        run_id: cli.run_id,
        fake_branch: cli.fake_branch.map(Into::into),
        ..Overrides::default()
    };
    match cli.command {
        Command::Generate { k, exact } => {
            o.num_classes = k;
            let cfg = commands::load_config(&o)?;
            commands::generate(&cfg, &cli.out.unwrap_or_else(|| "data".into()), exact)
        }
        Command::Verify { tol, instances, overwrite } => {
            o.tol = tol;
            o.instances = instances;
            let cfg = commands::load_config(&o)?;
            commands::verify(&cfg, &cli.out.unwrap_or_else(|| "runs".into()), overwrite)
        }
        Command::Train { seeds, data, ablate_lambda, ablate_mi, overwrite } => {
            o.seeds = seeds;
            o.ablate_lambda = ablate_lambda;
            o.ablate_mi = ablate_mi.map(|s| matches!(s, Switch::Off));
            let cfg = commands::load_config(&o)?;
            commands::train(&cfg, &cli.out.unwrap_or_else(|| "runs".into()), data.as_deref(), overwrite)
        }
        Command::Report { run_ids, csv } => {
            let out = cli.out.unwrap_or_else(|| "runs".into());
            let dest = csv.unwrap_or_else(|| out.join("report.csv"));
            commands::report(&out, &run_ids, &dest)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            ExitCode::from(if outcome.claims_failed { 1 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<ConfigError>().is_some() { 2 } else { 3 })
        }
    }
}
