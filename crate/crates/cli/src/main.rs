//! `plr-chain`: experiment runner for the XY chain in a decaying random field.
//!
//! Each experiment subcommand reads one config file, runs the disorder
//! ensemble and writes `<out>/<experiment>.csv` plus a JSON sidecar. See the
//! `plr_chain::experiment` docs for the config keys and CSV columns.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use plr_chain::experiment::{self, Experiment, RawSpec};
use plr_chain::oracle::suite::{run_suite, SuiteParams};
use plr_chain::EnsembleRunner;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "plr-chain", version, about = "XY chain in a decaying random field via free fermions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Disorder-averaged eigenfunction correlator E[Q(j,k)] over k_list.
    Correlator(RunArgs),
    /// Disorder-averaged position moment |X|^p(t).
    Transport(RunArgs),
    /// PLR(a,b) witness over nested time grids.
    Plr(RunArgs),
    /// Number of up-spins in a site set S after a product-state quench.
    Number(RunArgs),
    /// Power-law fit of E[Q(1,k)] and the kappa consistency report.
    KappaFit(RunArgs),
    /// Transport exponent beta(p) for each lambda in lambda_list.
    BetaVsLambda(RunArgs),
    /// Parse and validate a config, printing it with all defaults resolved.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Brute-force cross-checks of the free-fermion formulas; prints a table.
    OracleSuite,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (TOML, or JSON such as a previous run's sidecar).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Worker threads; overrides PLR_THREADS. Results do not depend on it.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Print the resolved config and exit without computing.
    #[arg(long)]
    dry_run: bool,
}

fn threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("PLR_THREADS") {
            Ok(v) => v.trim().parse().with_context(|| format!("PLR_THREADS={v:?} is not a thread count"))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        bail!("thread count must be at least 1");
    }
    Ok(n)
}

fn load(path: &Path, wanted: Option<Experiment>) -> Result<experiment::ExperimentSpec> {
    let spec = RawSpec::read(path)
        .and_then(|raw| raw.resolve(wanted))
        .with_context(|| format!("config {}", path.display()))?;
    Ok(spec)
}

fn run_experiment(kind: Experiment, args: RunArgs) -> Result<()> {
    let spec = load(&args.config, Some(kind))?;
    if args.dry_run {
        print!("{}", spec.to_toml());
        println!("# dry run: {} rows expected, nothing written", spec.expected_rows()?);
        return Ok(());
    }
    let workers = threads(args.threads)?;
    let runner = EnsembleRunner::new(workers)?;
    let start = Instant::now();
    let output = experiment::run(&spec, &runner)?;
    let wall = start.elapsed().as_secs_f64();
    let [csv, json] = experiment::write_outputs(&args.out, &spec, &output, workers, wall)?;
    for note in &output.notes {
        println!("{note}");
    }
    println!("wrote {} ({} rows)", csv.display(), output.table.rows.len());
    println!("wrote {} (sidecar, {wall:.2} s on {workers} threads)", json.display());
    Ok(())
}

fn oracle_suite() -> Result<bool> {
    let report = run_suite(&SuiteParams::default())?;
    print!("{}", report.render_table());
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Correlator(a) => run_experiment(Experiment::Correlator, a),
        Command::Transport(a) => run_experiment(Experiment::Transport, a),
        Command::Plr(a) => run_experiment(Experiment::Plr, a),
        Command::Number(a) => run_experiment(Experiment::Number, a),
        Command::KappaFit(a) => run_experiment(Experiment::KappaFit, a),
        Command::BetaVsLambda(a) => run_experiment(Experiment::BetaVsLambda, a),
        Command::Validate { config } => load(&config, None).map(|spec| print!("{}", spec.to_toml())),
        Command::OracleSuite => match oracle_suite() {
            Ok(true) => Ok(()),
            Ok(false) => Err(anyhow::anyhow!("oracle suite: some checks failed")),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
