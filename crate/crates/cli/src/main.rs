use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use levelsim::acceptance::{parse_selector, run_criterion, SuiteContext, DEFAULT_SEED};
use levelsim::Error;
use levelsim_cli::config::{parse_config_file, RunConfig};
use levelsim_cli::output::{reports_csv, write_run, OutputSet};
use levelsim_cli::run::{genealogy, oracle, simulate, ReplicateOutput};
use levelsim_cli::Exit;

#[derive(Parser)]
#[command(name = "levelsim", version, about = "Exact level-representation simulator for branching processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write `trajectories.csv`.
    Simulate(RunArgs),
    /// Run the counting-process oracle for a scenario and write `oracle.csv`.
    Oracle(RunArgs),
    /// Write ancestor-set sizes for a genealogy scenario to `genealogy.csv`.
    Genealogy(RunArgs),
    /// Run the acceptance criteria and write `reports.csv`.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Criteria to run: `all`, or ids and ranges such as `1,3-5`.
    #[arg(long, default_value = "all")]
    criteria: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate(a) => run_command(a, "trajectories.csv", simulate),
        Command::Oracle(a) => run_command(a, "oracle.csv", oracle),
        Command::Genealogy(a) => run_command(a, "genealogy.csv", genealogy),
        Command::Verify(a) => verify(a),
    };
    ExitCode::from(code as u8)
}

fn report(e: &Error) -> Exit {
    match e {
        Error::Config(list) => {
            eprintln!("invalid configuration:");
            for item in list {
                eprintln!("  - {item}");
            }
            Exit::BadConfig
        }
        Error::Unsupported(_) => {
            eprintln!("error: {e}");
            Exit::BadConfig
        }
        other => {
            eprintln!("error: {other}");
            Exit::Failed
        }
    }
}

fn run_command(args: RunArgs, file: &str, body: fn(&RunConfig) -> levelsim::Result<Vec<ReplicateOutput>>) -> Exit {
    let mut cfg = match parse_config_file(&args.config) {
        Ok(c) => c,
        Err(e) => return report(&e),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.replicates {
        if n == 0 {
            return report(&Error::Config(vec!["--replicates must be >= 1".into()]));
        }
        cfg.replicates = n;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = args.out {
        cfg.output = o;
    }
    let mut set = match OutputSet::new(&cfg.output) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", cfg.output.display());
            return Exit::Failed;
        }
    };
    let outputs = match body(&cfg) {
        Ok(o) => o,
        Err(e) => return report(&e),
    };
    if let Err(e) = write_run(&mut set, file, &outputs) {
        eprintln!("error: writing output: {e}");
        return Exit::Failed;
    }
    set.commit();
    eprintln!("wrote {} replicates to {}", outputs.len(), cfg.output.join(file).display());
    Exit::Ok
}

fn verify(args: VerifyArgs) -> Exit {
    let ids = match parse_selector(&args.criteria) {
        Ok(ids) => ids,
        Err(e) => return report(&e),
    };
    let mut set = match OutputSet::new(&args.out) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", args.out.display());
            return Exit::Failed;
        }
    };
    let ctx = SuiteContext { seed: args.seed, workers: args.workers };
    let mut results = Vec::new();
    for id in ids {
        match run_criterion(id, &ctx) {
            Ok(res) => {
                println!("{}", res.summary());
                for r in &res.reports {
                    println!("    {r}");
                }
                results.push(res);
            }
            Err(e) => return report(&e),
        }
    }
    let all_pass = results.iter().all(|r| r.pass());
    if let Err(e) = set.write("reports.csv", &reports_csv(results.iter().flat_map(|r| &r.reports))) {
        eprintln!("error: writing reports: {e}");
        return Exit::Failed;
    }
    set.commit();
    if all_pass {
        Exit::Ok
    } else {
        Exit::Failed
    }
}
