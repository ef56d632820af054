use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qbbgky::cli_io;

#[derive(Parser)]
#[command(name = "qbbgky", version, about = "Correlation-function hierarchy for bosonic fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compile the hierarchy equations
    Derive(Io),
    /// Integrate the closed hierarchy and write snapshots, conservation and observables
    Run(Io),
    /// Exact evolution on a truncated Fock space
    Oracle(Io),
    /// Hierarchy against oracle on a shared time grid
    Compare(Io),
    /// Observable tables from existing snapshots, integrating first when there are none
    Observe(Io),
}

fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("QBBGKY_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("QBBGKY_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let (name, io) = match &cli.command {
        Command::Derive(io) => ("derive", io),
        Command::Run(io) => ("run", io),
        Command::Oracle(io) => ("oracle", io),
        Command::Compare(io) => ("compare", io),
        Command::Observe(io) => ("observe", io),
    };
    let result = cli_io::load_config(&io.config).and_then(|cfg| match &cli.command {
        Command::Derive(_) => cli_io::derive(&cfg, &io.out).map(|r| format!("{} programs, {} terms", r.programs, r.terms)),
        Command::Run(_) => cli_io::run(&cfg, &io.out).map(|r| {
            format!(
                "{} samples to t = {}; max number drift {:e}, max energy drift {:e}",
                r.samples, r.final_time, r.max_number_drift, r.max_energy_drift
            )
        }),
        Command::Oracle(_) => cli_io::oracle(&cfg, &io.out).map(|r| format!("{} oracle samples", r.states.len())),
        Command::Compare(_) => cli_io::compare(&cfg, &io.out).map(|r| {
            format!(
                "max error {:e} (final {:e}) over orders m+n < {}",
                r.summary.max_error, r.summary.final_error, r.summary.order_cap
            )
        }),
        Command::Observe(_) => cli_io::observe(&cfg, &io.out).map(|n| format!("observables for {n} samples")),
    });
    match result {
        Ok(msg) => {
            println!("{name}: {msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{name}: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
