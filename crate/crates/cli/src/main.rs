use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robustroa::harness::{
    cmd_hj_brs, cmd_reproduce, cmd_simulate, cmd_synth, cmd_wmax, Figure, HarnessError, Scenario,
};

/// Robust ancillary control: CLF synthesis, HJ reachability, certified
/// disturbance bounds and closed-loop simulation.
#[derive(Debug, Parser)]
#[command(name = "robustroa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the CLF LMI and write a certificate per ancillary block.
    Synth(Common),
    /// Compute the HJ value function of every block with an `hj` section.
    HjBrs(Common),
    /// Certified disturbance bound and invariant level per block.
    Wmax(Common),
    /// Closed-loop run in the scenario's controller mode.
    Simulate(Common),
    /// Run a bundled scenario in both controller modes.
    Reproduce {
        /// fig3, fig4a or fig4c
        figure: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(c: &Common) -> Result<Scenario, HarnessError> {
    let sc = Scenario::load(&c.config)?;
    Ok(match c.seed {
        Some(s) => sc.with_seed(s),
        None => sc,
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let stdout = std::io::stdout();
    let mut log = stdout.lock();
    match cli.command {
        Command::Synth(c) => cmd_synth(&load(&c)?, &c.out, &mut log).map(drop),
        Command::HjBrs(c) => cmd_hj_brs(&load(&c)?, &c.out, &mut log).map(drop),
        Command::Wmax(c) => cmd_wmax(&load(&c)?, &c.out, &mut log).map(drop),
        Command::Simulate(c) => cmd_simulate(&load(&c)?, &c.out, &mut log).map(drop),
        Command::Reproduce { figure, seed, out } => {
            let fig: Figure = figure.parse()?;
            cmd_reproduce(fig, seed, &out, &mut log).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
