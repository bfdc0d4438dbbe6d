use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use essdsr::report::{self, Comparison, RunReport};
use essdsr::scenario::ScenarioError;
use essdsr::{Protocol, Scenario};

/// Packet-level simulator comparing DSR with energy saving and survival DSR.
#[derive(Parser)]
#[command(name = "essdsr-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one protocol and write report, trace and CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the scenario's protocol.
        #[arg(long)]
        protocol: Option<Protocol>,
    },
    /// Run both protocols with the same seed and compare them.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Check a scenario file and exit.
    Validate {
        #[arg(long, value_name = "PATH")]
        scenario: PathBuf,
    },
    /// Print the built-in paper-default scenario as TOML.
    EmitDefaultScenario {
        /// Write to this file instead of stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a built-in scenario.
    #[arg(long, value_name = "PATH", default_value = "paper-default")]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, value_name = "SECS")]
    horizon: Option<f64>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

enum Failure {
    Scenario(ScenarioError),
    Io(PathBuf, std::io::Error),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Scenario(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(ScenarioError::Io { path, source })) => {
            eprintln!("error: cannot read {path}: {source}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Scenario(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Io(path, e)) => {
            eprintln!("error: cannot write {}: {e}", path.display());
            ExitCode::from(EXIT_IO)
        }
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(&common.scenario)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(h) = common.horizon {
        s.horizon = h;
    }
    s.validate()?;
    Ok(s)
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(path.to_path_buf(), e)
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { common, protocol } => {
            let mut s = load(&common)?;
            if let Some(p) = protocol {
                s.protocol = p;
            }
            let result = s.run();
            let rep = RunReport::new(&s, &result);
            report::write_run(&common.out, &rep, &result).map_err(io_at(&common.out))?;
            println!(
                "{} lifetime {:.3} s ({:?}), report in {}",
                rep.protocol,
                rep.network_lifetime.value,
                rep.network_lifetime.cause,
                common.out.display()
            );
        }
        Command::Compare { common } => {
            let s = load(&common)?;
            let (dsr, ess) = s.run_both();
            let cmp = Comparison::new(RunReport::new(&s, &dsr), RunReport::new(&s, &ess));
            report::write_comparison(&common.out, &cmp, &dsr, &ess).map_err(io_at(&common.out))?;
            print!("{}", cmp.summary());
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!(
                "{}: ok ({} nodes, {} flows)",
                scenario.display(),
                s.nodes.len(),
                s.flows.len()
            );
        }
        Command::EmitDefaultScenario { out } => {
            let text = Scenario::paper_default().to_toml();
            match out {
                Some(path) => std::fs::write(&path, text).map_err(io_at(&path))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
