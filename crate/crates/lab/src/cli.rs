use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use contention_core::ProtocolSpec;

use crate::commands;
use crate::config::{CommandName, Format, MethodName, Prefix, RunConfig};
use crate::output::{json_bytes, write_atomic};
use crate::{Failure, ThreadPool};

#[derive(Debug, Parser)]
#[command(name = "contention", version, about = "Contention resolution games on a slotted collision channel")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Exact hitting times of the two-player chain and the best-response grid.
    AnalyzeTwoPlayer(Flags),
    /// Monte Carlo latency of a protocol profile.
    Simulate(Flags),
    /// Best deviation against each stationary two-player rule in a grid.
    ScanStationary(Flags),
    /// Compare a prefixed deviation with the protocol it deviates from.
    Lemma1(Flags),
    /// Blocking-slot probe against an age-based protocol.
    ProbeTheorem3(Flags),
    /// Quiet-prefix probe against a backoff protocol.
    ProbeBackoff(Flags),
    /// Efficiency experiment for the deadline protocol.
    DeadlineExperiment(Flags),
}

#[derive(Debug, clap::Args)]
struct Flags {
    /// Number of players.
    #[arg(long)]
    n: Option<usize>,
    /// Shrink factor of the deadline schedule, in (0, 1).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Slot cap per trial.
    #[arg(long)]
    horizon: Option<u64>,
    /// Root seed; a time-based one is chosen and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file, written atomically.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// JSON file holding a protocol every player runs.
    #[arg(long)]
    protocol: Option<PathBuf>,
    /// Deterministic prefix such as `0,1` or `01`.
    #[arg(long)]
    prefix: Option<Prefix>,
    #[arg(long, value_enum)]
    method: Option<MethodName>,
    /// Comma-separated probabilities.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Gain below which a deviation counts as indifferent.
    #[arg(long)]
    tolerance: Option<f64>,
}

impl Cmd {
    fn split(self) -> (CommandName, Flags) {
        match self {
            Cmd::AnalyzeTwoPlayer(f) => (CommandName::AnalyzeTwoPlayer, f),
            Cmd::Simulate(f) => (CommandName::Simulate, f),
            Cmd::ScanStationary(f) => (CommandName::ScanStationary, f),
            Cmd::Lemma1(f) => (CommandName::Lemma1, f),
            Cmd::ProbeTheorem3(f) => (CommandName::ProbeTheorem3, f),
            Cmd::ProbeBackoff(f) => (CommandName::ProbeBackoff, f),
            Cmd::DeadlineExperiment(f) => (CommandName::DeadlineExperiment, f),
        }
    }
}

fn load_protocol(path: &PathBuf) -> anyhow::Result<ProtocolSpec> {
    let text =
        std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read protocol {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid protocol {}: {e}", path.display()))
}

fn resolve(command: CommandName, flags: Flags) -> anyhow::Result<RunConfig> {
    let base = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = RunConfig {
        command: None,
        n: flags.n,
        beta: flags.beta,
        trials: flags.trials,
        horizon: flags.horizon,
        seed: flags.seed,
        workers: flags.workers,
        protocol: flags.protocol.as_ref().map(load_protocol).transpose()?,
        protocols: None,
        prefix: flags.prefix,
        method: flags.method,
        grid: flags.grid,
        tolerance: flags.tolerance,
        out: flags.out,
        format: flags.format,
    };
    let mut config = base.overlay(overrides);
    // A protocol flag replaces a per-player list from the file.
    if config.protocol.is_some() && flags.protocol.is_some() {
        config.protocols = None;
    }
    let mut config = config.resolve(command)?;
    config.seed.get_or_insert_with(time_seed);
    Ok(config)
}

fn time_seed() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (command, flags) = cli.command.split();
    match execute(command, flags) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn execute(command: CommandName, flags: Flags) -> Result<(), Failure> {
    let config = resolve(command, flags).map_err(Failure::Validation)?;
    let pool = config.workers.map_or_else(ThreadPool::available, ThreadPool::new);
    let out = commands::run(&config, &pool)?;

    let data = match config.format {
        Some(Format::Json) => Some(json_bytes(&config, &out.result).map_err(Failure::Runtime)?),
        Some(Format::Csv) => Some(out.table.to_csv().map_err(Failure::Runtime)?),
        None => None,
    };
    let summary = format!("seed: {}\n{}", config.seed.expect("resolved"), out.summary);
    match (&config.out, data) {
        (Some(path), Some(bytes)) => {
            write_atomic(path, &bytes)
                .map_err(|e| Failure::Runtime(anyhow::anyhow!("cannot write {}: {e}", path.display())))?;
            print!("{summary}");
            println!("wrote {}", path.display());
        }
        (None, Some(bytes)) => {
            eprint!("{summary}");
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| Failure::Runtime(anyhow::anyhow!("cannot write to stdout: {e}")))?;
        }
        (_, None) => print!("{summary}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"command": "deadline-experiment", "n": 50, "beta": 0.25, "trials": 10, "seed": 4}"#)
            .unwrap();
        let cli =
            Cli::try_parse_from(["contention", "deadline-experiment", "--config", path.to_str().unwrap(), "--n", "64"])
                .unwrap();
        let (cmd, flags) = cli.command.split();
        let c = resolve(cmd, flags).unwrap();
        assert_eq!((c.n, c.beta, c.trials, c.seed), (Some(64), Some(0.25), Some(10), Some(4)));
    }

    #[test]
    fn config_round_trips() {
        let cli =
            Cli::try_parse_from(["contention", "lemma1", "--prefix", "0,1", "--method", "monte-carlo", "--seed", "3"])
                .unwrap();
        let (cmd, flags) = cli.command.split();
        let c = resolve(cmd, flags).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.clone().resolve(CommandName::Lemma1).unwrap(), c);
    }

    #[test]
    fn unrelated_parameters_are_rejected() {
        let cli = Cli::try_parse_from(["contention", "simulate", "--beta", "0.5"]).unwrap();
        let (cmd, flags) = cli.command.split();
        assert!(resolve(cmd, flags).is_err());
    }
}
