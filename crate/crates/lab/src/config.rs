//! Run configuration: a JSON file, command-line overrides, and per-command
//! defaults. The resolved config is echoed into every JSON output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use contention_core::protocol::DeadlineSchedule;
use contention_core::ProtocolSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    AnalyzeTwoPlayer,
    Simulate,
    ScanStationary,
    Lemma1,
    ProbeTheorem3,
    ProbeBackoff,
    DeadlineExperiment,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::AnalyzeTwoPlayer => "analyze-two-player",
            CommandName::Simulate => "simulate",
            CommandName::ScanStationary => "scan-stationary",
            CommandName::Lemma1 => "lemma1",
            CommandName::ProbeTheorem3 => "probe-theorem3",
            CommandName::ProbeBackoff => "probe-backoff",
            CommandName::DeadlineExperiment => "deadline-experiment",
        }
    }

    /// Parameters the command reads besides `seed`, `workers`, `out` and `format`.
    fn parameters(self) -> &'static [&'static str] {
        match self {
            CommandName::AnalyzeTwoPlayer => &[],
            CommandName::Simulate => &["n", "trials", "horizon", "protocol", "protocols"],
            CommandName::ScanStationary => &["grid", "tolerance"],
            CommandName::Lemma1 => &["n", "trials", "horizon", "protocol", "prefix", "method"],
            CommandName::ProbeTheorem3 | CommandName::ProbeBackoff => &["n", "trials", "horizon", "protocol"],
            CommandName::DeadlineExperiment => &["n", "beta", "trials"],
        }
    }
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Analytic,
    MonteCarlo,
}

/// A 0/1 prefix written as `0,1,1` or `011`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Prefix(pub Vec<u8>);

impl Prefix {
    pub fn bits(&self) -> Vec<bool> {
        self.0.iter().map(|&b| b == 1).collect()
    }

    pub fn label(bits: &[bool]) -> String {
        bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl FromStr for Prefix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .filter(|c| !matches!(c, ',' | ' '))
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(format!("prefix entries must be 0 or 1, found {other:?}")),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(Prefix)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// One protocol for every player.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSpec>,
    /// One protocol per player.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocols: Option<Vec<ProtocolSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<Prefix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
    }

    /// Fields set in `other` win.
    pub fn overlay(mut self, other: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            command, n, beta, trials, horizon, seed, workers, protocol, protocols, prefix, method, grid, tolerance,
            out, format
        );
        self
    }

    fn set_fields(&self) -> Vec<&'static str> {
        let mut set = Vec::new();
        macro_rules! check {
            ($($f:ident),*) => { $( if self.$f.is_some() { set.push(stringify!($f)); } )* };
        }
        check!(n, beta, trials, horizon, protocol, protocols, prefix, method, grid, tolerance);
        set
    }

    /// Checks every parameter of `command` and fills in defaults. The seed
    /// is left to the caller.
    pub fn resolve(mut self, command: CommandName) -> anyhow::Result<Self> {
        if let Some(c) = self.command {
            if c != command {
                anyhow::bail!("config is for `{c}` but `{command}` was requested");
            }
        }
        self.command = Some(command);
        if let Some(field) = self.set_fields().into_iter().find(|f| !command.parameters().contains(f)) {
            anyhow::bail!("`{field}` is not a parameter of `{command}`");
        }
        if self.workers == Some(0) {
            anyhow::bail!("workers must be at least 1");
        }
        if self.trials == Some(0) {
            anyhow::bail!("trials must be at least 1");
        }
        if self.horizon == Some(0) {
            anyhow::bail!("horizon must be at least 1");
        }

        match command {
            CommandName::AnalyzeTwoPlayer => {}
            CommandName::Simulate => {
                if self.protocol.is_some() && self.protocols.is_some() {
                    anyhow::bail!("give either `protocol` or `protocols`, not both");
                }
                if let Some(list) = &self.protocols {
                    match self.n {
                        Some(n) if n != list.len() => {
                            anyhow::bail!("n = {n} but {} protocols were given", list.len())
                        }
                        _ => self.n = Some(list.len()),
                    }
                } else {
                    self.protocol.get_or_insert_with(ProtocolSpec::two_player_equilibrium);
                    self.n.get_or_insert(2);
                }
                self.trials.get_or_insert(100_000);
                self.horizon.get_or_insert(default_horizon(self.n.unwrap_or(2)));
            }
            CommandName::ScanStationary => {
                self.grid.get_or_insert_with(default_scan_grid);
                self.tolerance.get_or_insert(1e-9);
            }
            CommandName::Lemma1 => {
                self.protocol.get_or_insert_with(ProtocolSpec::two_player_equilibrium);
                self.n.get_or_insert(2);
                let method = *self.method.get_or_insert(MethodName::Analytic);
                if method == MethodName::MonteCarlo {
                    self.trials.get_or_insert(100_000);
                    self.horizon.get_or_insert(default_horizon(self.n.unwrap_or(2)));
                } else if self.trials.is_some() || self.horizon.is_some() {
                    anyhow::bail!("`trials` and `horizon` only apply to the monte-carlo method");
                }
            }
            CommandName::ProbeTheorem3 => {
                self.protocol.get_or_insert_with(default_age_based);
                self.n.get_or_insert(2);
                self.trials.get_or_insert(100_000);
                self.horizon.get_or_insert(default_horizon(self.n.unwrap_or(2)));
            }
            CommandName::ProbeBackoff => {
                self.protocol.get_or_insert_with(|| ProtocolSpec::binary_exponential_backoff(32));
                self.n.get_or_insert(2);
                self.trials.get_or_insert(100_000);
                self.horizon.get_or_insert(default_horizon(self.n.unwrap_or(2)));
            }
            CommandName::DeadlineExperiment => {
                let n = *self.n.get_or_insert(100);
                let beta = *self.beta.get_or_insert(0.5);
                self.trials.get_or_insert(10_000);
                DeadlineSchedule::new(n, beta)?;
            }
        }
        if matches!(self.n, Some(0)) {
            anyhow::bail!("n must be at least 1");
        }
        if let Some(grid) = &self.grid {
            if let Some(p) = grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
                anyhow::bail!("grid points must lie in (0, 1), got {p}");
            }
        }
        if let Some(prefix) = &self.prefix {
            if prefix.0.iter().any(|&b| b > 1) {
                anyhow::bail!("prefix entries must be 0 or 1");
            }
        }
        if let Some(tol) = self.tolerance {
            if tol.is_nan() || tol < 0.0 {
                anyhow::bail!("tolerance must be non-negative, got {tol}");
            }
        }
        if let Some(out) = &self.out {
            let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !parent.is_dir() {
                anyhow::bail!("output directory {} does not exist", parent.display());
            }
            if self.format.is_none() {
                let csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
                self.format = Some(if csv { Format::Csv } else { Format::Json });
            }
        }
        Ok(self)
    }

    pub fn command(&self) -> CommandName {
        self.command.expect("resolved configs carry their command")
    }
}

/// Horizon used when none is given: generous enough that truncation is
/// negligible for the protocols the commands default to.
pub fn default_horizon(n: usize) -> u64 {
    contention_core::channel::default_horizon(n).max(10_000)
}

/// `0.05, 0.10, …, 0.95` and `2/3`, ascending.
pub fn default_scan_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
    grid.push(2.0 / 3.0);
    grid.sort_by(f64::total_cmp);
    grid
}

/// Transmits with probability 1/2 in slot 1, surely in slot 2, then 1/2 per slot.
pub fn default_age_based() -> ProtocolSpec {
    ProtocolSpec::age_based(vec![0.5, 1.0], 0.5).expect("valid probabilities")
}
