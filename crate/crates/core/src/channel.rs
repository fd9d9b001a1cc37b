//! Slotted collision channel.
//!
//! # Randomness
//!
//! Every trial draws from its own ChaCha8 stream: the generator is seeded
//! from the root seed with `seed_from_u64` and the trial index selects the
//! stream ([`trial_rng`]). [`run_trial`] with seed `s` is trial 0 of any
//! estimator run with root seed `s`.
//!
//! In the per-player engine each pending player consumes exactly one uniform
//! draw per slot, in ascending player order, and transmits iff the draw is
//! below its decision probability. Exited players draw nothing from the
//! trial stream; when ghost flips are requested they draw from a separate
//! stream so outcomes are unaffected.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{fold_trials, Executor};
use crate::protocol::{ProtocolSpec, TransmissionHistory};

const GHOST_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Default horizon for general runs: 50 slots per player.
pub fn default_horizon(players: usize) -> u64 {
    50 * players as u64
}

pub fn trial_rng(root: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(trial);
    rng
}

fn ghost_rng(root: u64, trial: u64) -> ChaCha8Rng {
    trial_rng(root ^ GHOST_SALT, trial)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotOutcome {
    Idle,
    Success(usize),
    Collision(Vec<usize>),
}

impl SlotOutcome {
    pub fn classify(transmitters: &[usize]) -> Self {
        match transmitters {
            [] => SlotOutcome::Idle,
            [only] => SlotOutcome::Success(*only),
            many => SlotOutcome::Collision(many.to_vec()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SuccessTime {
    At(u64),
    /// No success up to and including the horizon.
    Unfinished(u64),
}

impl SuccessTime {
    pub fn slot(self) -> Option<u64> {
        match self {
            SuccessTime::At(t) => Some(t),
            SuccessTime::Unfinished(_) => None,
        }
    }

    /// `min(T, horizon)`.
    pub fn truncated(self) -> u64 {
        match self {
            SuccessTime::At(t) | SuccessTime::Unfinished(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialResult {
    pub success_times: Vec<SuccessTime>,
    pub slots_elapsed: u64,
}

impl TrialResult {
    fn unfinished(players: usize, horizon: u64) -> Self {
        Self { success_times: vec![SuccessTime::Unfinished(horizon); players], slots_elapsed: 0 }
    }

    pub fn finished(&self) -> usize {
        self.success_times.iter().filter(|t| t.slot().is_some()).count()
    }

    pub fn pending(&self) -> usize {
        self.success_times.len() - self.finished()
    }

    pub fn all_finished(&self) -> bool {
        self.pending() == 0
    }

    /// `min(max_i T_i, horizon)`.
    pub fn max_truncated(&self) -> u64 {
        self.success_times.iter().map(|t| t.truncated()).max().unwrap_or(0)
    }
}

/// Everything a recorded run keeps.
#[derive(Debug, Clone)]
pub struct RecordedTrial {
    pub result: TrialResult,
    pub outcomes: Vec<SlotOutcome>,
    /// Pending players after each simulated slot.
    pub pending_after: Vec<u32>,
    pub histories: Vec<TransmissionHistory>,
}

fn check_run(players: usize, horizon: u64) -> Result<()> {
    if players == 0 {
        return Err(Error::InvalidPlayerCount { got: 0, reason: "at least one player is required" });
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(())
}

#[derive(Default)]
struct Sinks<'a> {
    pending_after: Option<&'a mut Vec<u32>>,
    outcomes: Option<&'a mut Vec<SlotOutcome>>,
    ghost: Option<&'a mut ChaCha8Rng>,
}

fn simulate(
    profile: &[ProtocolSpec],
    horizon: u64,
    rng: &mut ChaCha8Rng,
    mut sinks: Sinks<'_>,
) -> (TrialResult, Vec<TransmissionHistory>) {
    let n = profile.len();
    let mut result = TrialResult::unfinished(n, horizon);
    let mut histories: Vec<TransmissionHistory> = (0..n).map(|_| TransmissionHistory::with_capacity(16)).collect();
    let mut pending = vec![true; n];
    let mut remaining = n;
    let mut transmitters: Vec<usize> = Vec::with_capacity(n);

    let mut t = 0;
    while t < horizon && remaining > 0 {
        t += 1;
        transmitters.clear();
        for i in 0..n {
            if pending[i] {
                let p = profile[i].rule(&histories[i], t);
                let x = rng.gen::<f64>() < p;
                histories[i].push(x);
                if x {
                    transmitters.push(i);
                }
            } else if let Some(ghost) = sinks.ghost.as_deref_mut() {
                let p = profile[i].rule(&histories[i], t);
                histories[i].push(ghost.gen::<f64>() < p);
            }
        }
        if let [winner] = transmitters[..] {
            pending[winner] = false;
            remaining -= 1;
            result.success_times[winner] = SuccessTime::At(t);
        }
        if let Some(out) = sinks.outcomes.as_deref_mut() {
            out.push(SlotOutcome::classify(&transmitters));
        }
        if let Some(trace) = sinks.pending_after.as_deref_mut() {
            trace.push(remaining as u32);
        }
    }
    result.slots_elapsed = t;
    (result, histories)
}

/// One game: every pending player transmits independently with its decision
/// probability until all have succeeded or `horizon` slots have passed.
pub fn run_trial(profile: &[ProtocolSpec], horizon: u64, seed: u64) -> Result<TrialResult> {
    check_run(profile.len(), horizon)?;
    Ok(simulate(profile, horizon, &mut trial_rng(seed, 0), Sinks::default()).0)
}

/// As [`run_trial`], plus the number of pending players after every slot.
pub fn run_trial_traced(profile: &[ProtocolSpec], horizon: u64, seed: u64) -> Result<(TrialResult, Vec<u32>)> {
    check_run(profile.len(), horizon)?;
    let mut trace = Vec::new();
    let sinks = Sinks { pending_after: Some(&mut trace), ..Sinks::default() };
    let (result, _) = simulate(profile, horizon, &mut trial_rng(seed, 0), sinks);
    Ok((result, trace))
}

/// Full log of one game. With `ghost_flips`, players keep drawing their
/// decisions after they exit (from a separate stream) so their histories
/// cover every slot; outcomes are identical either way.
pub fn run_trial_recorded(
    profile: &[ProtocolSpec],
    horizon: u64,
    seed: u64,
    ghost_flips: bool,
) -> Result<RecordedTrial> {
    check_run(profile.len(), horizon)?;
    let mut pending_after = Vec::new();
    let mut outcomes = Vec::new();
    let mut ghost = ghost_rng(seed, 0);
    let sinks = Sinks {
        pending_after: Some(&mut pending_after),
        outcomes: Some(&mut outcomes),
        ghost: ghost_flips.then_some(&mut ghost),
    };
    let (result, histories) = simulate(profile, horizon, &mut trial_rng(seed, 0), sinks);
    Ok(RecordedTrial { result, outcomes, pending_after, histories })
}

/// Trial `trial` of a run with root seed `root`.
pub fn run_indexed_trial(profile: &[ProtocolSpec], horizon: u64, root: u64, trial: u64) -> TrialResult {
    simulate(profile, horizon, &mut trial_rng(root, trial), Sinks::default()).0
}

pub(crate) fn run_indexed_trial_traced(
    profile: &[ProtocolSpec],
    horizon: u64,
    root: u64,
    trial: u64,
    trace: &mut Vec<u32>,
) -> TrialResult {
    let sinks = Sinks { pending_after: Some(trace), ..Sinks::default() };
    simulate(profile, horizon, &mut trial_rng(root, trial), sinks).0
}

/// Probability that exactly one of `r` players transmits when each does so
/// independently with probability `q`: `r q (1 - q)^(r - 1)`.
pub fn success_probability(r: usize, q: f64) -> f64 {
    if r == 0 {
        return 0.0;
    }
    r as f64 * q * libm::pow(1.0 - q, (r - 1) as f64)
}

/// Game in which all `n` players run the same age-based protocol.
///
/// Players are exchangeable, so a slot succeeds with probability
/// [`success_probability`]`(r, q)` and the winner is uniform among the `r`
/// pending players. One draw decides the slot and a second picks the winner,
/// which makes large games cost O(slots) instead of O(n · slots).
///
/// Returns the result and the pending count after each slot in `observe`
/// (ascending).
pub fn run_exchangeable_trial(
    protocol: &ProtocolSpec,
    n: usize,
    horizon: u64,
    rng: &mut ChaCha8Rng,
    observe: &[u64],
) -> Result<(TrialResult, Vec<u32>)> {
    check_run(n, horizon)?;
    if !protocol.is_age_based() {
        return Err(Error::Unsupported { operation: "exchangeable simulation", class: protocol.class().name() });
    }
    let mut result = TrialResult::unfinished(n, horizon);
    let mut pending: Vec<usize> = (0..n).collect();
    let mut observed = Vec::with_capacity(observe.len());
    let mut next_obs = observe.iter().peekable();

    let mut t = 0;
    while t < horizon && !pending.is_empty() {
        t += 1;
        let q = protocol.age_probability(t).unwrap_or(1.0);
        if rng.gen::<f64>() < success_probability(pending.len(), q) {
            let winner = pending.swap_remove(rng.gen_range(0..pending.len()));
            result.success_times[winner] = SuccessTime::At(t);
        }
        while next_obs.next_if(|&&s| s <= t).is_some() {
            observed.push(pending.len() as u32);
        }
    }
    result.slots_elapsed = t;
    // Observation points past the end of the game.
    let tail = pending.len() as u32;
    observed.extend(next_obs.map(|_| tail));
    Ok((result, observed))
}

/// Integer moments; merging is exact and order-independent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntMoments {
    pub count: u64,
    pub sum: i128,
    pub sum_sq: u128,
}

impl IntMoments {
    pub fn push(&mut self, x: i64) {
        self.count += 1;
        self.sum += i128::from(x);
        self.sum_sq += (i128::from(x) * i128::from(x)) as u128;
    }

    pub fn merge(&mut self, other: &IntMoments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum as f64 / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mean = self.mean();
        ((self.sum_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        libm::sqrt(self.variance() / self.count as f64)
    }
}

/// Quantile levels reported for `max_i T_i`.
pub const QUANTILE_LEVELS: [f64; 5] = [0.5, 0.9, 0.99, 0.999, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Quantile {
    pub level: f64,
    pub value: u64,
}

/// Nearest-rank quantiles from an exact histogram.
pub fn histogram_quantiles(hist: &BTreeMap<u64, u64>, levels: &[f64]) -> Vec<Quantile> {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return Vec::new();
    }
    levels
        .iter()
        .map(|&level| {
            let rank = (libm::ceil(level * total as f64) as u64).clamp(1, total);
            let mut seen = 0;
            let value = hist
                .iter()
                .find(|(_, &c)| {
                    seen += c;
                    seen >= rank
                })
                .map(|(&v, _)| v)
                .unwrap_or(0);
            Quantile { level, value }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlayerLatency {
    pub completion_prob: f64,
    pub truncated_mean: f64,
    pub stderr: f64,
}

/// Monte Carlo summary. Unfinished players count as `horizon` in every
/// mean; `completion_prob` says how much that truncation matters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyStats {
    pub players: usize,
    pub trials: u64,
    pub horizon: u64,
    pub base_seed: u64,
    /// Fraction of (player, trial) pairs finished by the horizon.
    pub completion_prob: f64,
    /// Mean of `min(T_i, horizon)` over all (player, trial) pairs.
    pub truncated_mean: f64,
    pub truncated_mean_stderr: f64,
    pub per_player: Vec<PlayerLatency>,
    /// Quantiles of `min(max_i T_i, horizon)` over trials.
    pub max_latency_quantiles: Vec<Quantile>,
    /// Mean pending count after each slot (only when tracing was requested).
    pub mean_pending_by_slot: Option<Vec<f64>>,
}

#[derive(Default)]
struct LatencyAcc {
    all: IntMoments,
    per_player: Vec<IntMoments>,
    finished: Vec<u64>,
    max_hist: BTreeMap<u64, u64>,
    pending_sums: Vec<u64>,
}

impl LatencyAcc {
    fn add(&mut self, result: &TrialResult, trace: Option<&[u32]>) {
        let n = result.success_times.len();
        if self.per_player.len() < n {
            self.per_player.resize(n, IntMoments::default());
            self.finished.resize(n, 0);
        }
        for (i, t) in result.success_times.iter().enumerate() {
            let x = t.truncated() as i64;
            self.all.push(x);
            self.per_player[i].push(x);
            if t.slot().is_some() {
                self.finished[i] += 1;
            }
        }
        *self.max_hist.entry(result.max_truncated()).or_default() += 1;
        if let Some(trace) = trace {
            if self.pending_sums.len() < trace.len() {
                self.pending_sums.resize(trace.len(), 0);
            }
            for (sum, &c) in self.pending_sums.iter_mut().zip(trace) {
                *sum += u64::from(c);
            }
        }
    }

    fn merge(&mut self, other: LatencyAcc) {
        self.all.merge(&other.all);
        if self.per_player.len() < other.per_player.len() {
            self.per_player.resize(other.per_player.len(), IntMoments::default());
            self.finished.resize(other.finished.len(), 0);
        }
        for (i, m) in other.per_player.iter().enumerate() {
            self.per_player[i].merge(m);
            self.finished[i] += other.finished[i];
        }
        for (k, v) in other.max_hist {
            *self.max_hist.entry(k).or_default() += v;
        }
        if self.pending_sums.len() < other.pending_sums.len() {
            self.pending_sums.resize(other.pending_sums.len(), 0);
        }
        for (a, b) in self.pending_sums.iter_mut().zip(other.pending_sums) {
            *a += b;
        }
    }
}

fn check_estimate(profile: &[ProtocolSpec], trials: u64, horizon: u64) -> Result<()> {
    check_run(profile.len(), horizon)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(())
}

/// Runs `trials` independent games; trial `i` uses stream `i` of `base_seed`.
pub fn estimate_latency<E: Executor + ?Sized>(
    profile: &[ProtocolSpec],
    trials: u64,
    horizon: u64,
    base_seed: u64,
    exec: &E,
) -> Result<LatencyStats> {
    estimate(profile, trials, horizon, base_seed, exec, false)
}

/// [`estimate_latency`] with the per-slot pending trace aggregated.
pub fn estimate_latency_traced<E: Executor + ?Sized>(
    profile: &[ProtocolSpec],
    trials: u64,
    horizon: u64,
    base_seed: u64,
    exec: &E,
) -> Result<LatencyStats> {
    estimate(profile, trials, horizon, base_seed, exec, true)
}

fn estimate<E: Executor + ?Sized>(
    profile: &[ProtocolSpec],
    trials: u64,
    horizon: u64,
    base_seed: u64,
    exec: &E,
    trace: bool,
) -> Result<LatencyStats> {
    check_estimate(profile, trials, horizon)?;
    let blocks = fold_trials(exec, trials, |trial, acc: &mut LatencyAcc| {
        if trace {
            let mut pending = Vec::new();
            let r = run_indexed_trial_traced(profile, horizon, base_seed, trial, &mut pending);
            acc.add(&r, Some(&pending));
        } else {
            let r = run_indexed_trial(profile, horizon, base_seed, trial);
            acc.add(&r, None);
        }
    });
    let mut acc = LatencyAcc::default();
    for b in blocks {
        acc.merge(b);
    }

    let n = profile.len();
    let pairs = (n as u64 * trials) as f64;
    let per_player = acc
        .per_player
        .iter()
        .zip(&acc.finished)
        .map(|(m, &done)| PlayerLatency {
            completion_prob: done as f64 / trials as f64,
            truncated_mean: m.mean(),
            stderr: m.stderr(),
        })
        .collect();
    Ok(LatencyStats {
        players: n,
        trials,
        horizon,
        base_seed,
        completion_prob: acc.finished.iter().sum::<u64>() as f64 / pairs,
        truncated_mean: acc.all.mean(),
        truncated_mean_stderr: acc.all.stderr(),
        per_player,
        max_latency_quantiles: histogram_quantiles(&acc.max_hist, &QUANTILE_LEVELS),
        mean_pending_by_slot: trace.then(|| acc.pending_sums.iter().map(|&s| s as f64 / trials as f64).collect()),
    })
}

/// Every trial result of a run, in trial order.
pub fn run_trials<E: Executor + ?Sized>(
    profile: &[ProtocolSpec],
    trials: u64,
    horizon: u64,
    base_seed: u64,
    exec: &E,
) -> Result<Vec<TrialResult>> {
    check_estimate(profile, trials, horizon)?;
    let blocks = fold_trials(exec, trials, |trial, acc: &mut Vec<TrialResult>| {
        acc.push(run_indexed_trial(profile, horizon, base_seed, trial));
    });
    Ok(blocks.into_iter().flatten().collect())
}
