//! Deviation constructions and equilibrium checks.
//!
//! Exact answers are available for two players running stationary rules:
//! the deviator's deterministic prefix is expanded slot by slot over the
//! opponent's quiet counter, and what remains afterwards is a finite chain on
//! `(deviator counter, opponent counter | opponent done)` handed to
//! [`AbsorbingChain::hitting_times`]. Everything else is estimated by Monte
//! Carlo through [`crate::channel`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::chain::{stationary_two_player_latency, AbsorbingChain};
use crate::channel::{
    estimate_latency, run_indexed_trial, run_indexed_trial_traced, IntMoments, LatencyStats, PlayerLatency,
};
use crate::error::{Error, Result};
use crate::exec::{fold_trials, Executor};
use crate::protocol::{check_probability, Backoff, ProtocolSpec, Stationary, TransmissionHistory};

/// Gain tolerance of exact comparisons.
pub const ANALYTIC_TOLERANCE: f64 = 1e-9;
/// Monte Carlo verdicts treat `|gain| <= 3 * stderr` as no difference.
pub const MC_STDERR_MULTIPLIER: f64 = 3.0;
/// Probes refuse to report when fewer players than this finish by the horizon.
pub const REQUIRED_COMPLETION: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Verdict {
    /// The deviation lowers the deviator's latency.
    Profitable,
    Indifferent,
    Unprofitable,
}

impl Verdict {
    /// `gain` is baseline latency minus deviation latency.
    pub fn from_gain(gain: f64, tolerance: f64) -> Self {
        if gain > tolerance {
            Verdict::Profitable
        } else if gain < -tolerance {
            Verdict::Unprofitable
        } else {
            Verdict::Indifferent
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub mean: f64,
    /// Zero for exact values.
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self { mean, stderr: 0.0 }
    }
}

impl From<&PlayerLatency> for Estimate {
    fn from(p: &PlayerLatency) -> Self {
        Self { mean: p.truncated_mean, stderr: p.stderr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Method {
    Analytic,
    MonteCarlo { trials: u64, horizon: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviationReport {
    pub method: Method,
    pub players: usize,
    pub baseline_latency: Estimate,
    pub deviation_latency: Estimate,
    /// Baseline minus deviation.
    pub gain: f64,
    pub gain_stderr: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub tau_star: Option<u64>,
    pub consistency_probability: Option<f64>,
    /// Fraction of trials in which the deviator and exactly one other player
    /// were pending at `tau_star`.
    pub exactly_two_pending_freq: Option<f64>,
}

impl DeviationReport {
    fn analytic(players: usize, baseline: f64, deviation: f64) -> Self {
        let gain = baseline - deviation;
        Self {
            method: Method::Analytic,
            players,
            baseline_latency: Estimate::exact(baseline),
            deviation_latency: Estimate::exact(deviation),
            gain,
            gain_stderr: 0.0,
            tolerance: ANALYTIC_TOLERANCE,
            verdict: Verdict::from_gain(gain, ANALYTIC_TOLERANCE),
            tau_star: None,
            consistency_probability: None,
            exactly_two_pending_freq: None,
        }
    }

    fn monte_carlo(
        method: Method,
        players: usize,
        baseline: Estimate,
        deviation: Estimate,
        gain: f64,
        gain_stderr: f64,
    ) -> Self {
        let tolerance = MC_STDERR_MULTIPLIER * gain_stderr;
        Self {
            method,
            players,
            baseline_latency: baseline,
            deviation_latency: deviation,
            gain,
            gain_stderr,
            tolerance,
            verdict: Verdict::from_gain(gain, tolerance),
            tau_star: None,
            consistency_probability: None,
            exactly_two_pending_freq: None,
        }
    }
}

/// A deterministic prefix `π_1..π_τ*` followed by the base protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSpec {
    pub prefix: Vec<bool>,
    pub base: ProtocolSpec,
}

impl DeviationSpec {
    pub fn new(prefix: Vec<bool>, base: ProtocolSpec) -> Self {
        Self { prefix, base }
    }

    pub fn tau_star(&self) -> usize {
        self.prefix.len()
    }
}

pub fn build_deviation(spec: &DeviationSpec) -> ProtocolSpec {
    ProtocolSpec::prefixed(spec.prefix.clone(), spec.base.clone())
}

/// Probability that a lone player following `f` produces exactly `prefix` as
/// its own history. Only defined for classes whose own-history process does
/// not depend on anyone else.
pub fn consistency_probability(f: &ProtocolSpec, prefix: &[bool]) -> Result<f64> {
    if matches!(f, ProtocolSpec::General(_)) {
        return Err(Error::Unsupported { operation: "consistency probability", class: f.class().name() });
    }
    let mut history = TransmissionHistory::with_capacity(prefix.len());
    let mut prob = 1.0;
    for (i, &bit) in prefix.iter().enumerate() {
        let p = f.decide(&history, i as u64 + 1)?;
        prob *= if bit { p } else { 1.0 - p };
        if prob == 0.0 {
            break;
        }
        history.push(bit);
    }
    Ok(prob)
}

fn stationary_of<'a>(f: &'a ProtocolSpec, operation: &'static str) -> Result<&'a Stationary> {
    match f {
        ProtocolSpec::TwoPlayerStationary(s) => Ok(s),
        other => Err(Error::Unsupported { operation, class: other.class().name() }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PairState {
    deviator_quiet: usize,
    /// `None` once the opponent has succeeded.
    opponent_quiet: Option<usize>,
}

impl PairState {
    fn name(self) -> String {
        match self.opponent_quiet {
            Some(c) => format!("d{}/o{}", self.deviator_quiet, c),
            None => format!("d{}/done", self.deviator_quiet),
        }
    }
}

/// Expected latency of a deviator who plays `prefix` and then `deviator`
/// (fed its real history) against an opponent running `opponent` from slot 1.
pub fn exact_two_player_latency(deviator: &ProtocolSpec, prefix: &[bool], opponent: &ProtocolSpec) -> Result<f64> {
    let dev = stationary_of(deviator, "exact two-player latency")?;
    let opp = stationary_of(opponent, "exact two-player latency")?;
    stationary_pair_latency(dev, prefix, opp)
}

fn stationary_pair_latency(dev: &Stationary, prefix: &[bool], opp: &Stationary) -> Result<f64> {
    let opp_cap = opp.counter_cap();
    let dev_cap = dev.counter_cap();
    let done = opp_cap + 1;

    // Opponent's state distribution while the deviator is still pending.
    let mut mass = vec![0.0; opp_cap + 2];
    mass[0] = 1.0;
    let mut finished_weight = 0.0;
    let mut dev_quiet = 0usize;

    for (i, &transmit) in prefix.iter().enumerate() {
        let t = (i + 1) as f64;
        let mut next = vec![0.0; opp_cap + 2];
        for c in 0..=opp_cap {
            let m = mass[c];
            if m == 0.0 {
                continue;
            }
            let pb = opp.after_quiet(c);
            if transmit {
                next[0] += m * pb;
                finished_weight += t * m * (1.0 - pb);
            } else {
                next[done] += m * pb;
                next[(c + 1).min(opp_cap)] += m * (1.0 - pb);
            }
        }
        if transmit {
            finished_weight += t * mass[done];
        } else {
            next[done] += mass[done];
        }
        mass = next;
        dev_quiet = if transmit { 0 } else { (dev_quiet + 1).min(dev_cap) };
    }

    let seeds: Vec<(PairState, f64)> = mass
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(c, &m)| {
            let opponent_quiet = if c == done { None } else { Some(c) };
            (PairState { deviator_quiet: dev_quiet, opponent_quiet }, m)
        })
        .collect();
    if seeds.is_empty() {
        return Ok(finished_weight);
    }

    let successors = |s: PairState| -> Vec<(Option<PairState>, f64)> {
        let pa = dev.after_quiet(s.deviator_quiet);
        let quiet = (s.deviator_quiet + 1).min(dev_cap);
        match s.opponent_quiet {
            None => vec![(None, pa), (Some(PairState { deviator_quiet: quiet, opponent_quiet: None }), 1.0 - pa)],
            Some(c) => {
                let pb = opp.after_quiet(c);
                vec![
                    (Some(PairState { deviator_quiet: 0, opponent_quiet: Some(0) }), pa * pb),
                    (None, pa * (1.0 - pb)),
                    (Some(PairState { deviator_quiet: quiet, opponent_quiet: None }), (1.0 - pa) * pb),
                    (
                        Some(PairState { deviator_quiet: quiet, opponent_quiet: Some((c + 1).min(opp_cap)) }),
                        (1.0 - pa) * (1.0 - pb),
                    ),
                ]
            }
        }
    };

    // States reachable from the seeds; index 0 is the absorbing target.
    let mut index: BTreeMap<PairState, usize> = BTreeMap::new();
    let mut order: Vec<PairState> = Vec::new();
    let mut stack: Vec<PairState> = seeds.iter().map(|(s, _)| *s).collect();
    while let Some(s) = stack.pop() {
        if index.contains_key(&s) {
            continue;
        }
        index.insert(s, order.len() + 1);
        order.push(s);
        for (next, p) in successors(s) {
            if let Some(next) = next {
                if p > 0.0 && !index.contains_key(&next) {
                    stack.push(next);
                }
            }
        }
    }

    let size = order.len() + 1;
    let mut matrix = vec![vec![0.0; size]; size];
    matrix[0][0] = 1.0;
    for (row, &s) in order.iter().enumerate() {
        for (next, p) in successors(s) {
            if p == 0.0 {
                continue;
            }
            let col = next.map_or(0, |n| index[&n]);
            matrix[row + 1][col] += p;
        }
    }
    let mut names = vec!["deviator-done".to_string()];
    names.extend(order.iter().map(|s| s.name()));
    let chain = AbsorbingChain::new(names, matrix, 0)?;
    let k = chain.hitting_times()?;

    let tau = prefix.len() as f64;
    let rest: f64 = seeds.iter().map(|(s, m)| m * (tau + k.values[index[s]])).sum();
    Ok(finished_weight + rest)
}

/// Exact deviation report for two players on a stationary base rule. Does
/// not require the prefix to be consistent with the base.
pub fn analytic_deviation_report(base: &ProtocolSpec, prefix: &[bool]) -> Result<DeviationReport> {
    let baseline = exact_two_player_latency(base, &[], base)?;
    let deviation = exact_two_player_latency(base, prefix, base)?;
    let mut report = DeviationReport::analytic(2, baseline, deviation);
    report.tau_star = Some(prefix.len() as u64);
    report.consistency_probability = Some(consistency_probability(base, prefix)?);
    Ok(report)
}

/// Smallest expected latency over all deterministic prefixes of length at
/// most `max_len` followed by `base`, against an opponent on `base`.
pub fn best_prefix_response(base: &ProtocolSpec, max_len: usize) -> Result<(Vec<bool>, f64)> {
    let mut best: Option<(Vec<bool>, f64)> = None;
    for prefix in all_prefixes(max_len) {
        let latency = exact_two_player_latency(base, &prefix, base)?;
        if best.as_ref().is_none_or(|(_, b)| latency < *b) {
            best = Some((prefix, latency));
        }
    }
    Ok(best.expect("the empty prefix is always evaluated"))
}

/// Every 0/1 sequence of length `0..=max_len`, shortest first.
pub fn all_prefixes(max_len: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..=max_len).flat_map(|len| (0u64..1 << len).map(move |mask| (0..len).map(|i| mask >> i & 1 == 1).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMethod {
    /// Exact; two players on a stationary base only.
    Analytic,
    MonteCarlo {
        trials: u64,
        horizon: u64,
        seed: u64,
    },
}

/// Compares the deviator's latency under `(f_-i, g(prefix))` with the
/// baseline under `f`. For an equilibrium `f` and a consistent prefix the two
/// must coincide.
pub fn lemma1_check<E: Executor + ?Sized>(
    f: &ProtocolSpec,
    prefix: &[bool],
    n: usize,
    method: CheckMethod,
    exec: &E,
) -> Result<DeviationReport> {
    let consistency = consistency_probability(f, prefix)?;
    if consistency == 0.0 {
        return Err(Error::InconsistentPrefix);
    }
    match method {
        CheckMethod::Analytic => {
            if n != 2 {
                return Err(Error::InvalidPlayerCount { got: n, reason: "the exact check covers two players" });
            }
            analytic_deviation_report(f, prefix)
        }
        CheckMethod::MonteCarlo { trials, horizon, seed } => {
            let g = build_deviation(&DeviationSpec::new(prefix.to_vec(), f.clone()));
            let mut report = monte_carlo_deviation(f, &g, n, trials, horizon, seed, exec)?;
            report.tau_star = Some(prefix.len() as u64);
            report.consistency_probability = Some(consistency);
            Ok(report)
        }
    }
}

/// Mixes a label into a root seed so that related runs use unrelated streams.
pub fn derive_seed(root: u64, label: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = root ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn require_completion(stats: &LatencyStats) -> Result<()> {
    let completion = stats.per_player[0].completion_prob;
    if completion < REQUIRED_COMPLETION {
        return Err(Error::IncompleteAtHorizon { completion, horizon: stats.horizon, required: REQUIRED_COMPLETION });
    }
    Ok(())
}

/// Player 0 on `deviation`, everyone else on `f`, against all on `f`. The
/// two runs use independent streams.
pub fn monte_carlo_deviation<E: Executor + ?Sized>(
    f: &ProtocolSpec,
    deviation: &ProtocolSpec,
    n: usize,
    trials: u64,
    horizon: u64,
    seed: u64,
    exec: &E,
) -> Result<DeviationReport> {
    if n == 0 {
        return Err(Error::InvalidPlayerCount { got: n, reason: "at least one player is required" });
    }
    let baseline_profile = vec![f.clone(); n];
    let mut deviation_profile = baseline_profile.clone();
    deviation_profile[0] = deviation.clone();

    let baseline = estimate_latency(&baseline_profile, trials, horizon, seed, exec)?;
    require_completion(&baseline)?;
    let deviated = estimate_latency(&deviation_profile, trials, horizon, derive_seed(seed, 1), exec)?;
    require_completion(&deviated)?;

    let b = Estimate::from(&baseline.per_player[0]);
    let d = Estimate::from(&deviated.per_player[0]);
    let se = libm::sqrt(b.stderr * b.stderr + d.stderr * d.stderr);
    Ok(DeviationReport::monte_carlo(Method::MonteCarlo { trials, horizon, seed }, n, b, d, b.mean - d.mean, se))
}

/// Latencies of the three one-shot deviations against a stationary rule with
/// first probabilities `p1, p2, p3` and equilibrium latency `alpha`:
/// transmit now, transmit in slot 2, transmit in slot 3; then follow the rule.
pub fn uniqueness_deviation_latencies(p1: f64, p2: f64, p3: f64, alpha: f64) -> Result<[f64; 3]> {
    for p in [p1, p2, p3] {
        check_probability(p)?;
    }
    if alpha.is_nan() || alpha < 1.0 {
        return Err(Error::InvalidArgument(format!("latency must be at least 1, got {alpha}")));
    }
    Ok([1.0 + p1 * alpha, 2.0 + (1.0 - p1) * p2 * alpha, 3.0 + (1.0 - p1) * (1.0 - p2) * p3 * alpha])
}

/// Solutions of `α = 1 + p1 α` and `α = 2 + (1 - p1) p2 α` taken one at a
/// time. When they agree the common value is `2 + p2`.
pub fn indifference_solutions(p1: f64, p2: f64) -> Result<(f64, f64)> {
    check_probability(p1)?;
    check_probability(p2)?;
    if p1 == 1.0 {
        return Err(Error::InvalidArgument("p1 = 1 leaves the first equation without a solution".into()));
    }
    let denom = 1.0 - (1.0 - p1) * p2;
    Ok((1.0 / (1.0 - p1), 2.0 / denom))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScanRow {
    pub p: f64,
    pub baseline: f64,
    pub best_deviation: String,
    pub best_latency: f64,
    /// Baseline minus the best deviation's latency.
    pub gain: f64,
    pub verdict: Verdict,
}

fn prefix_label(prefix: &[bool]) -> String {
    let bits: Vec<&str> = prefix.iter().map(|&b| if b { "1" } else { "0" }).collect();
    format!("prefix({})", bits.join(","))
}

/// For each first-slot probability `p` (second slot 1), the best of: always
/// transmit, stay quiet twice then transmit, and every consistent prefix of
/// length 1 to 3 followed by the rule.
pub fn stationary_equilibrium_scan(grid: &[f64], tolerance: f64) -> Result<Vec<ScanRow>> {
    let persistent = ProtocolSpec::stationary_two_player(vec![1.0])?;
    grid.iter()
        .map(|&p| {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidArgument(format!("scan points must lie in (0, 1), got {p}")));
            }
            let base = ProtocolSpec::stationary_two_player(vec![p, 1.0])?;
            let baseline = stationary_two_player_latency(p)?;

            let mut candidates: Vec<(String, f64)> = vec![
                ("persistent".into(), exact_two_player_latency(&persistent, &[], &base)?),
                ("wait-two".into(), exact_two_player_latency(&base, &[false, false, true], &base)?),
            ];
            for prefix in all_prefixes(3).filter(|p| !p.is_empty()) {
                if consistency_probability(&base, &prefix)? > 0.0 {
                    candidates.push((prefix_label(&prefix), exact_two_player_latency(&base, &prefix, &base)?));
                }
            }
            let (best_deviation, best_latency) =
                candidates.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("candidate list is never empty");
            let gain = baseline - best_latency;
            Ok(ScanRow {
                p,
                baseline,
                best_deviation,
                best_latency,
                gain,
                verdict: Verdict::from_gain(gain, tolerance),
            })
        })
        .collect()
}

fn age_based<'a>(f: &'a ProtocolSpec, operation: &'static str) -> Result<&'a ProtocolSpec> {
    if f.is_age_based() {
        Ok(f)
    } else {
        Err(Error::Unsupported { operation, class: f.class().name() })
    }
}

/// Number of slots `t' <= t` whose probability is below 1.
pub fn count_non_blocking(f: &ProtocolSpec, t: u64) -> Result<u64> {
    let f = age_based(f, "count_non_blocking")?;
    Ok((1..=t).filter(|&s| f.age_probability(s).unwrap_or(1.0) < 1.0).count() as u64)
}

/// Smallest `τ <= limit` with `f_τ = 1`, `f_{τ-1} < 1` and at least `n - 1`
/// non-blocking slots before `τ`.
pub fn find_tau_star(f: &ProtocolSpec, n: usize, limit: u64) -> Result<Option<u64>> {
    let f = age_based(f, "find_tau_star")?;
    let needed = n.saturating_sub(1) as u64;
    let mut non_blocking = 0u64;
    let mut previous: Option<f64> = None;
    for t in 1..=limit {
        let p = f.age_probability(t).unwrap_or(1.0);
        if p == 1.0 && previous.is_some_and(|q| q < 1.0) && non_blocking >= needed {
            return Ok(Some(t));
        }
        if p < 1.0 {
            non_blocking += 1;
        }
        previous = Some(p);
    }
    Ok(None)
}

/// The pair of deviations used against a finite-latency age-based protocol.
///
/// Before `τ* - 1` both copy `f`'s blocking pattern (transmit iff `f_t = 1`),
/// both transmit at `τ* - 1`; at `τ*` the first transmits and the second
/// stays quiet. Both follow `f` afterwards.
pub fn theorem3_protocols(f: &ProtocolSpec, n: usize, limit: u64) -> Result<(u64, ProtocolSpec, ProtocolSpec)> {
    let f = age_based(f, "theorem3_probe")?;
    let tau = find_tau_star(f, n, limit)?.ok_or(Error::TauStarNotFound { limit })?;
    let mut prefix: Vec<bool> = (1..=tau).map(|t| t + 2 > tau || f.age_probability(t) == Some(1.0)).collect();
    let q = ProtocolSpec::prefixed(prefix.clone(), f.clone());
    *prefix.last_mut().expect("tau >= 2") = false;
    let q_prime = ProtocolSpec::prefixed(prefix, f.clone());
    Ok((tau, q, q_prime))
}

#[derive(Default)]
struct PairedAcc {
    with: IntMoments,
    without: IntMoments,
    diff: IntMoments,
    exactly_two: u64,
    completed: u64,
}

/// Runs the two deviations of [`theorem3_protocols`] on common random
/// numbers against `n - 1` players on `f` and reports whether skipping the
/// blocking slot helps. The baseline is the transmitting variant.
pub fn theorem3_probe<E: Executor + ?Sized>(
    f: &ProtocolSpec,
    n: usize,
    trials: u64,
    horizon: u64,
    seed: u64,
    exec: &E,
) -> Result<DeviationReport> {
    if n < 2 {
        return Err(Error::InvalidPlayerCount { got: n, reason: "the probe needs at least two players" });
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let (tau, q, q_prime) = theorem3_protocols(f, n, horizon)?;
    let mut with = vec![f.clone(); n];
    with[0] = q;
    let mut without = vec![f.clone(); n];
    without[0] = q_prime;

    let blocks = fold_trials(exec, trials, |trial, acc: &mut PairedAcc| {
        let mut trace = Vec::new();
        let a = run_indexed_trial_traced(&with, horizon, seed, trial, &mut trace);
        let b = run_indexed_trial(&without, horizon, seed, trial);
        let ta = a.success_times[0].truncated();
        let tb = b.success_times[0].truncated();
        acc.with.push(ta as i64);
        acc.without.push(tb as i64);
        acc.diff.push(ta as i64 - tb as i64);
        // Pending at the start of slot tau = pending after slot tau - 1.
        let pending_before = trace.get(tau as usize - 2).copied().unwrap_or(0);
        if pending_before == 2 && ta >= tau {
            acc.exactly_two += 1;
        }
        if a.success_times[0].slot().is_some() && b.success_times[0].slot().is_some() {
            acc.completed += 1;
        }
    });
    let mut acc = PairedAcc::default();
    for b in blocks {
        acc.with.merge(&b.with);
        acc.without.merge(&b.without);
        acc.diff.merge(&b.diff);
        acc.exactly_two += b.exactly_two;
        acc.completed += b.completed;
    }
    let completion = acc.completed as f64 / trials as f64;
    if completion < REQUIRED_COMPLETION {
        return Err(Error::IncompleteAtHorizon { completion, horizon, required: REQUIRED_COMPLETION });
    }
    let mut report = DeviationReport::monte_carlo(
        Method::MonteCarlo { trials, horizon, seed },
        n,
        Estimate { mean: acc.with.mean(), stderr: acc.with.stderr() },
        Estimate { mean: acc.without.mean(), stderr: acc.without.stderr() },
        acc.diff.mean(),
        acc.diff.stderr(),
    );
    report.tau_star = Some(tau);
    report.exactly_two_pending_freq = Some(acc.exactly_two as f64 / trials as f64);
    Ok(report)
}

/// Drops leading levels with probability 1: a backoff protocol that starts
/// with `s` certain transmissions behaves like its shift by `s`. Fails when
/// every level is 1.
pub fn normalize_backoff(f: &Backoff) -> Result<Backoff> {
    match f.probs().iter().position(|&p| p != 1.0) {
        Some(s) => Ok(f.shifted(s)),
        None if f.tail() != 1.0 => Ok(f.shifted(f.probs().len())),
        None => Err(Error::Precondition("every backoff level transmits with probability 1")),
    }
}

/// Quiet for the first `⌊L̂⌋` slots, then the backoff rule, where `L̂` is the
/// estimated equilibrium latency. The deviator cannot finish before
/// `⌊L̂⌋ + 1`, so a finite-latency equilibrium would need
/// `⌊L̂⌋ + 1 <= L̂`; the report shows the gap.
pub fn backoff_zero_prefix_probe<E: Executor + ?Sized>(
    f: &ProtocolSpec,
    n: usize,
    trials: u64,
    horizon: u64,
    seed: u64,
    exec: &E,
) -> Result<DeviationReport> {
    let ProtocolSpec::Backoff(backoff) = f else {
        return Err(Error::Unsupported { operation: "backoff_zero_prefix_probe", class: f.class().name() });
    };
    if n < 2 {
        return Err(Error::InvalidPlayerCount { got: n, reason: "the probe needs at least two players" });
    }
    let normalized = ProtocolSpec::Backoff(normalize_backoff(backoff)?);
    let profile = vec![normalized.clone(); n];
    let baseline = estimate_latency(&profile, trials, horizon, seed, exec)?;
    require_completion(&baseline)?;
    let estimate = Estimate::from(&baseline.per_player[0]);
    let tau = libm::floor(estimate.mean) as u64;

    let g = build_deviation(&DeviationSpec::new(vec![false; tau as usize], normalized.clone()));
    let mut report = monte_carlo_deviation(&normalized, &g, n, trials, horizon, seed, exec)?;
    report.tau_star = Some(tau);
    report.consistency_probability = Some(consistency_probability(&normalized, &vec![false; tau as usize])?);
    Ok(report)
}
