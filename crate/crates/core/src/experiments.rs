//! Efficiency experiments for the deadline protocol.
//!
//! All `n` players run the same deadline protocol, so trials use the
//! exchangeable engine ([`run_exchangeable_trial`]) and record the pending
//! count at the end of every interval and after slot `t0`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::channel::{
    histogram_quantiles, run_exchangeable_trial, success_probability, trial_rng, Quantile, QUANTILE_LEVELS,
};
use crate::error::{Error, Result};
use crate::exec::{fold_trials, Executor};
use crate::protocol::{DeadlineSchedule, ProtocolSpec};

/// Bumped whenever a field of [`EfficiencyReport`] or [`TrialRow`] changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Per-interval contraction statistic.
///
/// For `j <= k` the event is "at most `after_max` pending after interval j",
/// for the last interval it is "nobody pending". Both are conditioned on at
/// most `before_max` pending when the interval starts. Interval 1 always
/// starts with all `n` players, so its condition is `before_max = n`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntervalRow {
    pub j: usize,
    pub length: u64,
    pub size: f64,
    pub before_max: u64,
    pub after_max: u64,
    pub precondition_trials: u64,
    pub event_trials: u64,
    /// `None` when no trial met the precondition.
    pub frequency: Option<f64>,
    /// `1 - exp(-beta^(j+2) n / 3)` for `j <= k`, `1 - exp(-n_{k+1} / 3)` for the last.
    pub analytic_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EfficiencyReport {
    pub schema_version: u32,
    pub n: usize,
    pub beta: f64,
    pub trials: u64,
    pub seed: u64,
    pub k: usize,
    pub t0: u64,
    pub deadline_bound: f64,
    pub interval_table: Vec<IntervalRow>,
    /// Trials with a player still pending after slot `t0`.
    pub failures: u64,
    pub overall_failure_freq: f64,
    pub overall_failure_stderr: f64,
    /// Quantiles of `max_i T_i`, truncated at `t0 + n`.
    pub max_latency_quantiles: Vec<Quantile>,
    /// Finished trials whose successes were not `n` distinct slots `<= t0`.
    pub malformed_successes: u64,
}

/// One CSV row per trial.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialRow {
    pub trial: u64,
    pub finished_by_t0: bool,
    pub max_latency: u64,
    /// Pending after each interval end, then after `t0`.
    pub boundary_pending: Vec<u32>,
}

/// Exact per-slot success probability `r q (1 - q)^(r - 1)` with `r`
/// pending players each transmitting with probability `q`.
pub fn success_probability_lower_bound(r: usize, q: f64) -> f64 {
    success_probability(r, q)
}

fn analytic_floor(schedule: &DeadlineSchedule, j: usize) -> f64 {
    let n = schedule.n() as f64;
    let exponent = if j <= schedule.k() {
        libm::pow(schedule.beta(), (j + 2) as f64) * n / 3.0
    } else {
        schedule.sizes()[j - 1] / 3.0
    };
    1.0 - libm::exp(-exponent)
}

#[derive(Default)]
struct Acc {
    preconditions: Vec<u64>,
    events: Vec<u64>,
    failures: u64,
    malformed: u64,
    max_hist: BTreeMap<u64, u64>,
    rows: Vec<TrialRow>,
}

fn check(n: usize, beta: f64, trials: u64) -> Result<DeadlineSchedule> {
    let schedule = DeadlineSchedule::new(n, beta)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    Ok(schedule)
}

fn run<E: Executor + ?Sized>(
    n: usize,
    beta: f64,
    trials: u64,
    seed: u64,
    exec: &E,
    keep_rows: bool,
) -> Result<(EfficiencyReport, Vec<TrialRow>)> {
    let schedule = check(n, beta, trials)?;
    let intervals = schedule.intervals();
    let t0 = schedule.t0();
    let horizon = t0 + n as u64;
    let protocol = ProtocolSpec::deadline(schedule.clone());

    let mut observe: Vec<u64> = (1..=intervals).map(|j| schedule.interval_end(j)).collect();
    observe.push(t0);
    let before_max: Vec<u64> =
        (1..=intervals).map(|j| if j == 1 { n as u64 } else { libm::floor(schedule.sizes()[j - 1]) as u64 }).collect();
    let after_max: Vec<u64> =
        (1..=intervals).map(|j| if j < intervals { libm::floor(schedule.sizes()[j]) as u64 } else { 0 }).collect();

    let blocks = fold_trials(exec, trials, |trial, acc: &mut Acc| {
        if acc.preconditions.is_empty() {
            acc.preconditions.resize(intervals, 0);
            acc.events.resize(intervals, 0);
        }
        let mut rng = trial_rng(seed, trial);
        let (result, pending) =
            run_exchangeable_trial(&protocol, n, horizon, &mut rng, &observe).expect("arguments validated above");

        for j in 0..intervals {
            let before = if j == 0 { n as u64 } else { u64::from(pending[j - 1]) };
            if before <= before_max[j] {
                acc.preconditions[j] += 1;
                if u64::from(pending[j]) <= after_max[j] {
                    acc.events[j] += 1;
                }
            }
        }
        let finished_by_t0 = pending[intervals] == 0;
        if finished_by_t0 {
            let mut slots: Vec<u64> = result.success_times.iter().filter_map(|t| t.slot()).collect();
            slots.sort_unstable();
            slots.dedup();
            if slots.len() != n || slots.last().is_some_and(|&s| s > t0) {
                acc.malformed += 1;
            }
        } else {
            acc.failures += 1;
        }
        let max_latency = result.max_truncated();
        *acc.max_hist.entry(max_latency).or_default() += 1;
        if keep_rows {
            acc.rows.push(TrialRow { trial, finished_by_t0, max_latency, boundary_pending: pending });
        }
    });

    let mut preconditions = alloc::vec![0u64; intervals];
    let mut events = alloc::vec![0u64; intervals];
    let mut failures = 0;
    let mut malformed = 0;
    let mut max_hist = BTreeMap::new();
    let mut rows = Vec::new();
    for b in blocks {
        for (a, x) in preconditions.iter_mut().zip(&b.preconditions) {
            *a += x;
        }
        for (a, x) in events.iter_mut().zip(&b.events) {
            *a += x;
        }
        failures += b.failures;
        malformed += b.malformed;
        for (k, v) in b.max_hist {
            *max_hist.entry(k).or_default() += v;
        }
        rows.extend(b.rows);
    }

    let interval_table = (1..=intervals)
        .map(|j| {
            let pre = preconditions[j - 1];
            let ev = events[j - 1];
            IntervalRow {
                j,
                length: schedule.lengths()[j - 1],
                size: schedule.sizes()[j - 1],
                before_max: before_max[j - 1],
                after_max: after_max[j - 1],
                precondition_trials: pre,
                event_trials: ev,
                frequency: (pre > 0).then(|| ev as f64 / pre as f64),
                analytic_floor: analytic_floor(&schedule, j),
            }
        })
        .collect();
    let freq = failures as f64 / trials as f64;
    let report = EfficiencyReport {
        schema_version: SCHEMA_VERSION,
        n,
        beta,
        trials,
        seed,
        k: schedule.k(),
        t0,
        deadline_bound: schedule.deadline_bound(),
        interval_table,
        failures,
        overall_failure_freq: freq,
        overall_failure_stderr: libm::sqrt(freq * (1.0 - freq) / trials as f64),
        max_latency_quantiles: histogram_quantiles(&max_hist, &QUANTILE_LEVELS),
        malformed_successes: malformed,
    };
    Ok((report, rows))
}

/// Runs `trials` games of `n` players on the deadline protocol with
/// parameter `beta`. Trial `i` uses stream `i` of `seed`.
pub fn run_efficiency_experiment<E: Executor + ?Sized>(
    n: usize,
    beta: f64,
    trials: u64,
    seed: u64,
    exec: &E,
) -> Result<EfficiencyReport> {
    Ok(run(n, beta, trials, seed, exec, false)?.0)
}

/// [`run_efficiency_experiment`] plus one row per trial, in trial order.
pub fn run_efficiency_experiment_with_rows<E: Executor + ?Sized>(
    n: usize,
    beta: f64,
    trials: u64,
    seed: u64,
    exec: &E,
) -> Result<(EfficiencyReport, Vec<TrialRow>)> {
    run(n, beta, trials, seed, exec, true)
}

/// Just the interval table of [`run_efficiency_experiment`].
pub fn interval_contraction_stats<E: Executor + ?Sized>(
    n: usize,
    beta: f64,
    trials: u64,
    seed: u64,
    exec: &E,
) -> Result<Vec<IntervalRow>> {
    Ok(run_efficiency_experiment(n, beta, trials, seed, exec)?.interval_table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    #[test]
    fn success_probability_examples() {
        assert_eq!(success_probability_lower_bound(1, 1.0), 1.0);
        assert_eq!(success_probability_lower_bound(2, 0.5), 0.5);
        let p = success_probability_lower_bound(50, 1.0 / 50.0);
        assert!((p - 0.3716).abs() < 1e-4);
        assert!(p >= 1.0 / core::f64::consts::E);
    }

    #[test]
    fn small_run_is_well_formed() {
        let r = run_efficiency_experiment(100, 0.5, 200, 3, &Sequential).unwrap();
        assert_eq!(r.t0, 574);
        assert_eq!(r.interval_table.len(), 4);
        assert_eq!(r.interval_table[0].before_max, 100);
        assert_eq!(r.interval_table[0].after_max, 25);
        assert_eq!(r.interval_table[3].before_max, 6);
        assert_eq!(r.interval_table[3].after_max, 0);
        assert_eq!(r.malformed_successes, 0);
        assert!((0.0..=1.0).contains(&r.overall_failure_freq));
        for row in &r.interval_table {
            if let Some(f) = row.frequency {
                assert!((0.0..=1.0).contains(&f));
            }
        }
        let floor = r.interval_table[0].analytic_floor;
        assert!((floor - (1.0 - libm::exp(-25.0 / 6.0))).abs() < 1e-12);
        let last = r.interval_table[3].analytic_floor;
        assert!((last - (1.0 - libm::exp(-6.25 / 3.0))).abs() < 1e-12);
    }

    #[test]
    fn degenerate_two_players() {
        let r = run_efficiency_experiment(2, 0.5, 100, 1, &Sequential).unwrap();
        assert_eq!(r.k, 0);
        assert_eq!(r.interval_table.len(), 1);
    }

    #[test]
    fn rows_match_report() {
        let (r, rows) = run_efficiency_experiment_with_rows(100, 0.5, 300, 9, &Sequential).unwrap();
        assert_eq!(rows.len(), 300);
        assert_eq!(rows.iter().filter(|x| !x.finished_by_t0).count() as u64, r.failures);
        assert!(rows.iter().enumerate().all(|(i, x)| x.trial == i as u64 && x.boundary_pending.len() == 5));
    }

    #[test]
    fn invalid_arguments() {
        assert!(run_efficiency_experiment(1, 0.5, 10, 0, &Sequential).is_err());
        assert!(run_efficiency_experiment(10, 1.0, 10, 0, &Sequential).is_err());
        assert!(run_efficiency_experiment(10, 0.5, 0, 0, &Sequential).is_err());
    }
}
