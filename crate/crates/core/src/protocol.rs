//! Transmission histories and protocol families.
//!
//! A protocol maps a player's own transmission history and the current slot
//! to a transmission probability. Every family used by the analysis lives in
//! [`ProtocolSpec`]; all of them are immutable once built.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One player's own attempts, one entry per elapsed slot (`true` = transmitted).
///
/// The count of transmissions and the length of the trailing quiet run are
/// maintained incrementally so protocol rules never rescan the history.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TransmissionHistory {
    bits: Vec<bool>,
    ones: usize,
    trailing_quiet: usize,
}

impl TransmissionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self { bits: Vec::with_capacity(cap), ones: 0, trailing_quiet: 0 }
    }

    /// Builds a history from 0/1 values; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut h = Self::with_capacity(bits.len());
        for (index, &value) in bits.iter().enumerate() {
            match value {
                0 => h.push(false),
                1 => h.push(true),
                _ => return Err(Error::NotBinary { index, value }),
            }
        }
        Ok(h)
    }

    pub fn push(&mut self, transmitted: bool) {
        self.bits.push(transmitted);
        if transmitted {
            self.ones += 1;
            self.trailing_quiet = 0;
        } else {
            self.trailing_quiet += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    /// Number of transmissions so far. For a pending player every one of
    /// them was unsuccessful.
    pub fn transmissions(&self) -> usize {
        self.ones
    }

    /// Quiet slots since the last own transmission (or since the start).
    pub fn trailing_quiet(&self) -> usize {
        self.trailing_quiet
    }

    pub fn last(&self) -> Option<bool> {
        self.bits.last().copied()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| u8::from(b)).collect()
    }
}

impl FromIterator<bool> for TransmissionHistory {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut h = Self::new();
        for b in iter {
            h.push(b);
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolClass {
    General,
    AgeBased,
    Backoff,
    Deadline,
    TwoPlayerStationary,
}

impl ProtocolClass {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolClass::General => "general",
            ProtocolClass::AgeBased => "age_based",
            ProtocolClass::Backoff => "backoff",
            ProtocolClass::Deadline => "deadline",
            ProtocolClass::TwoPlayerStationary => "two_player_stationary",
        }
    }
}

pub(crate) fn check_probability(value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::ProbabilityOutOfRange { value })
    }
}

fn check_all(values: &[f64]) -> Result<()> {
    values.iter().try_for_each(|&p| check_probability(p).map(|_| ()))
}

/// Probability sequence indexed by slot, then a constant tail.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeBased {
    probs: Vec<f64>,
    tail: f64,
}

impl AgeBased {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn at(&self, t: u64) -> f64 {
        usize::try_from(t - 1).ok().and_then(|i| self.probs.get(i)).copied().unwrap_or(self.tail)
    }
}

/// Probability indexed by the number of unsuccessful transmissions, then a tail.
#[derive(Debug, Clone, PartialEq)]
pub struct Backoff {
    probs: Vec<f64>,
    tail: f64,
}

impl Backoff {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn after_failures(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(self.tail)
    }

    /// Drops the first `s` levels: the protocol a player would follow after
    /// `s` unsuccessful attempts, restarted from zero failures.
    pub fn shifted(&self, s: usize) -> Backoff {
        let probs = self.probs.iter().skip(s).copied().collect();
        Backoff { probs, tail: self.tail }
    }
}

/// Two-player stationary rule: `p_seq[c]` after `c` quiet slots since the
/// player's last transmission (or the start). Counters beyond the sequence
/// reuse the last value.
#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    p_seq: Vec<f64>,
}

impl Stationary {
    pub fn p_seq(&self) -> &[f64] {
        &self.p_seq
    }

    pub fn after_quiet(&self, quiet: usize) -> f64 {
        self.p_seq[quiet.min(self.p_seq.len() - 1)]
    }

    /// Largest distinct counter value; larger counters behave identically.
    pub fn counter_cap(&self) -> usize {
        self.p_seq.len() - 1
    }
}

/// Deterministic prefix followed by a base protocol that sees the player's
/// real accumulated history.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefixed {
    prefix: Vec<bool>,
    base: Box<ProtocolSpec>,
}

impl Prefixed {
    pub fn prefix(&self) -> &[bool] {
        &self.prefix
    }

    pub fn base(&self) -> &ProtocolSpec {
        &self.base
    }
}

/// Interval construction of the deadline protocol.
///
/// Slots `1..t0` are split into `k + 1` consecutive intervals. Interval `j`
/// uses the real-valued size estimate `n_j = beta^j * n` and transmits with
/// probability `1 / n_j`; from `t0` on every pending player transmits.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadlineSchedule {
    n: usize,
    beta: f64,
    k: usize,
    sizes: Vec<f64>,
    lengths: Vec<u64>,
    ends: Vec<u64>,
    t0: u64,
}

impl DeadlineSchedule {
    pub fn new(n: usize, beta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidPlayerCount { got: n, reason: "the deadline schedule needs n >= 2" });
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidBeta(beta));
        }
        let nf = n as f64;
        let size = |j: usize| nf * libm::pow(beta, j as f64);
        let root = libm::sqrt(nf);

        // beta^k n is strictly decreasing in k and equals n > sqrt(n) at k = 0,
        // so the first k with beta^(k+1) n <= sqrt(n) is the unique one.
        let mut k = 0usize;
        while !(size(k + 1) <= root && root < size(k)) {
            k += 1;
        }

        let sizes: Vec<f64> = (1..=k + 1).map(size).collect();
        let mut lengths: Vec<u64> =
            sizes[..k].iter().map(|&nj| libm::floor(core::f64::consts::E / beta * nj) as u64).collect();
        lengths.push(n as u64);

        let mut ends = Vec::with_capacity(lengths.len());
        let mut acc = 0u64;
        for &l in &lengths {
            acc += l;
            ends.push(acc);
        }
        Ok(Self { n, beta, k, sizes, lengths, ends, t0: acc + 1 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `n_1, …, n_{k+1}`.
    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    /// `ℓ_1, …, ℓ_{k+1}`.
    pub fn lengths(&self) -> &[u64] {
        &self.lengths
    }

    pub fn intervals(&self) -> usize {
        self.lengths.len()
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    /// Last slot of interval `j` (1-based).
    pub fn interval_end(&self, j: usize) -> u64 {
        self.ends[j - 1]
    }

    /// First slot of interval `j` (1-based).
    pub fn interval_start(&self, j: usize) -> u64 {
        if j == 1 {
            1
        } else {
            self.ends[j - 2] + 1
        }
    }

    /// Interval containing slot `t`, or `None` from the deadline on.
    pub fn interval_of(&self, t: u64) -> Option<usize> {
        if t == 0 || t >= self.t0 {
            return None;
        }
        Some(self.ends.partition_point(|&end| end < t) + 1)
    }

    /// `1 / n_j`, capped at 1 for the rare schedules where `n_{k+1} < 1`.
    pub fn interval_probability(&self, j: usize) -> f64 {
        (1.0 / self.sizes[j - 1]).min(1.0)
    }

    pub fn probability_at(&self, t: u64) -> f64 {
        match self.interval_of(t) {
            Some(j) => self.interval_probability(j),
            None => 1.0,
        }
    }

    /// `n (1 + e / (1 - beta))`, the asymptotic bound on `t0`.
    pub fn deadline_bound(&self) -> f64 {
        self.n as f64 * (1.0 + core::f64::consts::E / (1.0 - self.beta))
    }
}

/// A decision-rule family.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "wire::ProtocolDoc", into = "wire::ProtocolDoc")
)]
pub enum ProtocolSpec {
    AgeBased(AgeBased),
    Backoff(Backoff),
    Deadline(DeadlineSchedule),
    TwoPlayerStationary(Stationary),
    General(Prefixed),
}

impl ProtocolSpec {
    /// Transmit with probability 2/3 at `t = 1` or after an own transmission,
    /// and with probability 1 after a quiet slot.
    pub fn two_player_equilibrium() -> Self {
        ProtocolSpec::TwoPlayerStationary(Stationary { p_seq: alloc::vec![2.0 / 3.0, 1.0] })
    }

    pub fn stationary_two_player(p_seq: Vec<f64>) -> Result<Self> {
        if p_seq.is_empty() {
            return Err(Error::EmptySequence);
        }
        check_all(&p_seq)?;
        Ok(ProtocolSpec::TwoPlayerStationary(Stationary { p_seq }))
    }

    pub fn age_based(probs: Vec<f64>, tail: f64) -> Result<Self> {
        check_all(&probs)?;
        check_probability(tail)?;
        Ok(ProtocolSpec::AgeBased(AgeBased { probs, tail }))
    }

    pub fn backoff(probs: Vec<f64>, tail: f64) -> Result<Self> {
        check_all(&probs)?;
        check_probability(tail)?;
        Ok(ProtocolSpec::Backoff(Backoff { probs, tail }))
    }

    /// Backoff with `p_k = 2^-(k+1)` for `k < levels` and `2^-(levels+1)` after.
    pub fn binary_exponential_backoff(levels: usize) -> Self {
        let probs = (0..levels).map(|k| libm::pow(0.5, (k + 1) as f64)).collect();
        let tail = libm::pow(0.5, (levels + 1) as f64);
        ProtocolSpec::Backoff(Backoff { probs, tail })
    }

    pub fn deadline(schedule: DeadlineSchedule) -> Self {
        ProtocolSpec::Deadline(schedule)
    }

    /// Follows `prefix` deterministically through slot `prefix.len()`, then
    /// `base` with the real history.
    pub fn prefixed(prefix: Vec<bool>, base: ProtocolSpec) -> Self {
        ProtocolSpec::General(Prefixed { prefix, base: Box::new(base) })
    }

    pub fn class(&self) -> ProtocolClass {
        match self {
            ProtocolSpec::AgeBased(_) => ProtocolClass::AgeBased,
            ProtocolSpec::Backoff(_) => ProtocolClass::Backoff,
            ProtocolSpec::Deadline(_) => ProtocolClass::Deadline,
            ProtocolSpec::TwoPlayerStationary(_) => ProtocolClass::TwoPlayerStationary,
            ProtocolSpec::General(_) => ProtocolClass::General,
        }
    }

    /// Deadline protocols built from a schedule depend only on the slot, so
    /// they count as age-based too.
    pub fn is_age_based(&self) -> bool {
        matches!(self, ProtocolSpec::AgeBased(_) | ProtocolSpec::Deadline(_))
    }

    /// Slot probability of an age-based protocol.
    pub fn age_probability(&self, t: u64) -> Option<f64> {
        match self {
            ProtocolSpec::AgeBased(a) => Some(a.at(t)),
            ProtocolSpec::Deadline(s) => Some(s.probability_at(t)),
            _ => None,
        }
    }

    /// Whether every probability is strictly below 1. Only answered for
    /// explicit age-based sequences; other classes return `None`.
    pub fn is_non_blocking(&self) -> Option<bool> {
        match self {
            ProtocolSpec::AgeBased(a) => Some(a.tail < 1.0 && a.probs.iter().all(|&p| p < 1.0)),
            ProtocolSpec::Deadline(_) => Some(false),
            _ => None,
        }
    }

    /// `Pr(transmit at t | h)` where `h` holds the `t - 1` slots before `t`.
    pub fn decide(&self, history: &TransmissionHistory, t: u64) -> Result<f64> {
        if t == 0 {
            return Err(Error::ZeroSlot);
        }
        let expected = (t - 1) as usize;
        if history.len() != expected {
            return Err(Error::HistoryLength { slot: t, expected, got: history.len() });
        }
        Ok(self.rule(history, t))
    }

    /// Unchecked form of [`decide`](Self::decide) used by the simulator.
    pub(crate) fn rule(&self, history: &TransmissionHistory, t: u64) -> f64 {
        match self {
            ProtocolSpec::AgeBased(a) => a.at(t),
            ProtocolSpec::Backoff(b) => b.after_failures(history.transmissions()),
            ProtocolSpec::Deadline(s) => s.probability_at(t),
            ProtocolSpec::TwoPlayerStationary(s) => s.after_quiet(history.trailing_quiet()),
            ProtocolSpec::General(p) => match usize::try_from(t - 1).ok().and_then(|i| p.prefix.get(i)) {
                Some(&bit) => f64::from(u8::from(bit)),
                None => p.base.rule(history, t),
            },
        }
    }
}

#[cfg(feature = "serde")]
mod wire {
    //! JSON layout: `{"class": "<name>", "params": {...}}` with
    //!
    //! | class                   | params                                   |
    //! |-------------------------|------------------------------------------|
    //! | `age_based`             | `probs: [f64]`, `tail: f64`              |
    //! | `backoff`               | `probs: [f64]`, `tail: f64`              |
    //! | `deadline`              | `n: usize`, `beta: f64`                  |
    //! | `two_player_stationary` | `p_seq: [f64]`                           |
    //! | `general`               | `prefix: [0/1]`, `base: <protocol>`      |

    use alloc::boxed::Box;
    use alloc::vec::Vec;

    use serde::{Deserialize, Serialize};

    use super::{DeadlineSchedule, ProtocolSpec};
    use crate::error::Error;

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "class", content = "params", rename_all = "snake_case")]
    pub enum ProtocolDoc {
        AgeBased { probs: Vec<f64>, tail: f64 },
        Backoff { probs: Vec<f64>, tail: f64 },
        Deadline { n: usize, beta: f64 },
        TwoPlayerStationary { p_seq: Vec<f64> },
        General { prefix: Vec<u8>, base: Box<ProtocolSpec> },
    }

    impl TryFrom<ProtocolDoc> for ProtocolSpec {
        type Error = Error;

        fn try_from(doc: ProtocolDoc) -> Result<Self, Error> {
            match doc {
                ProtocolDoc::AgeBased { probs, tail } => ProtocolSpec::age_based(probs, tail),
                ProtocolDoc::Backoff { probs, tail } => ProtocolSpec::backoff(probs, tail),
                ProtocolDoc::Deadline { n, beta } => DeadlineSchedule::new(n, beta).map(ProtocolSpec::deadline),
                ProtocolDoc::TwoPlayerStationary { p_seq } => ProtocolSpec::stationary_two_player(p_seq),
                ProtocolDoc::General { prefix, base } => {
                    let prefix = super::TransmissionHistory::from_bits(&prefix)?;
                    Ok(ProtocolSpec::prefixed(prefix.as_slice().to_vec(), *base))
                }
            }
        }
    }

    impl From<ProtocolSpec> for ProtocolDoc {
        fn from(spec: ProtocolSpec) -> Self {
            match spec {
                ProtocolSpec::AgeBased(a) => ProtocolDoc::AgeBased { probs: a.probs, tail: a.tail },
                ProtocolSpec::Backoff(b) => ProtocolDoc::Backoff { probs: b.probs, tail: b.tail },
                ProtocolSpec::Deadline(s) => ProtocolDoc::Deadline { n: s.n, beta: s.beta },
                ProtocolSpec::TwoPlayerStationary(s) => ProtocolDoc::TwoPlayerStationary { p_seq: s.p_seq },
                ProtocolSpec::General(p) => {
                    ProtocolDoc::General { prefix: p.prefix.iter().map(|&b| u8::from(b)).collect(), base: p.base }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const TOL: f64 = crate::PROB_TOLERANCE;

    fn h(bits: &[u8]) -> TransmissionHistory {
        TransmissionHistory::from_bits(bits).unwrap()
    }

    fn all_histories(len: usize) -> impl Iterator<Item = TransmissionHistory> {
        (0u32..(1 << len)).map(move |mask| (0..len).map(|i| mask >> i & 1 == 1).collect())
    }

    #[test]
    fn equilibrium_rule_examples() {
        let f = ProtocolSpec::two_player_equilibrium();
        assert!((f.decide(&h(&[]), 1).unwrap() - 2.0 / 3.0).abs() < TOL);
        assert!((f.decide(&h(&[1]), 2).unwrap() - 2.0 / 3.0).abs() < TOL);
        assert_eq!(f.decide(&h(&[1, 1, 0]), 4).unwrap(), 1.0);
        assert_eq!(f.decide(&h(&[1, 0, 1, 0]), 5).unwrap(), 1.0);
    }

    #[test]
    fn history_length_mismatch_is_rejected() {
        let f = ProtocolSpec::two_player_equilibrium();
        assert_eq!(f.decide(&h(&[1]), 3), Err(Error::HistoryLength { slot: 3, expected: 2, got: 1 }));
        assert_eq!(f.decide(&h(&[]), 0), Err(Error::ZeroSlot));
        assert!(matches!(TransmissionHistory::from_bits(&[0, 2]), Err(Error::NotBinary { index: 1, value: 2 })));
    }

    #[test]
    fn stationary_matches_equilibrium_rule_exhaustively() {
        // Direct transcription of the two-player rule as the reference.
        let reference = |hist: &TransmissionHistory| match hist.last() {
            None | Some(true) => 2.0 / 3.0,
            Some(false) => 1.0,
        };
        let f = ProtocolSpec::two_player_equilibrium();
        let g = ProtocolSpec::stationary_two_player(vec![2.0 / 3.0, 1.0]).unwrap();
        for len in 0..=12 {
            for hist in all_histories(len) {
                let t = len as u64 + 1;
                let a = f.decide(&hist, t).unwrap();
                let b = g.decide(&hist, t).unwrap();
                assert!((a - reference(&hist)).abs() < TOL);
                assert!((a - b).abs() < TOL);
            }
        }
    }

    #[test]
    fn stationary_examples() {
        let persistent = ProtocolSpec::stationary_two_player(vec![1.0]).unwrap();
        for len in 0..6 {
            for hist in all_histories(len) {
                assert_eq!(persistent.decide(&hist, len as u64 + 1).unwrap(), 1.0);
            }
        }
        let g = ProtocolSpec::stationary_two_player(vec![0.5, 1.0]).unwrap();
        assert_eq!(g.decide(&h(&[1, 0]), 3).unwrap(), 1.0);
        assert_eq!(g.decide(&h(&[0, 1]), 3).unwrap(), 0.5);
        assert_eq!(ProtocolSpec::stationary_two_player(vec![]), Err(Error::EmptySequence));
        assert!(ProtocolSpec::stationary_two_player(vec![1.5]).is_err());
    }

    #[test]
    fn age_based_examples() {
        let persistent = ProtocolSpec::age_based(vec![1.0], 1.0).unwrap();
        assert_eq!(persistent.decide(&h(&[0, 1, 1]), 4).unwrap(), 1.0);
        let f = ProtocolSpec::age_based(vec![0.3, 0.7], 0.5).unwrap();
        for hist in all_histories(1) {
            assert_eq!(f.decide(&hist, 2).unwrap(), 0.7);
        }
        assert_eq!(f.decide(&h(&[1, 1, 1]), 4).unwrap(), 0.5);
        let aloha = ProtocolSpec::age_based(vec![], 0.25).unwrap();
        for t in 1..20u64 {
            let hist: TransmissionHistory = (1..t).map(|s| s % 3 == 0).collect();
            assert_eq!(aloha.decide(&hist, t).unwrap(), 0.25);
        }
        assert_eq!(f.is_non_blocking(), Some(true));
        assert_eq!(persistent.is_non_blocking(), Some(false));
        assert_eq!(ProtocolSpec::two_player_equilibrium().is_non_blocking(), None);
    }

    #[test]
    fn backoff_examples() {
        let beb = ProtocolSpec::backoff(vec![1.0, 0.5, 0.25, 0.125], 0.0625).unwrap();
        assert_eq!(beb.decide(&h(&[1, 0, 1]), 4).unwrap(), 0.25);
        assert_eq!(beb.decide(&h(&[1, 1, 0]), 4).unwrap(), 0.25);
        assert_eq!(beb.decide(&h(&[0, 1, 1]), 4).unwrap(), 0.25);
        assert_eq!(beb.decide(&h(&[1, 1, 1, 1, 1]), 6).unwrap(), 0.0625);
        let persistent = ProtocolSpec::backoff(vec![], 1.0).unwrap();
        assert_eq!(persistent.decide(&h(&[1, 1]), 3).unwrap(), 1.0);
    }

    #[test]
    fn binary_exponential_backoff_levels() {
        let ProtocolSpec::Backoff(b) = ProtocolSpec::binary_exponential_backoff(3) else { unreachable!() };
        assert_eq!(b.probs(), &[0.5, 0.25, 0.125]);
        assert_eq!(b.tail(), 0.0625);
        assert_eq!(b.shifted(1).after_failures(0), 0.25);
    }

    #[test]
    fn deadline_schedule_n100_half() {
        let s = DeadlineSchedule::new(100, 0.5).unwrap();
        assert_eq!(s.k(), 3);
        assert_eq!(s.lengths(), &[271, 135, 67, 100]);
        assert_eq!(s.t0(), 574);
        assert!((s.t0() as f64) <= s.deadline_bound());
        assert!((s.deadline_bound() - 643.656).abs() < 1e-3);
        assert_eq!(s.sizes(), &[50.0, 25.0, 12.5, 6.25]);
        assert_eq!(s.interval_of(271), Some(1));
        assert_eq!(s.interval_of(272), Some(2));
        assert_eq!(s.interval_of(406), Some(2));
        assert_eq!(s.interval_of(407), Some(3));
        assert_eq!(s.interval_of(573), Some(4));
        assert_eq!(s.interval_of(574), None);
        assert_eq!(s.interval_start(2), 272);
        assert_eq!(s.interval_end(4), 573);
    }

    #[test]
    fn deadline_protocol_examples() {
        let q = ProtocolSpec::deadline(DeadlineSchedule::new(100, 0.5).unwrap());
        assert!((q.age_probability(1).unwrap() - 1.0 / 50.0).abs() < TOL);
        assert!((q.age_probability(272).unwrap() - 1.0 / 25.0).abs() < TOL);
        assert!((q.age_probability(500).unwrap() - 0.16).abs() < TOL);
        assert_eq!(q.age_probability(574), Some(1.0));
        let hist: TransmissionHistory = (0..600).map(|i| i % 2 == 0).collect();
        assert_eq!(q.decide(&hist, 601).unwrap(), 1.0);
        assert_eq!(q.class(), ProtocolClass::Deadline);
        assert!(q.is_age_based());
    }

    #[test]
    fn deadline_schedule_rejects_bad_input() {
        assert_eq!(DeadlineSchedule::new(100, 1.0), Err(Error::InvalidBeta(1.0)));
        assert_eq!(DeadlineSchedule::new(100, 0.0), Err(Error::InvalidBeta(0.0)));
        assert!(matches!(DeadlineSchedule::new(100, f64::NAN), Err(Error::InvalidBeta(_))));
        assert!(matches!(DeadlineSchedule::new(1, 0.5), Err(Error::InvalidPlayerCount { .. })));
    }

    #[test]
    fn deadline_schedule_small_n() {
        let s = DeadlineSchedule::new(2, 0.5).unwrap();
        assert_eq!(s.k(), 0);
        assert_eq!(s.lengths(), &[2]);
        assert_eq!(s.t0(), 3);
        // n_1 = 0.2 would give 1/n_1 = 5; the probability is capped.
        let s = DeadlineSchedule::new(2, 0.1).unwrap();
        assert_eq!(s.interval_probability(1), 1.0);
    }

    #[test]
    fn deadline_tie_resolves_to_strict_side() {
        // 0.1 * 100 == sqrt(100): beta^(k+1) n <= sqrt(n) holds at k = 0.
        let s = DeadlineSchedule::new(100, 0.1).unwrap();
        assert_eq!(s.k(), 0);
        assert_eq!(s.t0(), 101);
    }

    #[test]
    fn prefixed_delegates_with_real_history() {
        let f = ProtocolSpec::two_player_equilibrium();
        let g = ProtocolSpec::prefixed(vec![false, false, true], f.clone());
        assert_eq!(g.decide(&h(&[]), 1).unwrap(), 0.0);
        assert_eq!(g.decide(&h(&[0, 0]), 3).unwrap(), 1.0);
        assert!((g.decide(&h(&[0, 0, 1]), 4).unwrap() - 2.0 / 3.0).abs() < TOL);
        assert_eq!(g.class(), ProtocolClass::General);
    }
}
