//! Absorbing Markov chains and the two-player analysis built on them.
//!
//! Hitting times solve `k_target = 0`, `k_s = 1 + Σ_s' P(s, s') k_s'` by dense
//! Gaussian elimination with partial pivoting. Before solving, a reachability
//! scan over the support graph rejects chains in which some state cannot
//! reach the target, since those have infinite expected hitting time.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::protocol::check_probability;

/// Row sums must match 1 within this.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Largest accepted relative residual of a hitting-time solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AbsorbingChain {
    states: Vec<String>,
    matrix: Vec<Vec<f64>>,
    target: usize,
}

impl AbsorbingChain {
    pub fn new(states: Vec<String>, matrix: Vec<Vec<f64>>, target: usize) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidChain("no states".into()));
        }
        if target >= n {
            return Err(Error::InvalidChain(format!("target index {target} out of range")));
        }
        if matrix.len() != n {
            return Err(Error::InvalidChain(format!("{} rows for {n} states", matrix.len())));
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidChain(format!("row {} has {} entries", states[i], row.len())));
            }
            for &p in row {
                check_probability(p).map_err(|_| Error::InvalidChain(format!("row {} has entry {p}", states[i])))?;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidChain(format!("row {} sums to {sum}", states[i])));
            }
        }
        if matrix[target][target] != 1.0 {
            return Err(Error::InvalidChain(format!("target {} is not absorbing", states[target])));
        }
        Ok(Self { states, matrix, target })
    }

    /// Builds a chain from named sparse rows; states absent from `rows` get
    /// no outgoing mass and are rejected by validation, except the target,
    /// which is made absorbing.
    pub fn from_rows(states: &[&str], rows: &[(&str, &[(&str, f64)])], target: &str) -> Result<Self> {
        let index = |name: &str| {
            states.iter().position(|s| *s == name).ok_or_else(|| Error::InvalidChain(format!("unknown state {name}")))
        };
        let n = states.len();
        let mut matrix = vec![vec![0.0; n]; n];
        let t = index(target)?;
        matrix[t][t] = 1.0;
        for (from, entries) in rows {
            let i = index(from)?;
            for (to, p) in entries.iter() {
                matrix[i][index(to)?] += p;
            }
        }
        Self::new(states.iter().map(|s| s.to_string()).collect(), matrix, t)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn probability(&self, from: &str, to: &str) -> Option<f64> {
        Some(self.matrix[self.index_of(from)?][self.index_of(to)?])
    }

    /// Which states reach the target with positive probability.
    #[allow(clippy::needless_range_loop)]
    pub fn reaches_target(&self) -> Vec<bool> {
        let n = self.len();
        let mut reach = vec![false; n];
        reach[self.target] = true;
        let mut queue = VecDeque::from([self.target]);
        // Walk the reversed support graph from the target.
        while let Some(j) = queue.pop_front() {
            for i in 0..n {
                if !reach[i] && self.matrix[i][j] > 0.0 {
                    reach[i] = true;
                    queue.push_back(i);
                }
            }
        }
        reach
    }

    /// Expected steps to the target from every state.
    pub fn hitting_times(&self) -> Result<HittingTimes> {
        let reach = self.reaches_target();
        if let Some(bad) = reach.iter().position(|&r| !r) {
            return Err(Error::InfiniteLatency { state: self.states[bad].clone() });
        }

        let unknowns: Vec<usize> = (0..self.len()).filter(|&i| i != self.target).collect();
        let m = unknowns.len();
        // (I - Q) k = 1 over the non-target states.
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![1.0; m];
        for (r, &i) in unknowns.iter().enumerate() {
            for (c, &j) in unknowns.iter().enumerate() {
                a[r][c] = if r == c { 1.0 } else { 0.0 } - self.matrix[i][j];
            }
        }
        solve_dense(&mut a, &mut b)?;

        let mut values = vec![0.0; self.len()];
        for (r, &i) in unknowns.iter().enumerate() {
            values[i] = b[r];
        }
        let residual = self.residual(&values);
        if residual.is_nan() || residual >= RESIDUAL_TOLERANCE {
            return Err(Error::Residual { residual });
        }
        Ok(HittingTimes { states: self.states.clone(), values, residual })
    }

    /// Largest violation of the hitting-time equations, relative to the
    /// scale of `values`.
    pub fn residual(&self, values: &[f64]) -> f64 {
        let scale = values.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let mut worst = values[self.target].abs();
        for (i, row) in self.matrix.iter().enumerate() {
            if i == self.target {
                continue;
            }
            let rhs: f64 = 1.0 + row.iter().zip(values).map(|(p, k)| p * k).sum::<f64>();
            worst = worst.max((values[i] - rhs).abs());
        }
        worst / scale
    }
}

impl fmt::Display for AbsorbingChain {
    /// Plain-text transition table.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.states.iter().map(|s| s.len()).max().unwrap_or(1).max(8);
        write!(f, "{:>width$}", "")?;
        for s in &self.states {
            write!(f, " {s:>width$}")?;
        }
        writeln!(f)?;
        for (i, row) in self.matrix.iter().enumerate() {
            let mark = if i == self.target { "*" } else { "" };
            write!(f, "{:>width$}", format!("{}{}", mark, self.states[i]))?;
            for p in row {
                write!(f, " {p:>width$.6}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting; the solution replaces `b`.
#[allow(clippy::needless_range_loop)]
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<()> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).ok_or(Error::Singular)?;
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::Singular);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * b[k]).sum();
        b[row] = (b[row] - tail) / a[row][row];
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HittingTimes {
    pub states: Vec<String>,
    pub values: Vec<f64>,
    pub residual: f64,
}

impl HittingTimes {
    pub fn get(&self, state: &str) -> Option<f64> {
        self.states.iter().position(|s| s == state).map(|i| self.values[i])
    }
}

/// Both players run the equilibrium rule, seen from one of them.
///
/// `A`: both pending and both know it. `B`: both pending, the observer did
/// not transmit last slot. `C`: only the observer is pending. `D`: the
/// observer has succeeded.
pub fn chain_m() -> AbsorbingChain {
    AbsorbingChain::from_rows(
        &["A", "B", "C", "D"],
        &[
            ("A", &[("A", 4.0 / 9.0), ("B", 1.0 / 9.0), ("C", 2.0 / 9.0), ("D", 2.0 / 9.0)]),
            ("B", &[("A", 1.0)]),
            ("C", &[("D", 1.0)]),
        ],
        "D",
    )
    .expect("chain M is well formed")
}

/// Expected success time of a pending player whose last action was `j`
/// (1 = transmitted, 0 = quiet) when both follow the equilibrium rule.
///
/// After a quiet slot the player is in `B` with probability 1/3 and in `C`
/// with probability 2/3.
pub fn two_player_success_time(j: u8) -> Result<f64> {
    let k = chain_m().hitting_times()?;
    let get = |s| k.get(s).expect("state of chain M");
    match j {
        1 => Ok(get("A")),
        0 => Ok(get("B") / 3.0 + 2.0 * get("C") / 3.0),
        _ => Err(Error::InvalidArgument(format!("last action must be 0 or 1, got {j}"))),
    }
}

/// Best-response MDP of a player facing the equilibrium rule.
///
/// States `A`, `E` (quiet last slot after a collision, unsure whether the
/// opponent is still pending), `F` (two quiet slots: alone for sure) and `D`
/// (done). The action is the transmission probability; every step outside
/// `D` costs 1 and the process starts in `A`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoPlayerMdp;

impl TwoPlayerMdp {
    pub const STATES: [&'static str; 4] = ["A", "E", "F", "D"];
    pub const COST: [f64; 4] = [1.0, 1.0, 1.0, 0.0];
    pub const INITIAL: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

    /// Transition matrix when action `a` is taken in every state.
    pub fn transition(a: f64) -> Result<[[f64; 4]; 4]> {
        check_probability(a)?;
        Ok([
            [2.0 * a / 3.0, 1.0 - a, 0.0, a / 3.0],
            [a / 3.0, 0.0, 1.0 - a, 2.0 * a / 3.0],
            [0.0, 0.0, 1.0 - a, a],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    /// Chain induced by the stationary policy taking `actions[s]` in state
    /// `s` for `s` in `A`, `E`, `F`.
    pub fn policy_chain(actions: [f64; 3]) -> Result<AbsorbingChain> {
        let mut matrix = vec![vec![0.0; 4]; 4];
        for (s, &a) in actions.iter().enumerate() {
            matrix[s] = Self::transition(a)?[s].to_vec();
        }
        matrix[3] = vec![0.0, 0.0, 0.0, 1.0];
        AbsorbingChain::new(Self::STATES.iter().map(|s| s.to_string()).collect(), matrix, 3)
    }

    /// Expected total cost from each state under a stationary policy.
    pub fn policy_cost(actions: [f64; 3]) -> Result<HittingTimes> {
        Self::policy_chain(actions)?.hitting_times()
    }
}

/// Entry-wise transition matrix of the best-response MDP under action `a`.
pub fn mdp_transition(a: f64) -> Result<[[f64; 4]; 4]> {
    TwoPlayerMdp::transition(a)
}

/// The deviator transmits with `p_a` in `A`, `p_e` in `E` and 1 in `F`.
pub fn chain_m_prime(p_a: f64, p_e: f64) -> Result<AbsorbingChain> {
    TwoPlayerMdp::policy_chain([p_a, p_e, 1.0])
}

/// Expected latency from `A` and from `E` of the stationary best-response
/// policy `(p_a, p_e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyValue {
    pub from_a: f64,
    pub from_e: f64,
}

pub fn evaluate_stationary_policy(p_a: f64, p_e: f64) -> Result<PolicyValue> {
    let k = chain_m_prime(p_a, p_e)?.hitting_times()?;
    Ok(PolicyValue { from_a: k.values[0], from_e: k.values[1] })
}

/// `(2 - p) / (2 p (1 - p))`.
pub fn stationary_latency_closed_form(p: f64) -> f64 {
    (2.0 - p) / (2.0 * p * (1.0 - p))
}

/// Chain M generalised to first-slot probability `p` (second slot 1).
pub fn stationary_chain(p: f64) -> Result<AbsorbingChain> {
    check_probability(p)?;
    let q = 1.0 - p;
    AbsorbingChain::from_rows(
        &["A", "B", "C", "D"],
        &[("A", &[("A", p * p), ("B", q * q), ("C", p * q), ("D", p * q)]), ("B", &[("A", 1.0)]), ("C", &[("D", 1.0)])],
        "D",
    )
}

/// Expected latency when both players transmit with `p` from `A` and with 1
/// after a quiet slot. Checked against the closed form.
pub fn stationary_two_player_latency(p: f64) -> Result<f64> {
    let k = stationary_chain(p)?.hitting_times()?.values[0];
    let closed = stationary_latency_closed_form(p);
    if (k - closed).abs() > RESIDUAL_TOLERANCE * closed.max(1.0) {
        return Err(Error::Residual { residual: (k - closed).abs() });
    }
    Ok(k)
}
