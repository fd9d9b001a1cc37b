//! Acceptance criteria, one PASS/FAIL line each. Tolerances and seeds are
//! fixed here; seeds were chosen before looking at any outcome.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use contention_core::chain::{
    chain_m, evaluate_stationary_policy, stationary_latency_closed_form, stationary_two_player_latency,
    two_player_success_time, RESIDUAL_TOLERANCE,
};
use contention_core::channel::{estimate_latency, success_probability};
use contention_core::equilibrium::{
    all_prefixes, backoff_zero_prefix_probe, consistency_probability, lemma1_check, stationary_equilibrium_scan,
    theorem3_probe, CheckMethod, Verdict,
};
use contention_core::experiments::run_efficiency_experiment;
use contention_core::protocol::DeadlineSchedule;
use contention_core::ProtocolSpec;
use contention_lab::config::{default_age_based, default_scan_grid};
use contention_lab::ThreadPool;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: String) -> Outcome {
    if cond {
        Ok(what)
    } else {
        Err(what)
    }
}

fn pool() -> ThreadPool {
    ThreadPool::available()
}

fn criterion_1() -> Outcome {
    let k = chain_m().hitting_times().map_err(|e| e.to_string())?;
    let want = [("A", 3.0), ("B", 4.0), ("C", 1.0), ("D", 0.0)];
    let hits_ok = want.iter().all(|(s, v)| (k.get(s).unwrap() - v).abs() < RESIDUAL_TOLERANCE);
    let j1 = two_player_success_time(1).map_err(|e| e.to_string())?;
    let j0 = two_player_success_time(0).map_err(|e| e.to_string())?;
    check(
        hits_ok && k.residual < 1e-9 && (j1 - 3.0).abs() < 1e-9 && (j0 - 2.0).abs() < 1e-9,
        format!("k = {:?}, residual {:.1e}, success time (j=1, j=0) = ({j1}, {j0})", k.values, k.residual),
    )
}

fn criterion_2() -> Outcome {
    let (mut err_a, mut err_e) = (0.0f64, 0.0f64);
    for i in 0..=20 {
        for j in 0..=20 {
            let v = evaluate_stationary_policy(i as f64 / 20.0, j as f64 / 20.0).map_err(|e| e.to_string())?;
            err_a = err_a.max((v.from_a - 3.0).abs());
            err_e = err_e.max((v.from_e - 2.0).abs());
        }
    }
    check(
        err_a <= 1e-9 && err_e <= 1e-9,
        format!("21x21 grid: max |k'_A - 3| = {err_a:.1e}, max |k'_E - 2| = {err_e:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for i in 1..=19 {
        let p = i as f64 / 20.0;
        let chain = stationary_two_player_latency(p).map_err(|e| e.to_string())?;
        let oracle = (2.0 - p) / (2.0 * p * (1.0 - p));
        worst = worst.max((chain - oracle).abs());
        worst = worst.max((stationary_latency_closed_form(p) - oracle).abs());
    }
    let rows = stationary_equilibrium_scan(&default_scan_grid(), 1e-9).map_err(|e| e.to_string())?;
    let indifferent: Vec<f64> = rows.iter().filter(|r| r.verdict == Verdict::Indifferent).map(|r| r.p).collect();
    let two_thirds = rows.iter().find(|r| (r.p - 2.0 / 3.0).abs() < 1e-12).unwrap();
    let min_elsewhere =
        rows.iter().filter(|r| (r.p - 2.0 / 3.0).abs() >= 1e-12).map(|r| r.gain).fold(f64::INFINITY, f64::min);
    check(
        worst < 1e-9
            && indifferent.len() == 1
            && (indifferent[0] - 2.0 / 3.0).abs() < 1e-12
            && two_thirds.gain <= 1e-9
            && min_elsewhere >= 0.05,
        format!(
            "closed form max error {worst:.1e}; indifferent points {indifferent:?}; gain at 2/3 {:.1e}; min gain elsewhere {min_elsewhere:.4}",
            two_thirds.gain
        ),
    )
}

fn criterion_4() -> Outcome {
    let f = ProtocolSpec::two_player_equilibrium();
    let s = estimate_latency(&[f.clone(), f], 1_000_000, 10_000, 404, &pool()).map_err(|e| e.to_string())?;
    check(
        (2.95..=3.05).contains(&s.truncated_mean) && s.completion_prob > 0.9999,
        format!("mean {:.5} ± {:.5}, completion {}", s.truncated_mean, s.truncated_mean_stderr, s.completion_prob),
    )
}

fn criterion_5() -> Outcome {
    let f = ProtocolSpec::two_player_equilibrium();
    let mut lines = Vec::new();
    let mut ok = true;
    for prefix in all_prefixes(3).filter(|p| !p.is_empty()) {
        if consistency_probability(&f, &prefix).unwrap() == 0.0 {
            continue;
        }
        let exact = lemma1_check(&f, &prefix, 2, CheckMethod::Analytic, &pool()).map_err(|e| e.to_string())?;
        let mc = lemma1_check(
            &f,
            &prefix,
            2,
            CheckMethod::MonteCarlo { trials: 100_000, horizon: 10_000, seed: 505 },
            &pool(),
        )
        .map_err(|e| e.to_string())?;
        let agree = (mc.gain - exact.gain).abs() <= 3.0 * mc.gain_stderr;
        ok &= exact.gain.abs() <= 1e-9 && agree;
        let bits: String = prefix.iter().map(|&b| if b { '1' } else { '0' }).collect();
        lines.push(format!("{bits}: exact {:.1e}, mc {:+.4}±{:.4}", exact.gain, mc.gain, mc.gain_stderr));
    }
    check(ok, lines.join("; "))
}

fn criterion_6() -> Outcome {
    let s = DeadlineSchedule::new(100, 0.5).map_err(|e| e.to_string())?;
    let invariant = 0.5f64.powi(4) * 100.0 <= 10.0 && 10.0 < 0.5f64.powi(3) * 100.0;
    check(
        s.k() == 3
            && s.lengths() == [271, 135, 67, 100]
            && s.t0() == 574
            && (s.t0() as f64) <= 643.6
            && (s.deadline_bound() - 643.656).abs() < 1e-3
            && invariant,
        format!("k {}, lengths {:?}, t0 {}, bound {:.4}", s.k(), s.lengths(), s.t0(), s.deadline_bound()),
    )
}

fn criterion_7() -> Outcome {
    let mut reports = Vec::new();
    for (n, seed) in [(100, 701), (400, 702), (1600, 703)] {
        reports.push(run_efficiency_experiment(n, 0.5, 10_000, seed, &pool()).map_err(|e| e.to_string())?);
    }
    let freq: Vec<(usize, f64, f64)> =
        reports.iter().map(|r| (r.n, r.overall_failure_freq, r.overall_failure_stderr)).collect();
    let monotone = freq.windows(2).all(|w| w[1].1 <= w[0].1 + 3.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt());
    let malformed: u64 = reports.iter().map(|r| r.malformed_successes).sum();
    check(
        freq[0].1 <= 0.05 && freq[2].1 <= 0.01 && monotone && malformed == 0,
        format!("(n, failure freq, se) = {freq:?}; malformed successful trials {malformed}"),
    )
}

/// Exact conditional contraction probabilities from the pending-count chain.
fn exact_contraction(n: usize, beta: f64) -> Vec<f64> {
    let s = DeadlineSchedule::new(n, beta).unwrap();
    let step = |dist: &[f64], q: f64| {
        let mut next = vec![0.0; dist.len()];
        for (r, &m) in dist.iter().enumerate() {
            let p = success_probability(r, q);
            next[r] += m * (1.0 - p);
            if r > 0 {
                next[r - 1] += m * p;
            }
        }
        next
    };
    (1..=s.intervals())
        .map(|j| {
            let before = if j == 1 { n } else { s.sizes()[j - 1].floor() as usize };
            let after = if j < s.intervals() { s.sizes()[j].floor() as usize } else { 0 };
            let mut dist = vec![0.0; n + 1];
            dist[n] = 1.0;
            for t in 1..s.interval_start(j) {
                dist = step(&dist, s.probability_at(t));
            }
            dist.iter_mut().skip(before + 1).for_each(|m| *m = 0.0);
            let mass: f64 = dist.iter().sum();
            for t in s.interval_start(j)..=s.interval_end(j) {
                dist = step(&dist, s.probability_at(t));
            }
            dist[..=after].iter().sum::<f64>() / mass
        })
        .collect()
}

// The exact probability for the first interval (about 0.9831 at n = 100)
// sits below its floor, so this criterion is expected to fail there. The
// exact column is printed so the gap is visible regardless of the seed.
fn criterion_8() -> Outcome {
    let report = run_efficiency_experiment(100, 0.5, 10_000, 7, &pool()).map_err(|e| e.to_string())?;
    let exact = exact_contraction(100, 0.5);
    let mut ok = true;
    let mut lines = Vec::new();
    for (row, p) in report.interval_table.iter().zip(&exact) {
        let f = row.frequency.unwrap_or(f64::NAN);
        let pass = f >= row.analytic_floor;
        ok &= pass;
        lines.push(format!(
            "j={} freq {f:.4} (n={}) floor {:.5} exact {p:.5}{}",
            row.j,
            row.precondition_trials,
            row.analytic_floor,
            if pass { "" } else { " BELOW FLOOR" }
        ));
    }
    check(ok, lines.join("; "))
}

fn criterion_9() -> Outcome {
    let mut worst = f64::INFINITY;
    for m in [10usize, 100, 1000] {
        for r in 1..=m {
            let lhs = success_probability(r, 1.0 / m as f64);
            let rhs = r as f64 / m as f64 / std::f64::consts::E;
            worst = worst.min(lhs - rhs);
        }
    }
    check(worst >= 0.0, format!("min over r <= m of lhs - rhs = {worst:.3e}"))
}

fn criterion_10() -> Outcome {
    let beb = ProtocolSpec::binary_exponential_backoff(32);
    let b = backoff_zero_prefix_probe(&beb, 2, 100_000, 10_000, 1001, &pool()).map_err(|e| e.to_string())?;
    let tau = b.tau_star.unwrap();
    let witness = b.deviation_latency.mean >= (tau + 1) as f64 && b.verdict != Verdict::Indifferent;

    let g = default_age_based();
    let t = theorem3_probe(&g, 2, 100_000, 10_000, 1002, &pool()).map_err(|e| e.to_string())?;
    let better = t.verdict == Verdict::Profitable;
    check(
        witness && better,
        format!(
            "backoff: L = {:.4}±{:.4}, floor(L) + 1 = {}, deviator {:.4}±{:.4}, gain {:+.4} vs tol {:.4}; \
             blocking slot: Q {:.4}, Q' {:.4}, gain {:+.4} vs tol {:.4}, tau* {}",
            b.baseline_latency.mean,
            b.baseline_latency.stderr,
            tau + 1,
            b.deviation_latency.mean,
            b.deviation_latency.stderr,
            b.gain,
            b.tolerance,
            t.baseline_latency.mean,
            t.deviation_latency.mean,
            t.gain,
            t.tolerance,
            t.tau_star.unwrap()
        ),
    )
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 7] = [
        &["analyze-two-player"],
        &["simulate", "--n", "3", "--trials", "3000"],
        &["scan-stationary"],
        &["lemma1", "--method", "monte-carlo", "--trials", "3000"],
        &["probe-theorem3", "--trials", "3000"],
        &["probe-backoff", "--trials", "3000"],
        &["deadline-experiment", "--n", "100", "--trials", "500"],
    ];
    let mut compared = 0;
    for args in runs {
        for format in ["csv", "json"] {
            let mut outputs = Vec::new();
            let path = dir.path().join(format!("{}.{format}", args[0]));
            for _ in 0..2 {
                let status = Command::new(env!("CARGO_BIN_EXE_contention"))
                    .args(args)
                    .args(["--seed", "1111", "--workers", "1", "--format", format, "--out"])
                    .arg(&path)
                    .output()
                    .map_err(|e| e.to_string())?;
                if !status.status.success() {
                    return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr)));
                }
                outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
            }
            if outputs[0] != outputs[1] {
                return Err(format!("{} --format {format} differs between runs", args[0]));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} output files identical across reruns"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("exact two-player analysis", criterion_1),
        ("best-response indifference", criterion_2),
        ("closed-form uniqueness", criterion_3),
        ("Monte Carlo vs analytic", criterion_4),
        ("prefix indifference", criterion_5),
        ("deadline schedule", criterion_6),
        ("efficiency at desk scale", criterion_7),
        ("interval contraction floors", criterion_8),
        ("fair-share inequality sweep", criterion_9),
        ("impossibility probes", criterion_10),
        ("reproducibility", criterion_11),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.iter().any(|o| o == &id.to_string()) {
            continue;
        }
        let start = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} ({name}) [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({name}) [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
