//! One function per subcommand. Each returns a human-readable summary, the
//! JSON result and the CSV table; the caller decides what to write where.

use std::fmt::Write as _;

use contention_core::chain::{
    chain_m, evaluate_stationary_policy, stationary_latency_closed_form, two_player_success_time,
};
use contention_core::channel::{estimate_latency, run_trials, LatencyStats};
use contention_core::equilibrium::{
    all_prefixes, backoff_zero_prefix_probe, consistency_probability, lemma1_check, stationary_equilibrium_scan,
    theorem3_probe, CheckMethod, DeviationReport,
};
use contention_core::experiments::{run_efficiency_experiment, run_efficiency_experiment_with_rows, EfficiencyReport};
use contention_core::{Executor, ProtocolSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CommandName, Format, MethodName, Prefix, RunConfig};
use crate::output::{cell, Table};
use crate::Failure;

pub struct Output {
    pub summary: String,
    pub result: Value,
    pub table: Table,
}

/// Shortest decimal form with at most nine fractional digits.
pub fn short(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::Runtime(e.into()))
}

pub fn run<E: Executor + ?Sized>(config: &RunConfig, exec: &E) -> Result<Output, Failure> {
    match config.command() {
        CommandName::AnalyzeTwoPlayer => analyze_two_player(),
        CommandName::Simulate => simulate(config, exec),
        CommandName::ScanStationary => scan_stationary(config),
        CommandName::Lemma1 => lemma1(config, exec),
        CommandName::ProbeTheorem3 => probe(config, exec, theorem3_probe),
        CommandName::ProbeBackoff => probe(config, exec, backoff_zero_prefix_probe),
        CommandName::DeadlineExperiment => deadline_experiment(config, exec),
    }
}

const GRID_POINTS: usize = 21;

fn analyze_two_player() -> Result<Output, Failure> {
    let chain = chain_m();
    let k = chain.hitting_times()?;
    let after_transmit = two_player_success_time(1)?;
    let after_quiet = two_player_success_time(0)?;

    let mut table = Table::new(["p_a", "p_e", "latency_from_a", "latency_from_e"]);
    let (mut err_a, mut err_e) = (0.0f64, 0.0f64);
    let (mut sum_a, mut sum_e) = (0.0, 0.0);
    for i in 0..GRID_POINTS {
        for j in 0..GRID_POINTS {
            let (pa, pe) = (i as f64 / 20.0, j as f64 / 20.0);
            let v = evaluate_stationary_policy(pa, pe)?;
            err_a = err_a.max((v.from_a - 3.0).abs());
            err_e = err_e.max((v.from_e - 2.0).abs());
            sum_a += v.from_a;
            sum_e += v.from_e;
            table.push(vec![pa.to_string(), pe.to_string(), v.from_a.to_string(), v.from_e.to_string()]);
        }
    }

    let cells = (GRID_POINTS * GRID_POINTS) as f64;
    let (mean_a, mean_e) = (sum_a / cells, sum_e / cells);
    let get = |s: &str| k.get(s).expect("state of the two-player chain");
    let mut summary = String::new();
    writeln!(summary, "two-player chain:\n{chain}").ok();
    writeln!(
        summary,
        "(k_A, k_B, k_C, k_D) = ({}, {}, {}, {})  residual {:.1e}",
        short(get("A")),
        short(get("B")),
        short(get("C")),
        short(get("D")),
        k.residual
    )
    .ok();
    writeln!(summary, "expected latency after transmitting in slot 1: {}", short(after_transmit)).ok();
    writeln!(summary, "expected latency after staying quiet in slot 1: {}", short(after_quiet)).ok();
    writeln!(
        summary,
        "best response over a {GRID_POINTS}x{GRID_POINTS} (p_A, p_E) grid: mean latency from A = {mean_a:.1} (max |k - 3| {err_a:.1e}), from E = {mean_e:.1} (max |k - 2| {err_e:.1e})"
    )
    .ok();

    let result = json!({
        "hitting_times": k.states.iter().zip(&k.values).map(|(s, v)| (s.clone(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "residual": k.residual,
        "latency_after_transmit": after_transmit,
        "latency_after_quiet": after_quiet,
        "best_response_grid": {
            "points_per_axis": GRID_POINTS,
            "mean_latency_from_a": mean_a,
            "max_error_from_a": err_a,
            "mean_latency_from_e": mean_e,
            "max_error_from_e": err_e,
        },
    });
    Ok(Output { summary, result, table })
}

fn profile(config: &RunConfig) -> Vec<ProtocolSpec> {
    match (&config.protocols, &config.protocol) {
        (Some(list), _) => list.clone(),
        (None, Some(p)) => vec![p.clone(); config.n.expect("resolved")],
        (None, None) => unreachable!("resolved configs carry a protocol"),
    }
}

fn latency_summary(stats: &LatencyStats) -> String {
    let mut s = String::new();
    writeln!(s, "players {}, trials {}, horizon {}", stats.players, stats.trials, stats.horizon).ok();
    writeln!(
        s,
        "truncated mean latency {} ± {} (completion {})",
        short(stats.truncated_mean),
        short(stats.truncated_mean_stderr),
        short(stats.completion_prob)
    )
    .ok();
    for (i, p) in stats.per_player.iter().enumerate().take(8) {
        writeln!(
            s,
            "  player {i}: {} ± {} (completion {})",
            short(p.truncated_mean),
            short(p.stderr),
            short(p.completion_prob)
        )
        .ok();
    }
    if stats.per_player.len() > 8 {
        writeln!(s, "  ({} more players)", stats.per_player.len() - 8).ok();
    }
    let q: Vec<String> =
        stats.max_latency_quantiles.iter().map(|q| format!("q{}={}", short(q.level), q.value)).collect();
    writeln!(s, "max latency quantiles: {}", q.join(" ")).ok();
    s
}

fn simulate<E: Executor + ?Sized>(config: &RunConfig, exec: &E) -> Result<Output, Failure> {
    let profile = profile(config);
    let (trials, horizon, seed) =
        (config.trials.expect("resolved"), config.horizon.expect("resolved"), config.seed.expect("resolved"));
    let stats = estimate_latency(&profile, trials, horizon, seed, exec)?;

    let mut header = vec!["trial".to_string(), "finished".into(), "slots_elapsed".into(), "max_latency".into()];
    header.extend((0..profile.len()).map(|i| format!("latency_{i}")));
    let mut table = Table::new(header);
    if config.format == Some(Format::Csv) {
        for (i, r) in run_trials(&profile, trials, horizon, seed, exec)?.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                r.finished().to_string(),
                r.slots_elapsed.to_string(),
                r.max_truncated().to_string(),
            ];
            row.extend(r.success_times.iter().map(|t| cell(t.slot())));
            table.push(row);
        }
    }
    Ok(Output { summary: latency_summary(&stats), result: to_value(&stats)?, table })
}

fn scan_stationary(config: &RunConfig) -> Result<Output, Failure> {
    let grid = config.grid.as_deref().expect("resolved");
    let rows = stationary_equilibrium_scan(grid, config.tolerance.expect("resolved"))?;
    let mut table = Table::new(["p", "baseline", "closed_form", "best_deviation", "best_latency", "gain", "verdict"]);
    let mut summary = String::from("p         baseline      best deviation     latency       gain          verdict\n");
    for r in &rows {
        let closed = stationary_latency_closed_form(r.p);
        table.push(vec![
            r.p.to_string(),
            r.baseline.to_string(),
            closed.to_string(),
            r.best_deviation.clone(),
            r.best_latency.to_string(),
            r.gain.to_string(),
            format!("{:?}", r.verdict),
        ]);
        writeln!(
            summary,
            "{:<9} {:<13} {:<18} {:<13} {:<13} {:?}",
            short(r.p),
            short(r.baseline),
            r.best_deviation,
            short(r.best_latency),
            short(r.gain),
            r.verdict
        )
        .ok();
    }
    Ok(Output { summary, result: to_value(&rows)?, table })
}

fn deviation_table() -> Table {
    Table::new([
        "label",
        "players",
        "tau_star",
        "consistency_probability",
        "baseline_latency",
        "baseline_stderr",
        "deviation_latency",
        "deviation_stderr",
        "gain",
        "gain_stderr",
        "tolerance",
        "verdict",
        "exactly_two_pending_freq",
    ])
}

fn deviation_row(label: &str, r: &DeviationReport) -> Vec<String> {
    vec![
        label.to_string(),
        r.players.to_string(),
        cell(r.tau_star),
        cell(r.consistency_probability),
        r.baseline_latency.mean.to_string(),
        r.baseline_latency.stderr.to_string(),
        r.deviation_latency.mean.to_string(),
        r.deviation_latency.stderr.to_string(),
        r.gain.to_string(),
        r.gain_stderr.to_string(),
        r.tolerance.to_string(),
        format!("{:?}", r.verdict),
        cell(r.exactly_two_pending_freq),
    ]
}

fn deviation_summary(label: &str, r: &DeviationReport) -> String {
    let mut s = format!(
        "{label}: baseline {} ± {}, deviation {} ± {}, gain {} (tolerance {}) -> {:?}",
        short(r.baseline_latency.mean),
        short(r.baseline_latency.stderr),
        short(r.deviation_latency.mean),
        short(r.deviation_latency.stderr),
        short(r.gain),
        short(r.tolerance),
        r.verdict
    );
    if let Some(t) = r.tau_star {
        write!(s, ", tau* = {t}").ok();
    }
    if let Some(f) = r.exactly_two_pending_freq {
        write!(s, ", two pending at tau* in {} of trials", short(f)).ok();
    }
    s.push('\n');
    s
}

fn lemma1<E: Executor + ?Sized>(config: &RunConfig, exec: &E) -> Result<Output, Failure> {
    let f = config.protocol.as_ref().expect("resolved");
    let n = config.n.expect("resolved");
    let method = match config.method.expect("resolved") {
        MethodName::Analytic => CheckMethod::Analytic,
        MethodName::MonteCarlo => CheckMethod::MonteCarlo {
            trials: config.trials.expect("resolved"),
            horizon: config.horizon.expect("resolved"),
            seed: config.seed.expect("resolved"),
        },
    };
    let prefixes: Vec<Vec<bool>> = match &config.prefix {
        Some(p) => vec![p.bits()],
        None => {
            let mut out = Vec::new();
            for p in all_prefixes(3).filter(|p| !p.is_empty()) {
                if consistency_probability(f, &p)? > 0.0 {
                    out.push(p);
                }
            }
            out
        }
    };

    let mut table = deviation_table();
    let mut summary = String::new();
    let mut results = Vec::new();
    for p in &prefixes {
        let report = lemma1_check(f, p, n, method, exec)?;
        let label = Prefix::label(p);
        table.push(deviation_row(&label, &report));
        summary.push_str(&deviation_summary(&format!("prefix {label}"), &report));
        results.push(json!({ "prefix": label, "report": to_value(&report)? }));
    }
    Ok(Output { summary, result: Value::Array(results), table })
}

type Probe<E> = fn(&ProtocolSpec, usize, u64, u64, u64, &E) -> contention_core::Result<DeviationReport>;

fn probe<E: Executor + ?Sized>(config: &RunConfig, exec: &E, probe: Probe<E>) -> Result<Output, Failure> {
    let f = config.protocol.as_ref().expect("resolved");
    let report = probe(
        f,
        config.n.expect("resolved"),
        config.trials.expect("resolved"),
        config.horizon.expect("resolved"),
        config.seed.expect("resolved"),
        exec,
    )?;
    let label = config.command().as_str();
    let mut table = deviation_table();
    table.push(deviation_row(label, &report));
    let mut summary = deviation_summary(label, &report);
    if config.command() == CommandName::ProbeBackoff {
        let tau = report.tau_star.expect("set by the probe");
        writeln!(
            summary,
            "deviator latency {} vs floor(L) + 1 = {}: equality with the baseline {}",
            short(report.deviation_latency.mean),
            tau + 1,
            if report.verdict == contention_core::equilibrium::Verdict::Indifferent {
                "not rejected"
            } else {
                "rejected"
            }
        )
        .ok();
    }
    Ok(Output { summary, result: to_value(&report)?, table })
}

fn efficiency_summary(r: &EfficiencyReport) -> String {
    let mut s = format!(
        "n {}, beta {}, k {}, t0 {} (bound {}), trials {}\n",
        r.n,
        short(r.beta),
        r.k,
        r.t0,
        short(r.deadline_bound),
        r.trials
    );
    writeln!(
        s,
        "pending after t0 in {} trials: frequency {} ± {}",
        r.failures,
        short(r.overall_failure_freq),
        short(r.overall_failure_stderr)
    )
    .ok();
    writeln!(s, "j   length  n_j        condition  event      trials     frequency    floor").ok();
    for row in &r.interval_table {
        writeln!(
            s,
            "{:<3} {:<7} {:<10} <= {:<7} <= {:<7} {:<10} {:<12} {}",
            row.j,
            row.length,
            short(row.size),
            row.before_max,
            row.after_max,
            row.precondition_trials,
            row.frequency.map_or("-".into(), short),
            short(row.analytic_floor)
        )
        .ok();
    }
    let q: Vec<String> = r.max_latency_quantiles.iter().map(|q| format!("q{}={}", short(q.level), q.value)).collect();
    writeln!(s, "max latency quantiles: {}", q.join(" ")).ok();
    s
}

fn deadline_experiment<E: Executor + ?Sized>(config: &RunConfig, exec: &E) -> Result<Output, Failure> {
    let (n, beta, trials, seed) = (
        config.n.expect("resolved"),
        config.beta.expect("resolved"),
        config.trials.expect("resolved"),
        config.seed.expect("resolved"),
    );
    let (report, rows) = if config.format == Some(Format::Csv) {
        run_efficiency_experiment_with_rows(n, beta, trials, seed, exec)?
    } else {
        (run_efficiency_experiment(n, beta, trials, seed, exec)?, Vec::new())
    };
    let mut header = vec!["trial".to_string(), "finished_by_t0".into(), "max_latency".into()];
    header.extend((1..=report.interval_table.len()).map(|j| format!("pending_end_{j}")));
    header.push("pending_after_t0".into());
    let mut table = Table::new(header);
    for r in rows {
        let mut row = vec![r.trial.to_string(), r.finished_by_t0.to_string(), r.max_latency.to_string()];
        row.extend(r.boundary_pending.iter().map(u32::to_string));
        table.push(row);
    }
    Ok(Output { summary: efficiency_summary(&report), result: to_value(&report)?, table })
}
