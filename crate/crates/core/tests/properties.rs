use contention_core::chain::{
    evaluate_stationary_policy, stationary_latency_closed_form, stationary_two_player_latency,
};
use contention_core::channel::{run_trial_recorded, success_probability, SlotOutcome};
use contention_core::equilibrium::{exact_two_player_latency, indifference_solutions, uniqueness_deviation_latencies};
use contention_core::protocol::DeadlineSchedule;
use contention_core::{ProtocolSpec, TransmissionHistory};
use proptest::prelude::*;

fn prob() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64]
}

fn history(max: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 0..max)
}

fn protocol() -> impl Strategy<Value = ProtocolSpec> {
    let probs = || prop::collection::vec(prob(), 0..6);
    prop_oneof![
        (probs(), prob()).prop_map(|(p, t)| ProtocolSpec::age_based(p, t).unwrap()),
        (probs(), prob()).prop_map(|(p, t)| ProtocolSpec::backoff(p, t).unwrap()),
        prop::collection::vec(prob(), 1..5).prop_map(|p| ProtocolSpec::stationary_two_player(p).unwrap()),
        (2usize..500, 0.05..0.95f64).prop_map(|(n, b)| ProtocolSpec::deadline(DeadlineSchedule::new(n, b).unwrap())),
    ]
}

proptest! {
    #[test]
    fn decisions_are_probabilities(f in protocol(), prefix in history(8), h in history(30)) {
        let g = ProtocolSpec::prefixed(prefix, f.clone());
        let hist: TransmissionHistory = h.iter().copied().collect();
        let t = h.len() as u64 + 1;
        for p in [f.decide(&hist, t).unwrap(), g.decide(&hist, t).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn age_based_ignores_history(probs in prop::collection::vec(prob(), 0..6), tail in prob(), a in history(20), b in history(20)) {
        let f = ProtocolSpec::age_based(probs, tail).unwrap();
        let len = a.len().min(b.len());
        let ha: TransmissionHistory = a[..len].iter().copied().collect();
        let hb: TransmissionHistory = b[..len].iter().copied().collect();
        prop_assert_eq!(f.decide(&ha, len as u64 + 1).unwrap(), f.decide(&hb, len as u64 + 1).unwrap());
    }

    #[test]
    fn backoff_sees_only_transmission_count(probs in prop::collection::vec(prob(), 0..6), tail in prob(), a in history(20), perm_seed in any::<u64>()) {
        let f = ProtocolSpec::backoff(probs, tail).unwrap();
        // A rotation keeps the number of transmissions and the length.
        let mut b = a.clone();
        if !b.is_empty() {
            let k = (perm_seed % b.len() as u64) as usize;
            b.rotate_left(k);
        }
        let t = a.len() as u64 + 1;
        let ha: TransmissionHistory = a.into_iter().collect();
        let hb: TransmissionHistory = b.into_iter().collect();
        prop_assert_eq!(f.decide(&ha, t).unwrap(), f.decide(&hb, t).unwrap());
    }

    #[test]
    fn stationary_sees_only_trailing_quiet(p in prop::collection::vec(prob(), 1..5), a in history(15), quiet in 0usize..6) {
        let f = ProtocolSpec::stationary_two_player(p.clone()).unwrap();
        let mut h: Vec<bool> = a;
        h.push(true);
        h.extend(std::iter::repeat_n(false, quiet));
        let hist: TransmissionHistory = h.iter().copied().collect();
        let expected = p[quiet.min(p.len() - 1)];
        prop_assert_eq!(f.decide(&hist, h.len() as u64 + 1).unwrap(), expected);
    }

    #[test]
    fn deadline_schedule_invariants(n in 2usize..20_000, beta in 0.05..0.95f64) {
        let s = DeadlineSchedule::new(n, beta).unwrap();
        let nf = n as f64;
        let k = s.k() as i32;
        prop_assert!(beta.powi(k + 1) * nf <= nf.sqrt() + 1e-9 * nf);
        prop_assert!(nf.sqrt() < beta.powi(k) * nf + 1e-9 * nf);
        prop_assert_eq!(s.lengths().len(), s.k() + 1);
        prop_assert_eq!(*s.lengths().last().unwrap(), n as u64);
        prop_assert_eq!(s.t0(), 1 + s.lengths().iter().sum::<u64>());
        for j in 1..=s.k() {
            let nj = beta.powi(j as i32) * nf;
            prop_assert_eq!(s.lengths()[j - 1], (std::f64::consts::E / beta * nj).floor() as u64);
        }
        prop_assert!(s.t0() as f64 <= s.deadline_bound() + 1.0);
        for t in [1, s.t0() - 1, s.t0(), s.t0() + 5] {
            prop_assert!((0.0..=1.0).contains(&s.probability_at(t)));
        }
        prop_assert_eq!(s.probability_at(s.t0()), 1.0);
    }

    #[test]
    fn indifference_pins_the_latency(p2 in 0.0..=1.0f64) {
        let p1 = (1.0 + p2) / (2.0 + p2);
        let (a, b) = indifference_solutions(p1, p2).unwrap();
        prop_assert!((a - (2.0 + p2)).abs() < 1e-9);
        prop_assert!((b - (2.0 + p2)).abs() < 1e-9);
    }

    #[test]
    fn deviation_formulas_match_the_chain(p1 in 0.05..0.95f64, p2 in 0.05..0.95f64, p3 in 0.05..0.95f64) {
        let base = ProtocolSpec::stationary_two_player(vec![p1, p2, p3, 1.0]).unwrap();
        let alpha = exact_two_player_latency(&base, &[], &base).unwrap();
        let formulas = uniqueness_deviation_latencies(p1, p2, p3, alpha).unwrap();
        let prefixes: [&[bool]; 3] = [&[true], &[false, true], &[false, false, true]];
        for (prefix, expected) in prefixes.iter().zip(formulas) {
            let exact = exact_two_player_latency(&base, prefix, &base).unwrap();
            prop_assert!((exact - expected).abs() < 1e-9, "{prefix:?}: {exact} vs {expected}");
        }
    }

    #[test]
    fn best_response_is_flat(p_a in 0.0..=1.0f64, p_e in 0.0..=1.0f64) {
        let v = evaluate_stationary_policy(p_a, p_e).unwrap();
        prop_assert!((v.from_a - 3.0).abs() < 1e-9);
        prop_assert!((v.from_e - 2.0).abs() < 1e-9);
    }

    #[test]
    fn stationary_latency_closed_form_matches(p in 0.01..0.99f64) {
        let chain = stationary_two_player_latency(p).unwrap();
        prop_assert!((chain - stationary_latency_closed_form(p)).abs() < 1e-9 * chain.max(1.0));
    }

    #[test]
    fn success_probability_fair_share(m in 1usize..=10_000, r_frac in 0.0..=1.0f64) {
        let r = 1 + ((m - 1) as f64 * r_frac) as usize;
        let p = success_probability(r, 1.0 / m as f64);
        prop_assert!(p >= r as f64 / m as f64 / std::f64::consts::E - 1e-15);
    }

    #[test]
    fn recorded_trials_conserve_players(seed in any::<u64>(), n in 1usize..6, q in 0.1..0.9f64) {
        let profile = vec![ProtocolSpec::age_based(vec![], q).unwrap(); n];
        let rec = run_trial_recorded(&profile, 400, seed, true).unwrap();
        let successes = rec.outcomes.iter().filter(|o| matches!(o, SlotOutcome::Success(_))).count();
        prop_assert_eq!(successes, rec.result.finished());
        let mut pending = n as u32;
        for (o, &after) in rec.outcomes.iter().zip(&rec.pending_after) {
            match o {
                SlotOutcome::Success(i) => {
                    prop_assert_eq!(after, pending - 1);
                    prop_assert!(rec.result.success_times[*i].slot().is_some());
                }
                SlotOutcome::Collision(ids) => {
                    prop_assert!(ids.len() >= 2);
                    prop_assert_eq!(after, pending);
                }
                SlotOutcome::Idle => prop_assert_eq!(after, pending),
            }
            pending = after;
        }
        prop_assert!(rec.histories.iter().all(|h| h.len() as u64 == rec.result.slots_elapsed));
    }
}

#[test]
fn fair_share_sweep_exhaustive() {
    for m in 1..=10_000usize {
        let q = 1.0 / m as f64;
        for r in 1..=m {
            let p = success_probability(r, q);
            assert!(p >= r as f64 / m as f64 / std::f64::consts::E - 1e-15, "r={r} m={m}");
        }
    }
}
