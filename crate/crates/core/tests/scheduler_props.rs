mod common;

use std::collections::BTreeMap;

use cm4fq::baselines::{SingleServerSfq, VirtualClock};
use cm4fq::metrics::{
    check_single_server, check_steady_state, check_tag_floor, check_tag_work_identity, check_worst_case, interval_sets,
    MetricsError,
};
use cm4fq::rational::{ratio, Rat};
use cm4fq::scheduler::Variant;
use cm4fq::sim::{run, run_with, Scenario, SnapshotPolicy, Trace, TraceOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_multi_server, random_single_server};

fn quiet() -> TraceOptions {
    TraceOptions {
        snapshots: SnapshotPolicy::ChangesOnly,
        ..TraceOptions::default()
    }
}

fn multi(seed: u64, variant: Variant) -> Scenario {
    random_multi_server(&mut ChaCha8Rng::seed_from_u64(seed), seed, variant)
}

fn single(seed: u64) -> Scenario {
    random_single_server(&mut ChaCha8Rng::seed_from_u64(seed), seed)
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Full), Just(Variant::Reduced), Just(Variant::SfqBased)]
}

/// Dispatch bookkeeping every scheduler must respect.
fn check_dispatch_log(s: &Scenario, t: &Trace) -> Result<(), String> {
    let mut busy_until: Vec<Rat> = vec![Rat::from_integer(0); s.n_servers()];
    let mut next_seq: BTreeMap<usize, u64> = BTreeMap::new();
    let mut work = vec![0u64; s.n_users()];
    let mut last_time = Rat::from_integer(0);
    for d in &t.dispatches {
        let (i, k) = (d.user(), d.server);
        if !s.matrix.eligible(i, k) {
            return Err(format!("user {i} served by ineligible server {k}"));
        }
        if d.time < last_time {
            return Err("dispatch times go backwards".into());
        }
        if d.time < busy_until[k] {
            return Err(format!("server {k} starts a packet at {} before finishing at {}", d.time, busy_until[k]));
        }
        if d.completion != d.time + Rat::from_integer(d.packet.length as i128) / s.rates[k] {
            return Err("completion does not match length over rate".into());
        }
        if d.packet.arrival_time > d.time {
            return Err("packet served before it arrived".into());
        }
        let seq = next_seq.entry(i).or_insert(0);
        if d.packet.seq != *seq {
            return Err(format!("user {i} served seq {} when {} was due", d.packet.seq, seq));
        }
        *seq += 1;
        busy_until[k] = d.completion;
        last_time = d.time;
        work[i] += d.packet.length;
    }
    if work != t.final_state.work {
        return Err("final work differs from the dispatch log".into());
    }
    Ok(())
}

#[test]
fn midrr_keeps_the_dispatch_log_consistent() {
    for seed in 0..40 {
        let s = multi(seed, Variant::Full);
        let mut m = s.midrr().unwrap();
        let t = run_with(&s, &mut m, &quiet()).unwrap();
        check_dispatch_log(&s, &t).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn random_runs_meet_the_bound_hypotheses_often() {
    let (mut steady, mut single_server) = (0, 0);
    for seed in 0..30 {
        let s = multi(seed, Variant::Full);
        let t = run(&s, &quiet()).unwrap();
        steady += t.steady_intervals().iter().filter(|iv| iv.t1() > iv.t0() && check_steady_state(&t, iv).is_ok()).count();
        let s = single(seed);
        let t = run(&s, &quiet()).unwrap();
        single_server += t.steady_intervals().iter().filter(|iv| iv.t1() > iv.t0() && check_single_server(&t, iv).is_ok()).count();
    }
    assert!(steady > 100, "{steady}");
    assert!(single_server > 100, "{single_server}");
}

#[test]
fn restart_after_a_full_drain_is_outside_the_steady_bound() {
    // one server; user 0 keeps a high tag through a drain that resets the
    // level to zero, then user 1 joins at 11 ms with tag zero and is served
    // alone until it catches up
    let s = multi(10590067363678725985, Variant::Full);
    let t = run(&s, &quiet()).unwrap();
    let iv = t.steady_intervals().into_iter().find(|iv| iv.t0() == ratio(11, 1000)).expect("interval at 11 ms");
    match check_steady_state(&t, &iv) {
        Err(MetricsError::Precondition(msg)) => assert!(msg.contains("tag of user 0"), "{msg}"),
        other => panic!("expected a precondition failure, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dispatch_log_is_consistent(seed in any::<u64>(), v in variant()) {
        let s = multi(seed, v);
        let t = run(&s, &quiet()).unwrap();
        prop_assert_eq!(check_dispatch_log(&s, &t), Ok(()));
    }

    #[test]
    fn identical_inputs_give_identical_traces(seed in any::<u64>(), v in variant()) {
        let s = multi(seed, v);
        let opts = TraceOptions { record_levels: true, ..TraceOptions::default() };
        prop_assert_eq!(run(&s, &opts).unwrap(), run(&s, &opts).unwrap());
    }

    #[test]
    fn no_backlogged_tag_falls_below_its_levels(seed in any::<u64>(), full in any::<bool>()) {
        let s = multi(seed, if full { Variant::Full } else { Variant::Reduced });
        let t = run(&s, &quiet()).unwrap();
        let r = check_tag_floor(&t);
        prop_assert!(r.pass, "{:?}", t.tag_floor_violations.first());
    }

    #[test]
    fn tag_growth_plus_bonus_equals_normalized_work(seed in any::<u64>()) {
        let s = multi(seed, Variant::Full);
        let t = run(&s, &quiet()).unwrap();
        for iv in t.steady_intervals() {
            for r in check_tag_work_identity(&t, &iv).unwrap() {
                prop_assert!(r.pass, "{} {} on [{}, {}]", r.bound, r.scope, r.t0, r.t1);
            }
        }
    }

    #[test]
    fn steady_intervals_stay_within_the_throughput_bound(seed in any::<u64>()) {
        let s = multi(seed, Variant::Full);
        let t = run(&s, &quiet()).unwrap();
        for iv in t.steady_intervals().iter().filter(|iv| iv.t1() > iv.t0()) {
            if let Ok(reports) = check_steady_state(&t, iv) {
                for r in reports {
                    prop_assert!(r.pass, "{} {} on [{}, {}]: {} vs {:?}", r.bound, r.scope, r.t0, r.t1, r.lhs, r.rhs);
                }
            }
        }
    }

    #[test]
    fn worst_case_bounds_hold_across_backlog_changes(seed in any::<u64>()) {
        let s = multi(seed, Variant::Full);
        let t = run(&s, &quiet()).unwrap();
        let ivs: Vec<_> = t.steady_intervals().into_iter().filter(|iv| iv.t1() > iv.t0()).collect();
        for w in ivs.windows(3) {
            let (a, b) = (&w[0].start, &w[2].end);
            for i in interval_sets(&t, a, b).1 {
                if let Ok(reports) = check_worst_case(&t, a, b, i) {
                    for r in reports {
                        prop_assert!(r.pass, "{} {} on [{}, {}]: {} vs {:?}", r.bound, r.scope, r.t0, r.t1, r.lhs, r.rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn single_server_level_growth_is_bounded(seed in any::<u64>()) {
        let s = single(seed);
        let t = run(&s, &quiet()).unwrap();
        for iv in t.steady_intervals().iter().filter(|iv| iv.t1() > iv.t0()) {
            if let Ok(reports) = check_single_server(&t, iv) {
                for r in reports {
                    prop_assert!(r.pass, "{} on [{}, {}]", r.bound, r.t0, r.t1);
                }
            }
        }
    }

    #[test]
    fn one_server_follows_start_time_fair_order(seed in any::<u64>()) {
        let s = single(seed);
        let t = run(&s, &quiet()).unwrap();
        let mut sfq = SingleServerSfq::new(s.rates[0], &s.weights, VirtualClock::LastDispatch).unwrap();
        let u = run_with(&s, &mut sfq, &quiet()).unwrap();
        let order = |t: &Trace| t.dispatches.iter().map(|d| (d.time, d.user(), d.packet.seq)).collect::<Vec<_>>();
        prop_assert_eq!(order(&t), order(&u));
    }
}
