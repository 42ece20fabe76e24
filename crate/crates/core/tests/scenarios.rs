use cm4fq::cli::{self, library, Status};
use cm4fq::rational::{rat, ratio};
use cm4fq::sim;

#[test]
fn every_bundled_scenario_passes_its_checks() {
    for (name, _) in library::BUNDLED {
        let file = cli::load(&format!("builtin:{name}")).unwrap();
        let scenario = file.to_scenario().unwrap();
        let trace = sim::run(&scenario, &cli::trace_options(&file, &scenario)).unwrap();
        let ev = cli::evaluate(&file, &trace).unwrap();
        let failed: Vec<_> = ev.reports.iter().filter(|r| !r.pass).map(|r| (r.bound, r.scope.clone())).collect();
        assert!(failed.is_empty(), "{name}: {failed:?}");
        assert!(ev.skipped.is_empty(), "{name}: {:?}", ev.skipped);
        assert!(!ev.reports.is_empty() || file.checks.is_empty(), "{name}: nothing evaluated");
    }
}

#[test]
fn regulated_merge_keeps_a_and_b_off_the_slow_server() {
    let file = cli::load("builtin:merge_regulated").unwrap();
    let s = file.to_scenario().unwrap();
    let t = sim::run(&s, &cli::trace_options(&file, &s)).unwrap();
    let ev = cli::evaluate(&file, &t).unwrap();
    let sep = ev.reports.iter().find(|r| r.bound == "separation").expect("separation evaluated");
    assert!(sep.pass);
    assert_eq!(sep.lhs, rat(0));
    assert!(t.max_gap <= s.delta() + rat(1000));
}

#[test]
fn late_joiner_in_fluid_limit_takes_only_the_fast_server() {
    let file = cli::load("builtin:late_joiner_fluid").unwrap();
    let s = file.to_scenario().unwrap();
    let t = sim::run(&s, &cli::trace_options(&file, &s)).unwrap();
    // a is user 0 and joins at 100 ms; it should never reach s2
    assert!(t.dispatches.iter().filter(|d| d.user() == 0).all(|d| d.server == 0));
    assert!(t.dispatches.iter().any(|d| d.user() == 0 && d.time >= ratio(1, 10)));
}

#[test]
fn run_command_reports_pass_for_the_two_server_system() {
    let dir = tempfile::tempdir().unwrap();
    let file = cli::load("builtin:two_servers").unwrap();
    assert_eq!(cli::cmd_run(&file, dir.path(), None, None).unwrap(), Status::Pass);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("fair        1250000 bps"), "{summary}");
}
