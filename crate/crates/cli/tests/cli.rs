use std::path::PathBuf;

use coreclear::scenario::Scenario;
use coreclear_cli::{run_cli, Output};
use serde_json::Value;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json")).display().to_string()
}

fn cli(args: &[&str]) -> Output {
    run_cli(std::iter::once("coreclear".to_string()).chain(args.iter().map(|s| s.to_string())))
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", o.stdout))
}

fn scratch(name: &str, body: &str) -> String {
    let dir = std::env::temp_dir().join(format!("coreclear-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn clear_reports_objective_and_exit_codes() {
    let o = cli(&["clear", &fixture("ex1")]);
    assert_eq!(o.code, 0);
    assert_eq!(json(&o)["objective"], 500.0);
    let o = cli(&["clear", &fixture("ex1"), "--active", "3"]);
    assert_eq!(o.code, 0);
    assert_eq!(json(&o)["objective"], 600.0);
    let o = cli(&["clear", &fixture("ex1"), "--active", ""]);
    assert_eq!(o.code, 2);
    assert_eq!(json(&o)["status"], "infeasible");
    assert_eq!(cli(&["clear", &fixture("ex1"), "--active", "9"]).code, 1);
}

#[test]
fn pay_rules() {
    let o = cli(&["pay", &fixture("ex5_collusion"), "--rule", "bocs"]);
    assert_eq!(o.code, 0);
    let v = json(&o);
    assert_eq!(v["rule"], "bocs");
    assert_eq!(v["payments"]["1"], 70.0);
    assert_eq!(v["payments"]["2"], 70.0);
    assert_eq!(v["payments"]["3"], 0.0);
    let v = json(&cli(&["pay", &fixture("ex5_truthful"), "--rule", "vcg"]));
    assert_eq!(v["payments"]["3"], 260.0);
    let o = cli(&["pay", &fixture("ex1"), "--rule", "lmp"]);
    assert_eq!(o.code, 3);
    assert!(o.stderr.contains("lmp"));
    assert_eq!(cli(&["pay", &fixture("ex1"), "--rule", "nope"]).code, 1);
}

#[test]
fn ccg_output_carries_its_trace() {
    let v = json(&cli(&["pay", &fixture("ex5_collusion"), "--rule", "ccg"]));
    let trace = v["trace"].as_array().unwrap();
    assert!(trace.len() >= 2);
    assert_eq!(trace[0]["k"], 0);
    assert!(trace[0]["nu"].is_null());
    for key in ["coalition", "z", "revealed", "margin"] {
        assert!(trace[0].get(key).is_some(), "{key}");
    }
    assert_eq!(v["payments"]["1"], 70.0);
}

#[test]
fn diagnose_checks() {
    let v = json(&cli(&["diagnose", &fixture("ex2"), "--checks", "msupermod", "--witness"]));
    assert_eq!(v["msupermod"]["supermodular"], false);
    assert_eq!(v["msupermod"]["witness"]["union"], serde_json::json!(["A", "B", "C"]));
    assert_eq!(v["msupermod"]["witness"]["intersection"], serde_json::json!(["A"]));
    let v = json(&cli(&["diagnose", &fixture("ex4"), "--checks", "core"]));
    assert_eq!(v["core"]["vcg_in_core"], true);
    let v = json(&cli(&["diagnose", &fixture("ex1"), "--checks", "supermod", "--witness"]));
    assert_eq!(v["supermod"]["supermodular"], false);
    assert!(v["supermod"]["witness"].is_object());
    let v = json(&cli(&["diagnose", &fixture("ex1"), "--checks", "msupermod"]));
    assert_eq!(v["msupermod"]["applicable"], false);
}

#[test]
fn diagnose_attacks_and_pairwise() {
    let o = cli(&["diagnose", &fixture("ex2"), "--checks", "attacks,pairwise"]);
    assert_eq!(o.code, 0);
    let v = json(&o);
    assert_eq!(v["attacks"]["summary"]["bocs"]["profitable"], 0);
    assert!(v["attacks"]["summary"]["vcg"]["profitable"].as_u64().unwrap() > 0);
    assert_eq!(v["pairwise"]["applicable"], false);
}

#[test]
fn diagnose_size_limit_names_the_limit() {
    let bidders: Vec<String> = (1..=13)
        .map(|i| format!(r#"{{"id": {i}, "true_cost": {{"kind": "step", "increment": 1, "steps": [[{i}, 1]]}}}}"#))
        .collect();
    let body = format!(
        r#"{{"market": {{"family": "single_good", "demand": 2, "increment": 1}}, "bidders": [{}]}}"#,
        bidders.join(",")
    );
    let p = scratch("big.json", &body);
    let o = cli(&["diagnose", &p, "--checks", "supermod"]);
    assert_eq!(o.code, 4);
    assert!(o.stderr.contains("limit of 12"), "{}", o.stderr);
}

#[test]
fn parse_errors_carry_a_location() {
    let p = scratch("bad.json", "{\n  \"market\": {\"family\": \"single_good\", \"demand\": 1,}\n}\n");
    let o = cli(&["clear", &p]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains(":2:"), "{}", o.stderr);
    let p = scratch("unknown.json", r#"{"market": {"family": "single_good", "demand": 1, "increment": 1}, "bidders": [], "extra": 1}"#);
    assert_eq!(cli(&["clear", &p]).code, 1);
    assert_eq!(cli(&["clear", "/nonexistent/x.json"]).code, 1);
}

#[test]
fn report_tables() {
    let o = cli(&["report", &fixture("ex1")]);
    assert_eq!(o.code, 0);
    let vcg = o.stdout.split("### vcg").nth(1).unwrap();
    assert!(vcg.contains("| Bidder 1 | 200 (100) | 400 |"));
    assert!(vcg.contains("| Bidder 2 | 500 (100) | 400 |"));
    assert!(vcg.contains("| Bidder 3 | 0 (0) | 0 |"));
    assert!(!o.stdout.contains("### lmp"));

    let o = cli(&["report", &fixture("ex5_truthful"), &fixture("ex5_collusion")]);
    let vcg = o.stdout.split("### vcg").nth(1).unwrap().split("###").next().unwrap();
    assert!(vcg.contains("| Bidder 1 | 0 (0) | 0 | 140 (10) | 10 |"));
    assert!(vcg.contains("| Bidder 3 | 260 (120) | 20 | 0 (0) | 0 |"));
    let bocs = o.stdout.split("### bocs").nth(1).unwrap().split("###").next().unwrap();
    assert!(bocs.contains("| Bidder 2 | 0 (0) | 0 | 70 (-60) | 10 |"));
    assert!(bocs.contains("| Total | 260 | 20 | 140 | 20 |"));

    let p = scratch("empty.json", r#"{"market": {"family": "single_good", "demand": 0, "increment": 1}, "bidders": []}"#);
    let o = cli(&["report", &p]);
    assert_eq!(o.code, 0);
    assert!(!o.stdout.contains("Bidder"));
}

#[test]
fn output_is_deterministic() {
    for args in [
        vec!["pay", "ex5_collusion", "--rule", "ccg"],
        vec!["diagnose", "ex2_collusion", "--checks", "core,supermod,attacks", "--witness"],
    ] {
        let args: Vec<String> =
            args.iter().map(|a| if a.starts_with("ex") { fixture(a) } else { a.to_string() }).collect();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = cli(&refs);
        let b = cli(&refs);
        assert_eq!(a, b);
    }
}

#[test]
fn fixtures_round_trip() {
    for name in [
        "ex1", "ex1_collusion", "ex1_fixed_bidder3", "ex2", "ex2_collusion", "ex4", "ex5_truthful", "ex5_collusion",
    ] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let s = Scenario::from_json(&text).unwrap();
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(s, again, "{name}");
        s.build().unwrap();
    }
}
