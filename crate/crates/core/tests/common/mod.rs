#![allow(dead_code)]

use coreclear::scenario::{Instance, Scenario};
use serde_json::{json, Value};

pub fn build(v: Value) -> Instance {
    Scenario::from_json(&v.to_string()).unwrap().build().unwrap()
}

fn step(inc: f64, steps: Value) -> Value {
    json!({"kind": "step", "increment": inc, "steps": steps})
}

/// Single good, 800 units on a 400 grid. `colluding` makes bidders 1 and 2 bid 0.
pub fn ex1(bidder3: Value, colluding: bool) -> Instance {
    let mut bidders = vec![];
    for (i, c) in [100.0, 400.0].iter().enumerate() {
        let mut b = json!({"id": i + 1, "true_cost": step(400.0, json!([[c, 400]]))});
        if colluding {
            b["bid"] = step(400.0, json!([[0, 400]]));
        }
        bidders.push(b);
    }
    bidders.push(json!({"id": 3, "true_cost": step(400.0, bidder3)}));
    build(json!({"market": {"family": "single_good", "demand": 800, "increment": 400}, "bidders": bidders}))
}

/// Types A, B, C; A covers both B and C. `tilde` adds the joint requirement of 200.
pub fn ex2(tilde: bool, colluders: &[u32]) -> Instance {
    let mut reqs = vec![json!({"types": ["A", "B"], "amount": 100}), json!({"types": ["A", "C"], "amount": 100})];
    if tilde {
        reqs.push(json!({"types": ["A", "B", "C"], "amount": 200}));
    }
    let mut bidders = vec![];
    for (i, (t, c)) in [("A", 500), ("B", 350), ("B", 400), ("C", 250), ("C", 400)].iter().enumerate() {
        let id = i as u32 + 1;
        let mut b = json!({"id": id, "type": t, "true_cost": step(100.0, json!([[c, 100]]))});
        if colluders.contains(&id) {
            b["bid"] = step(100.0, json!([[0, 100]]));
        }
        bidders.push(b);
    }
    build(json!({"market": {"family": "multi_type", "types": ["A", "B", "C"], "requirements": reqs}, "bidders": bidders}))
}

pub fn ex5_lines() -> Value {
    let lines: Vec<Value> = [(3, 2), (3, 1), (1, 2), (1, 4), (2, 4)]
        .iter()
        .map(|(a, b)| json!({"from": a, "to": b, "susceptance": 1, "limit": 10}))
        .collect();
    Value::Array(lines)
}

/// Four nodes, five 10 MW lines, 20 MWh at node 4.
pub fn ex5(colluding: bool) -> Instance {
    let mut bidders = vec![];
    for (i, (n, b)) in [(1, 12.0), (2, 12.0), (3, 5.0)].iter().enumerate() {
        let mut s = json!({"id": i + 1, "node": n, "true_cost": {"kind": "quad", "a": 0.1, "b": b}});
        if colluding && i < 2 {
            s["bid"] = json!({"kind": "zero"});
        }
        bidders.push(s);
    }
    build(json!({
        "market": {"family": "network", "nodes": [1, 2, 3, 4], "lines": ex5_lines(), "demand": {"4": 20}},
        "bidders": bidders
    }))
}
