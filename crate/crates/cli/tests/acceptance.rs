//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use coreclear::bids::is_marginally_increasing;
use coreclear::coreanalysis::{vcg_in_core_for_all_subsets, JTable};
use coreclear::generate;
use coreclear::markets::{clear_mask, ptdf_matrix, Line, MarketFamily, NodeId};
use coreclear::mechanisms::{bocs_direct, ccg, pay_as_bid, vcg};
use coreclear::scenario::Instance;
use coreclear::solver::{solve_convex, solve_indicator, IndicatorProgram, SolveStatus};
use coreclear::Rule;
use coreclear_cli::{attack_sweep, load, run_cli};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

fn cli(args: &[&str]) -> (i32, Value) {
    let mut full = vec!["coreclear".to_string()];
    full.extend(args.iter().map(|a| a.to_string()));
    for a in full.iter_mut() {
        if !a.starts_with('-') && a.starts_with("ex") {
            *a = fixture(a).display().to_string();
        }
    }
    let out = run_cli(full);
    let v = serde_json::from_str(&out.stdout).unwrap_or(Value::Null);
    (out.code, v)
}

fn close(what: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want}"))
    }
}

fn field(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for p in path {
        cur = &cur[*p];
    }
    cur.as_f64().unwrap_or(f64::NAN)
}

fn pay(name: &str, rule: &str) -> Result<Value, String> {
    let (code, v) = cli(&["pay", name, "--rule", rule]);
    if code != 0 {
        return Err(format!("pay {name} --rule {rule} exited {code}"));
    }
    Ok(v)
}

fn c1() -> Check {
    let (code, v) = cli(&["clear", "ex1"]);
    if code != 0 {
        return Err(format!("clear exited {code}"));
    }
    close("J", field(&v, &["objective"]), 500.0, 1e-6)?;
    let v = pay("ex1", "vcg")?;
    close("p1", field(&v, &["payments", "1"]), 200.0, 1e-6)?;
    close("p2", field(&v, &["payments", "2"]), 500.0, 1e-6)?;
    let c = pay("ex1_collusion", "vcg")?;
    close("collusive p1", field(&c, &["payments", "1"]), 600.0, 1e-6)?;
    close("collusive p2", field(&c, &["payments", "2"]), 600.0, 1e-6)?;
    Ok("J=500, p=(200,500); collusion p=(600,600)".into())
}

fn c2() -> Check {
    let v = pay("ex2", "vcg")?;
    close("p1", field(&v, &["payments", "1"]), 600.0, 1e-6)?;
    close("total", field(&v, &["total"]), 600.0, 1e-6)?;
    let c = pay("ex2_collusion", "vcg")?;
    close("p2", field(&c, &["payments", "2"]), 400.0, 1e-6)?;
    close("p4", field(&c, &["payments", "4"]), 400.0, 1e-6)?;
    close("total", field(&c, &["total"]), 800.0, 1e-6)?;
    Ok("p1=600; collusion p2=p4=400, total 600 -> 800".into())
}

fn c3() -> Check {
    let v = pay("ex4", "vcg")?;
    let winners: Vec<&str> = ["1", "2", "3", "4", "5"]
        .into_iter()
        .filter(|id| field(&v, &["allocation", id]) > 0.0)
        .collect();
    if winners != ["2", "4"] {
        return Err(format!("winners {winners:?}"));
    }
    close("p2", field(&v, &["payments", "2"]), 400.0, 1e-6)?;
    close("p4", field(&v, &["payments", "4"]), 400.0, 1e-6)?;
    let (code, d) = cli(&["diagnose", "ex4", "--checks", "core,msupermod"]);
    if code != 0 {
        return Err(format!("diagnose exited {code}"));
    }
    if d["core"]["vcg_in_core"] != Value::Bool(true) || d["msupermod"]["holds"] != Value::Bool(true) {
        return Err(format!("diagnose reported {d}"));
    }
    Ok("winners {2,4}, p=(400,400), VCG in core, requirements supermodular".into())
}

fn c4() -> Check {
    let t = pay("ex5_truthful", "vcg")?;
    close("p3", field(&t, &["payments", "3"]), 260.0, 1e-6)?;
    close("u3", field(&t, &["utilities", "3"]), 120.0, 1e-6)?;
    close("x3", field(&t, &["allocation", "3"]), 20.0, 1e-6)?;
    let v = pay("ex5_collusion", "vcg")?;
    let b = pay("ex5_collusion", "bocs")?;
    for id in ["1", "2"] {
        close("vcg p", field(&v, &["payments", id]), 140.0, 1e-6)?;
        close("vcg u", field(&v, &["utilities", id]), 10.0, 1e-6)?;
        close("vcg x", field(&v, &["allocation", id]), 10.0, 1e-6)?;
        close("bocs p", field(&b, &["payments", id]), 70.0, 1e-6)?;
        close("bocs u", field(&b, &["utilities", id]), -60.0, 1e-6)?;
        close("bocs x", field(&b, &["allocation", id]), 10.0, 1e-6)?;
    }
    Ok("truthful (260,120,20); collusion VCG (140,10,10), BOCS (70,-60,10)".into())
}

/// Laplacian solve grounded at node 4, independent of the engine's reference choice.
fn oracle_flow(lines: &[Line], at: usize, line: usize) -> f64 {
    let mut lap = DMatrix::<f64>::zeros(4, 4);
    for l in lines {
        let (a, b) = ((l.from.0 - 1) as usize, (l.to.0 - 1) as usize);
        lap[(a, a)] += l.susceptance;
        lap[(b, b)] += l.susceptance;
        lap[(a, b)] -= l.susceptance;
        lap[(b, a)] -= l.susceptance;
    }
    let mut inj = DVector::<f64>::zeros(3);
    inj[at - 1] = 1.0;
    let theta = lap.view((0, 0), (3, 3)).into_owned().lu().solve(&inj).expect("connected");
    let th = |n: u32| if n == 4 { 0.0 } else { theta[(n - 1) as usize] };
    let l = &lines[line];
    l.susceptance * (th(l.from.0) - th(l.to.0))
}

fn c5() -> Check {
    let inst = load(&fixture("ex5_truthful")).map_err(|o| o.stderr)?;
    let MarketFamily::Network(net) = &inst.market.family else { return Err("not a network".into()) };
    let lines = net.lines();
    let line24 = lines
        .iter()
        .position(|l| (l.from, l.to) == (NodeId(2), NodeId(4)))
        .ok_or("no line 2-4")?;
    let o2 = oracle_flow(lines, 2, line24);
    let o3 = oracle_flow(lines, 3, line24);
    close("oracle node 2", o2, 0.625, 1e-9)?;
    close("oracle node 3", o3, 0.5, 1e-9)?;
    let p = ptdf_matrix(net.nodes(), lines).map_err(|e| e.to_string())?;
    let cached = net.ptdf();
    for (at, want) in [(2usize, o2), (3, o3)] {
        close("ptdf_matrix", p[(line24, at - 1)] - p[(line24, 3)], want, 1e-9)?;
        close("cached", cached[(line24, at - 1)] - cached[(line24, 3)], want, 1e-9)?;
    }
    Ok("line 2-4: 0.625 (node 2), 0.5 (node 3)".into())
}

fn c6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut sup, mut not) = (0, 0);
    for i in 0..200 {
        let n = rng.gen_range(2..=5);
        let inst = generate::mixed(&mut rng, n);
        let table = JTable::build(&inst.market, &inst.bids).map_err(|e| format!("instance {i}: {e}"))?;
        let a = table.supermodular_witness().is_none();
        let (b, _) = vcg_in_core_for_all_subsets(&table);
        if a != b {
            return Err(format!("instance {i}: supermodular={a}, VCG in every core={b}"));
        }
        if a {
            sup += 1;
        } else {
            not += 1;
        }
    }
    Ok(format!("200 instances agree ({sup} supermodular, {not} not)"))
}

fn c7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let n = rng.gen_range(2..=6);
        let inst = generate::single_good(&mut rng, n, true);
        for (id, c) in inst.bids.iter() {
            if !is_marginally_increasing(c).map_err(|e| e.to_string())?.0 {
                return Err(format!("instance {i}: generator produced a non-marginal bid for {id}"));
            }
        }
        let table = JTable::build(&inst.market, &inst.bids).map_err(|e| e.to_string())?;
        if let Some(w) = table.supermodular_witness() {
            return Err(format!("instance {i}: J not supermodular at {w:?}"));
        }
        let full = (1u64 << n) - 1;
        for s in 0..full {
            let before = clear_mask(&inst.market, &inst.bids, s).map_err(|e| e.to_string())?;
            if !before.is_feasible() {
                continue;
            }
            for l in (0..n).filter(|l| s >> l & 1 == 0) {
                let joined = inst.bids.id_at(l);
                let after = clear_mask(&inst.market, &inst.bids, s | 1 << l).map_err(|e| e.to_string())?;
                for (id, x) in before.allocation.iter().filter(|(id, _)| **id != joined) {
                    if after.quantity(*id) > x + 1e-9 {
                        return Err(format!("instance {i}: bidder {id} gained when {joined} joined"));
                    }
                }
            }
        }
    }
    Ok("200 instances: J supermodular, incumbent allocations monotone".into())
}

fn c8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let t = rng.gen_range(2..=4);
        let n = rng.gen_range(2..=6);
        let inst = generate::multi_type_convex(&mut rng, n, t, true);
        let MarketFamily::MultiType(m) = &inst.market.family else { unreachable!() };
        if !coreclear::coreanalysis::check_m_supermodular(m).holds() {
            return Err(format!("instance {i}: generator produced a bad requirement table"));
        }
        let table = JTable::build(&inst.market, &inst.bids).map_err(|e| e.to_string())?;
        if let Some(w) = table.supermodular_witness() {
            return Err(format!("instance {i}: J not supermodular at {w:?}"));
        }
    }
    Ok("100 instances: J supermodular".into())
}

fn c9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut coll, mut shill, mut done) = (0, 0, 0);
    while done < 200 {
        let n = rng.gen_range(3..=6);
        let inst = generate::mixed(&mut rng, n);
        let reports = match attack_sweep(&inst) {
            Ok(r) => r,
            Err(coreclear::Error::ClearingInfeasible | coreclear::Error::PivotInfeasible(_)) => continue,
            Err(e) => return Err(format!("instance {done}: {e}")),
        };
        for r in reports.iter().filter(|r| r.rule == Rule::Bocs) {
            match r.kind {
                coreclear::coreanalysis::AttackKind::Collusion => {
                    coll += 1;
                    if r.profitable {
                        return Err(format!("instance {done}: {} by {:?} gains {}", r.label, r.attackers, r.margin));
                    }
                }
                coreclear::coreanalysis::AttackKind::Shill => {
                    shill += 1;
                    if r.vcg_margin().is_some_and(|m| m > coreclear::MARGIN_TOL) {
                        return Err(format!(
                            "instance {done}: shill {} of {:?} beats truthful VCG by {:?}",
                            r.label,
                            r.attackers,
                            r.vcg_margin()
                        ));
                    }
                }
            }
        }
        done += 1;
    }
    Ok(format!("200 instances, {coll} collusion and {shill} shill simulations, none profitable"))
}

fn c10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut iters = Vec::new();
    while iters.len() < 100 {
        let n = rng.gen_range(3..=8);
        let inst: Instance = generate::mixed(&mut rng, n);
        let Ok(direct) = bocs_direct(&inst.market, &inst.bids, &inst.true_costs) else { continue };
        let w = direct.clearing.winners.len();
        if !(2..=6).contains(&w) {
            continue;
        }
        let k = iters.len();
        let g = ccg(&inst.market, &inst.bids, &inst.true_costs).map_err(|e| format!("instance {k}: {e}"))?;
        for id in inst.bids.ids() {
            close(&format!("instance {k} bidder {id}"), g.payment(id), direct.payment(id), 1e-5)?;
        }
        let it = g.trace.as_ref().map_or(0, |t| t.iterations());
        if it > 1 << w {
            return Err(format!("instance {k}: {it} iterations for {w} winners"));
        }
        iters.push(it);
    }
    iters.sort();
    Ok(format!("100 instances match; median iterations {}, max {}", iters[50], iters[99]))
}

fn enumerate(p: &IndicatorProgram) -> f64 {
    let mut best = f64::INFINITY;
    for on in 0u32..1 << p.groups.len() {
        let mut base = p.base.clone();
        let mut charge = 0.0;
        for (g, grp) in p.groups.iter().enumerate() {
            if on >> g & 1 == 1 {
                charge += grp.charge;
            } else {
                for &v in &grp.vars {
                    base.upper[v] = 0.0;
                }
            }
        }
        let r = solve_convex(&base).expect("solver");
        if r.status == SolveStatus::Optimal {
            best = best.min(r.objective + charge);
        }
    }
    best
}

fn c11() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let k = rng.gen_range(1..=8);
        let p = generate::indicator_program(&mut rng, k);
        let r = solve_indicator(&p).map_err(|e| e.to_string())?;
        close(&format!("program {i} (k={k})"), r.objective, enumerate(&p), 1e-6)?;
    }
    Ok("100 programs, k <= 8".into())
}

fn c12() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut ok, mut soft) = (0, Vec::new());
    let mut tried = 0;
    while tried < 50 {
        let n = rng.gen_range(2..=5);
        let inst = generate::network(&mut rng, n);
        let (Ok(v), Ok(b), Ok(p)) = (
            vcg(&inst.market, &inst.bids, &inst.true_costs),
            bocs_direct(&inst.market, &inst.bids, &inst.true_costs),
            pay_as_bid(&inst.market, &inst.bids, &inst.true_costs),
        ) else {
            continue;
        };
        tried += 1;
        if v.total + 1e-6 >= b.total && b.total + 1e-6 >= p.total {
            ok += 1;
        } else {
            soft.push(format!("({:.3} {:.3} {:.3})", v.total, b.total, p.total));
        }
    }
    for s in &soft {
        eprintln!("    soft ordering exception: VCG/BOCS/pay-as-bid totals {s}");
    }
    Ok(format!(
        "large external cases not reproducible (data unavailable); ordering VCG >= BOCS >= pay-as-bid held on {ok}/{tried} network instances"
    ))
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Check); 12] = [
        (1, "single-good VCG and collusion golden", Duration::from_secs(1), c1),
        (2, "multi-type VCG and collusion golden", Duration::from_secs(1), c2),
        (3, "supermodular requirements golden", Duration::from_secs(1), c3),
        (4, "network VCG/BOCS golden", Duration::from_secs(5), c4),
        (5, "PTDF against Laplacian oracle", Duration::from_secs(1), c5),
        (6, "supermodular J iff VCG in every subset core", Duration::from_secs(60), c6),
        (7, "marginally increasing steps give supermodular J", Duration::from_secs(60), c7),
        (8, "convex bids and supermodular requirements give supermodular J", Duration::from_secs(60), c8),
        (9, "core-selecting rule resists losing collusion and shills", Duration::from_secs(120), c9),
        (10, "constraint generation matches direct BOCS", Duration::from_secs(120), c10),
        (11, "indicator B&B matches support enumeration", Duration::from_secs(60), c11),
        (12, "out-of-scope cases and soft payment ordering", Duration::from_secs(60), c12),
    ];
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        let t0 = Instant::now();
        let r = f();
        let dt = t0.elapsed();
        let (status, detail) = match r {
            Ok(d) if dt <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {dt:.2?}, budget {budget:?}")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} [{n:>2}] {name} ({dt:.2?}): {detail}");
    }
    println!("{} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
