mod common;

use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use coreclear::bids::{is_convex_increasing, is_marginally_increasing, merge_bids};
use coreclear::coreanalysis::{core_constraints, in_core, in_core_full, JTable, Reference};
use coreclear::generate;
use coreclear::markets::{clear, clear_all, clear_mask};
use coreclear::mechanisms::{run, vcg};
use coreclear::solver::{solve_convex, solve_indicator, ConvexProgram, IndicatorProgram, SolveStatus};
use coreclear::{BidCurve, BidProfile, BidderId, Cost, Rule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn step_curve() -> impl Strategy<Value = BidCurve> {
    prop::collection::vec((1u32..50, 1u32..4), 1..4).prop_map(|raw| {
        let mut price = 0.0;
        let mut qty = 0.0;
        let steps: Vec<(f64, f64)> = raw
            .into_iter()
            .map(|(dp, dq)| {
                price += dp as f64;
                qty += dq as f64;
                (price, qty)
            })
            .collect();
        BidCurve::step(1.0, &steps).unwrap()
    })
}

/// Brute-force min-convolution on the unit grid.
fn convolve(curves: &[BidCurve], x: u32) -> f64 {
    fn go(curves: &[BidCurve], x: u32) -> f64 {
        match curves.split_first() {
            None => {
                if x == 0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Some((c, rest)) => (0..=x)
                .filter(|&q| q as f64 <= c.max_quantity() + 1e-9)
                .map(|q| c.eval(q as f64).unwrap() + go(rest, x - q))
                .fold(f64::INFINITY, f64::min),
        }
    }
    go(curves, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_eval_is_nondecreasing(c in step_curve()) {
        let max = c.max_quantity() as u32;
        prop_assert_eq!(c.eval(0.0).unwrap(), 0.0);
        for q in 1..=max {
            prop_assert!(c.eval(q as f64).unwrap() >= c.eval(q as f64 - 1.0).unwrap());
        }
        prop_assert!(c.eval(max as f64 + 1.0).is_err());
    }

    #[test]
    fn merge_is_the_min_convolution(a in step_curve(), b in step_curve(), c in step_curve()) {
        let parts = vec![a.clone(), b.clone(), c.clone()];
        let merged = merge_bids(&parts).unwrap();
        let total = parts.iter().map(|p| p.max_quantity()).sum::<f64>();
        prop_assert!((merged.max_quantity() - total).abs() < 1e-9);
        for x in 0..=total as u32 {
            let want = convolve(&parts, x);
            let got = merged.eval(x as f64).unwrap();
            prop_assert!((got - want).abs() < 1e-6, "x={} got {} want {}", x, got, want);
            // Lower bound: any single curve supplying x alone costs at least as much.
            for p in &parts {
                if x as f64 <= p.max_quantity() {
                    prop_assert!(got <= p.eval(x as f64).unwrap() + 1e-9);
                }
            }
        }
        let ab = merge_bids(&[a, b]).unwrap();
        for x in 0..=total as u32 {
            let nested = (0..=x)
                .filter(|&q| q as f64 <= ab.max_quantity() && (x - q) as f64 <= c.max_quantity())
                .map(|q| ab.eval(q as f64).unwrap() + c.eval((x - q) as f64).unwrap())
                .fold(f64::INFINITY, f64::min);
            prop_assert!((nested - merged.eval(x as f64).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn marginal_implies_convex(c in step_curve()) {
        let (marginal, witness) = is_marginally_increasing(&c).unwrap();
        if marginal {
            prop_assert!(is_convex_increasing(&c));
            prop_assert!(witness.is_none());
        } else {
            prop_assert!(witness.is_some());
        }
    }

    #[test]
    fn inflation_charges_once(c in step_curve(), uplift in 0u32..20) {
        let inf = coreclear::bids::inflate(&c, uplift as f64).unwrap();
        prop_assert_eq!(inf.eval(0.0).unwrap(), 0.0);
        for q in 1..=c.max_quantity() as u32 {
            prop_assert!((inf.eval(q as f64).unwrap() - c.eval(q as f64).unwrap() - uplift as f64).abs() < 1e-9);
        }
    }
}

/// Vertex enumeration for two-variable LPs in a box.
fn lp2_oracle(p: &ConvexProgram) -> Option<f64> {
    let mut rows: Vec<([f64; 2], f64)> = p.a_in.iter().zip(&p.b_in).map(|(r, b)| ([r[0], r[1]], *b)).collect();
    for i in 0..2 {
        let mut e = [0.0; 2];
        e[i] = 1.0;
        rows.push((e, p.upper[i]));
        e[i] = -1.0;
        rows.push((e, -p.lower[i]));
    }
    let mut best: Option<f64> = None;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let ([a, b], r) = rows[i];
            let ([c, d], s) = rows[j];
            let det = a * d - b * c;
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(r * d - b * s) / det, (a * s - r * c) / det];
            if p.max_violation(&x) <= 1e-7 {
                let v = p.objective(&x);
                best = Some(best.map_or(v, |bv: f64| bv.min(v)));
            }
        }
    }
    best
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let mut p = ConvexProgram::new(2);
        for i in 0..2 {
            p.c[i] = rng.gen_range(-5.0..5.0);
            p.upper[i] = rng.gen_range(1.0..10.0);
        }
        for _ in 0..rng.gen_range(1..4) {
            let row = vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            p.add_le(row, rng.gen_range(-5.0..10.0));
        }
        let r = solve_convex(&p).unwrap();
        match lp2_oracle(&p) {
            None => assert_eq!(r.status, SolveStatus::Infeasible),
            Some(v) => {
                assert_eq!(r.status, SolveStatus::Optimal);
                assert_abs_diff_eq!(r.objective, v, epsilon = 1e-6);
            }
        }
    }
}

#[test]
fn qp_beats_sampled_feasible_points_and_satisfies_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(1..5);
        let mut p = ConvexProgram::new(n);
        // Q = G'G is positive semidefinite.
        let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..n {
            for j in 0..n {
                p.q[i * n + j] = (0..n).map(|k| g[k * n + i] * g[k * n + j]).sum();
            }
            p.c[i] = rng.gen_range(-5.0..5.0);
            p.upper[i] = rng.gen_range(1.0..5.0);
        }
        p.add_ge(vec![1.0; n], rng.gen_range(0.0..1.0));
        let r = solve_convex(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(p.max_violation(&r.x) <= 1e-8);
        assert!(p.stationarity_residual(&r.x, r.duals.as_ref().unwrap()) <= 1e-6);
        for _ in 0..200 {
            let x: Vec<f64> = (0..n).map(|i| rng.gen_range(0.0..p.upper[i])).collect();
            if p.max_violation(&x) <= 0.0 {
                assert!(r.objective <= p.objective(&x) + 1e-7);
            }
        }
    }
}

fn indicator_oracle(p: &IndicatorProgram) -> f64 {
    let k = p.groups.len();
    let mut best = f64::INFINITY;
    for on in 0u32..1 << k {
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
        let r = solve_convex(&base).unwrap();
        if r.status == SolveStatus::Optimal {
            best = best.min(r.objective + charge);
        }
    }
    best
}

#[test]
fn indicator_matches_support_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let k = rng.gen_range(1..=6);
        let p = generate::indicator_program(&mut rng, k);
        let r = solve_indicator(&p).unwrap();
        let want = indicator_oracle(&p);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(r.objective, want, epsilon = 1e-6);
        assert_abs_diff_eq!(p.objective(&r.x), r.objective, epsilon = 1e-6);
    }
}

/// Exhaustive option selection covering the demand.
fn single_good_oracle(profile: &BidProfile, demand: f64) -> Option<f64> {
    let opts: Vec<Vec<(f64, f64)>> = profile
        .iter()
        .map(|(_, c)| {
            let mut o = c.discrete_options(Some(1.0)).unwrap();
            o.push((0.0, 0.0));
            o
        })
        .collect();
    fn go(opts: &[Vec<(f64, f64)>], left: f64) -> f64 {
        match opts.split_first() {
            None => {
                if left <= 1e-9 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Some((o, rest)) => o.iter().map(|(q, p)| p + go(rest, left - q)).fold(f64::INFINITY, f64::min),
        }
    }
    let v = go(&opts, demand);
    v.is_finite().then_some(v)
}

#[test]
fn single_good_dp_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..150 {
        let n = rng.gen_range(1..=5);
        let inst = generate::single_good(&mut rng, n, i % 2 == 0);
        let coreclear::markets::MarketFamily::SingleGood(m) = &inst.market.family else { unreachable!() };
        let c = clear_all(&inst.market, &inst.bids).unwrap();
        match single_good_oracle(&inst.bids, m.demand()) {
            None => assert!(!c.is_feasible()),
            Some(v) => {
                assert_abs_diff_eq!(c.objective.finite().unwrap(), v, epsilon = 1e-6);
                let paid: f64 = inst.bids.iter().map(|(id, b)| b.eval(c.quantity(id)).unwrap()).sum();
                assert_abs_diff_eq!(paid, v, epsilon = 1e-6);
                assert!(c.total_quantity() >= m.demand() - 1e-9);
            }
        }
    }
}

#[test]
fn objective_is_monotone_in_participants() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..60 {
        let n = rng.gen_range(1..=5);
        let inst = generate::mixed(&mut rng, n);
        let t = JTable::build(&inst.market, &inst.bids).unwrap();
        let full = (1u64 << n) - 1;
        for s in 0..=full {
            for l in 0..n {
                let bigger = s | 1 << l;
                assert!(t.value(bigger).le_tol(t.value(s), 1e-6), "J must not rise when a bidder joins");
            }
        }
    }
}

#[test]
fn adding_a_bidder_never_raises_incumbent_allocations() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let inst = generate::single_good(&mut rng, n, true);
        let full = (1u64 << n) - 1;
        for s in 0..full {
            let before = clear_mask(&inst.market, &inst.bids, s).unwrap();
            if !before.is_feasible() {
                continue;
            }
            for l in (0..n).filter(|l| s >> l & 1 == 0) {
                let after = clear_mask(&inst.market, &inst.bids, s | 1 << l).unwrap();
                let joined = inst.bids.id_at(l);
                for (id, x) in before.allocation.iter().filter(|(id, _)| **id != joined) {
                    assert!(after.quantity(*id) <= x + 1e-9, "bidder {id} gained when {joined} joined");
                }
            }
        }
    }
}

#[test]
fn reduced_core_system_matches_full_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 80 {
        let n = rng.gen_range(2..=5);
        let inst = generate::mixed(&mut rng, n);
        let Ok(out) = vcg(&inst.market, &inst.bids, &inst.true_costs) else { continue };
        let table = JTable::build(&inst.market, &inst.bids).unwrap();
        let cs = core_constraints(&inst.market, &inst.bids, Reference::Revealed).unwrap();
        for _ in 0..10 {
            let mut cand = out.clone();
            for (id, u) in cand.revealed.iter_mut() {
                let wins = out.clearing.winners.contains(id);
                *u = if wins {
                    (*u * rng.gen_range(0.0..1.3)).max(0.0)
                } else if rng.gen_bool(0.1) {
                    1.0
                } else {
                    0.0
                };
            }
            let j = cs.base;
            cand.operator = -j - cand.revealed.values().sum::<f64>();
            let reduced = in_core(&cand, &cs).unwrap().in_core;
            let full = in_core_full(&table, cand.operator, &cand.revealed).unwrap();
            assert_eq!(reduced, full, "utilities {:?}", cand.revealed);
        }
        checked += 1;
    }
}

#[test]
fn vcg_truthful_bidding_is_a_best_response() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut checked = 0;
    while checked < 60 {
        let n = rng.gen_range(2..=4);
        let inst = generate::mixed(&mut rng, n);
        let Ok(truth) = vcg(&inst.market, &inst.bids, &inst.true_costs) else { continue };
        let l = inst.bids.id_at(rng.gen_range(0..n));
        for _ in 0..5 {
            let s = rng.gen_range(0.0..2.0);
            let lie = inst.true_costs.get(l).unwrap().scaled(s).unwrap();
            let bids = inst.bids.with_curve(l, lie).unwrap();
            if let Ok(dev) = vcg(&inst.market, &bids, &inst.true_costs) {
                assert!(dev.utility(l) <= truth.utility(l) + 1e-6, "bidder {l} gains by scaling {s}");
            }
        }
        checked += 1;
    }
}

#[test]
fn vcg_utility_is_the_core_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    while checked < 60 {
        let n = rng.gen_range(2..=5);
        let inst = generate::mixed(&mut rng, n);
        let Ok(out) = vcg(&inst.market, &inst.bids, &inst.true_costs) else { continue };
        let cs = core_constraints(&inst.market, &inst.bids, Reference::Revealed).unwrap();
        let w = &cs.winners;
        for (li, l) in w.iter().enumerate() {
            let mut lp = ConvexProgram::new(w.len());
            lp.c[li] = -1.0;
            for c in &cs.constraints {
                if let Cost::Finite(rhs) = c.rhs {
                    let row = w.iter().map(|b| if c.coalition.contains(b) { 1.0 } else { 0.0 }).collect();
                    lp.add_le(row, rhs);
                }
            }
            let r = solve_convex(&lp).unwrap();
            let cap = if r.status == SolveStatus::Unbounded { f64::INFINITY } else { -r.objective };
            assert_abs_diff_eq!(cap, out.revealed_utility(*l), epsilon = 1e-6);
        }
        checked += 1;
    }
}

#[test]
fn core_selecting_rules_land_in_the_revealed_core() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut checked = 0;
    while checked < 40 {
        let n = rng.gen_range(2..=5);
        let inst = generate::mixed(&mut rng, n);
        let Ok(b) = run(Rule::Bocs, &inst.market, &inst.bids, &inst.true_costs) else { continue };
        let cs = core_constraints(&inst.market, &inst.bids, Reference::Revealed).unwrap();
        assert!(in_core(&b, &cs).unwrap().in_core);
        let v = vcg(&inst.market, &inst.bids, &inst.true_costs).unwrap();
        for id in inst.bids.ids() {
            assert!(b.payment(id) <= v.payment(id) + 1e-6);
        }
        let pab = run(Rule::PayAsBid, &inst.market, &inst.bids, &inst.true_costs).unwrap();
        assert!(b.total >= pab.total - 1e-6);
        checked += 1;
    }
}

#[test]
fn clearing_respects_the_active_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..40 {
        let n = rng.gen_range(2..=5);
        let inst = generate::mixed(&mut rng, n);
        let active: Vec<BidderId> = inst.bids.ids().into_iter().filter(|_| rng.gen_bool(0.6)).collect();
        let c = clear(&inst.market, &inst.bids, &active).unwrap();
        let by_id: BTreeMap<_, _> = c.allocation.clone();
        for (id, x) in by_id {
            if !active.contains(&id) {
                assert_eq!(x, 0.0);
            }
        }
    }
}
