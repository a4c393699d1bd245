//! Command implementations behind the `coreclear` binary. Each command
//! returns its exit code and stdout so tests can drive it in-process.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use coreclear::coreanalysis::{
    check_m_supermodular, check_pairwise_removal_infeasible, check_supermodularity, deviation_bids, shill_splits,
    simulate_collusion, simulate_shill, vcg_in_core, AttackReport, Deviation, MAX_SUPERMOD_BIDDERS,
};
use coreclear::markets::{clear, clear_all, MarketFamily};
use coreclear::mechanisms::{run, CcgState};
use coreclear::scenario::{Instance, Scenario};
use coreclear::{round6, BidderId, ClearingResult, Cost, Error, PaymentOutcome, Rule};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_UNSUPPORTED: i32 = 3;
pub const EXIT_LIMIT: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

/// Largest profile the attack sweep accepts.
pub const MAX_ATTACK_BIDDERS: usize = 16;
/// Largest losing coalition the attack sweep tries.
const MAX_COALITION: usize = 3;
const RANDOM_SCALE_SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Parser, Debug)]
#[command(name = "coreclear", version, about = "Reverse-auction clearing, payments and core diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Clear the market and print the allocation.
    Clear {
        scenario: PathBuf,
        /// Comma-separated bidder ids to keep active; all when absent.
        #[arg(long)]
        active: Option<String>,
    },
    /// Price the truthful-or-declared profile under one rule.
    Pay {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        rule: RuleArg,
    },
    /// Run coalition-proofness diagnostics.
    Diagnose {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', value_enum, required = true)]
        checks: Vec<Check>,
        /// Include violating triples, coalitions and attack profiles.
        #[arg(long)]
        witness: bool,
    },
    /// Markdown tables of every applicable rule, scenarios side by side.
    Report {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Payasbid,
    Lmp,
    Vcg,
    Bocs,
    Ccg,
}

impl From<RuleArg> for Rule {
    fn from(r: RuleArg) -> Rule {
        match r {
            RuleArg::Payasbid => Rule::PayAsBid,
            RuleArg::Lmp => Rule::Lmp,
            RuleArg::Vcg => Rule::Vcg,
            RuleArg::Bocs => Rule::Bocs,
            RuleArg::Ccg => Rule::Ccg,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Core,
    Supermod,
    Msupermod,
    Pairwise,
    Attacks,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    fn ok(stdout: String) -> Output {
        Output { code: EXIT_OK, stdout, stderr: String::new() }
    }

    fn fail(code: i32, stderr: String) -> Output {
        Output { code, stdout: String::new(), stderr }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ClearingInfeasible | Error::PivotInfeasible(_) => EXIT_INFEASIBLE,
        Error::RuleUnsupported { .. } | Error::NotApplicable(_) => EXIT_UNSUPPORTED,
        Error::TooManyWinners { .. }
        | Error::TooManyBidders { .. }
        | Error::TooManyTypes { .. }
        | Error::TooManyIndicators { .. } => EXIT_LIMIT,
        Error::InvalidBid(_) | Error::GridMismatch(_) | Error::ModelError(_) | Error::InfeasibleQuantity { .. } => {
            EXIT_PARSE
        }
        Error::SolverStalled { .. }
        | Error::Diverged(_)
        | Error::PreconditionViolated(_)
        | Error::Internal(_) => EXIT_INTERNAL,
    }
}

fn engine_failure(e: Error) -> Output {
    Output::fail(exit_code(&e), format!("error: {e}\n"))
}

/// Parses arguments (program name first) and runs the command.
pub fn run_cli<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli.command),
        Err(e) => {
            let text = e.render().to_string();
            match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Output::ok(text),
                _ => Output::fail(EXIT_PARSE, text),
            }
        }
    }
}

pub fn execute(cmd: &Command) -> Output {
    let result = match cmd {
        Command::Clear { scenario, active } => load(scenario).and_then(|i| cmd_clear(&i, active.as_deref())),
        Command::Pay { scenario, rule } => load(scenario).and_then(|i| cmd_pay(&i, (*rule).into())),
        Command::Diagnose { scenario, checks, witness } => {
            load(scenario).and_then(|i| cmd_diagnose(&i, checks, *witness))
        }
        Command::Report { scenarios } => cmd_report(scenarios),
    };
    result.unwrap_or_else(|o| o)
}

/// Reads and builds a scenario; failures carry the location.
pub fn load(path: &Path) -> Result<Instance, Output> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Output::fail(EXIT_PARSE, format!("error: cannot read {}: {e}\n", path.display())))?;
    let scenario = Scenario::from_json(&text).map_err(|e| {
        Output::fail(
            EXIT_PARSE,
            format!("error: {}:{}:{}: {e}\n", path.display(), e.line(), e.column()),
        )
    })?;
    scenario
        .build()
        .map_err(|e| Output::fail(exit_code(&e), format!("error: {}: {e}\n", path.display())))
}

fn num(v: f64) -> Value {
    json!(round6(v))
}

fn cost(c: Cost) -> Value {
    match c {
        Cost::Finite(v) => num(v),
        Cost::Infinite => Value::Null,
    }
}

fn ids(c: &[BidderId]) -> Value {
    Value::Array(c.iter().map(|b| json!(b.0)).collect())
}

fn per_bidder(order: &[BidderId], map: &BTreeMap<BidderId, f64>) -> Value {
    let mut m = Map::new();
    for id in order {
        m.insert(id.to_string(), num(map.get(id).copied().unwrap_or(0.0)));
    }
    Value::Object(m)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

pub fn clearing_json(order: &[BidderId], c: &ClearingResult) -> Value {
    let mut v = json!({
        "status": if c.is_feasible() { "optimal" } else { "infeasible" },
        "objective": cost(c.objective),
        "allocation": per_bidder(order, &c.allocation),
        "winners": ids(&c.winners),
        "second_stage": num(c.second_stage),
    });
    if let Some(y) = c.y {
        v["y"] = num(y);
    }
    if let Some(p) = &c.nodal_prices {
        let mut m = Map::new();
        for (n, price) in p {
            m.insert(n.0.to_string(), num(*price));
        }
        v["nodal_prices"] = Value::Object(m);
    }
    v
}

fn parse_active(list: &str) -> Result<Vec<BidderId>, Output> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u32>()
                .map(BidderId)
                .map_err(|_| Output::fail(EXIT_PARSE, format!("error: --active: bad bidder id {s:?}\n")))
        })
        .collect()
}

pub fn cmd_clear(inst: &Instance, active: Option<&str>) -> Result<Output, Output> {
    let c = match active {
        None => clear_all(&inst.market, &inst.bids),
        Some(list) => {
            let ids = parse_active(list)?;
            if let Some(bad) = ids.iter().find(|id| inst.bids.index_of(**id).is_none()) {
                return Err(Output::fail(EXIT_PARSE, format!("error: --active: unknown bidder {bad}\n")));
            }
            clear(&inst.market, &inst.bids, &ids)
        }
    }
    .map_err(engine_failure)?;
    let out = pretty(&clearing_json(&inst.bids.ids(), &c));
    Ok(Output { code: if c.is_feasible() { EXIT_OK } else { EXIT_INFEASIBLE }, stdout: out, stderr: String::new() })
}

fn trace_json(t: &CcgState) -> Value {
    let steps: Vec<Value> = t
        .steps
        .iter()
        .map(|s| {
            let order: Vec<BidderId> = s.revealed.keys().cloned().collect();
            json!({
                "k": s.k,
                "coalition": ids(&s.coalition),
                "z": num(s.z),
                "nu": s.nu.map(num).unwrap_or(Value::Null),
                "revealed": per_bidder(&order, &s.revealed),
                "margin": num(s.margin),
            })
        })
        .collect();
    Value::Array(steps)
}

pub fn outcome_json(o: &PaymentOutcome) -> Value {
    let mut v = json!({
        "rule": o.rule.name(),
        "payments": per_bidder(&o.order, &o.payments),
        "utilities": per_bidder(&o.order, &o.utilities),
        "revealed": per_bidder(&o.order, &o.revealed),
        "operator": num(o.operator),
        "total": num(o.total),
        "allocation": per_bidder(&o.order, &o.clearing.allocation),
        "objective": cost(o.clearing.objective),
    });
    if let Some(t) = &o.trace {
        v["trace"] = trace_json(t);
        v["generated"] = Value::Array(
            t.constraints.iter().map(|c| json!({"blocked": ids(&c.blocked), "rhs": num(c.rhs)})).collect(),
        );
    }
    v
}

pub fn cmd_pay(inst: &Instance, rule: Rule) -> Result<Output, Output> {
    let o = run(rule, &inst.market, &inst.bids, &inst.true_costs).map_err(engine_failure)?;
    Ok(Output::ok(pretty(&outcome_json(&o))))
}

fn attack_json(r: &AttackReport, witness: bool) -> Value {
    let mut v = json!({
        "kind": match r.kind {
            coreclear::coreanalysis::AttackKind::Collusion => "collusion",
            coreclear::coreanalysis::AttackKind::Shill => "shill",
        },
        "rule": r.rule.name(),
        "attackers": ids(&r.attackers),
        "label": r.label,
        "utility_before": num(r.utility_before),
        "utility_after": num(r.utility_after),
        "margin": num(r.margin),
        "profitable": r.profitable,
    });
    if let Some(s) = r.seed {
        v["seed"] = json!(s);
    }
    if let Some(vcg) = r.vcg_reference {
        v["vcg_reference"] = num(vcg);
        v["vcg_margin"] = num(r.utility_after - vcg);
    }
    if witness {
        let mut m = Map::new();
        for (id, c) in r.manipulated.iter() {
            if r.attackers.contains(&id) {
                let spec = coreclear::scenario::CurveSpec::from_curve(c);
                m.insert(id.to_string(), serde_json::to_value(spec).expect("json"));
            }
        }
        v["bids"] = Value::Object(m);
    }
    v
}

fn combinations(items: &[BidderId], max: usize) -> Vec<Vec<BidderId>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(items: &[BidderId], start: usize, max: usize, cur: &mut Vec<BidderId>, out: &mut Vec<Vec<BidderId>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == max {
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            go(items, i + 1, max, cur, out);
            cur.pop();
        }
    }
    go(items, 0, max, &mut cur, &mut out);
    out
}

/// Collusion by every losing coalition up to size 3 and shill splits of every
/// bidder, under VCG and the core-selecting rule.
pub fn attack_sweep(inst: &Instance) -> coreclear::Result<Vec<AttackReport>> {
    let n = inst.true_costs.len();
    if n > MAX_ATTACK_BIDDERS {
        return Err(Error::TooManyBidders { count: n, limit: MAX_ATTACK_BIDDERS });
    }
    let truthful = clear_all(&inst.market, &inst.true_costs)?;
    if !truthful.is_feasible() {
        return Err(Error::ClearingInfeasible);
    }
    let losers: Vec<BidderId> =
        inst.true_costs.ids().into_iter().filter(|id| !truthful.winners.contains(id)).collect();
    let mut reports = Vec::new();
    for k in combinations(&losers, MAX_COALITION) {
        for family in Deviation::ALL {
            let seeds: &[u64] = if family == Deviation::RandomScale { &RANDOM_SCALE_SEEDS } else { &[0] };
            for &seed in seeds {
                let Some(dev) = deviation_bids(&inst.market, &inst.true_costs, &k, family, seed)? else { continue };
                for rule in [Rule::Vcg, Rule::Bocs] {
                    match simulate_collusion(&inst.market, &inst.true_costs, &k, &dev, rule) {
                        Ok(mut r) => {
                            r.label = family.name().to_string();
                            r.seed = (family == Deviation::RandomScale).then_some(seed);
                            reports.push(r);
                        }
                        Err(Error::ClearingInfeasible | Error::PivotInfeasible(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    for (i, id) in inst.true_costs.ids().into_iter().enumerate() {
        let seed = i as u64 + 1;
        for (label, split) in shill_splits(inst.true_costs.get(id).expect("own id"), seed)? {
            if split.len() < 2 {
                continue;
            }
            for rule in [Rule::Vcg, Rule::Bocs] {
                match simulate_shill(&inst.market, &inst.true_costs, id, &split, rule) {
                    Ok(mut r) => {
                        r.label = label.clone();
                        r.seed = Some(seed);
                        reports.push(r);
                    }
                    Err(Error::ClearingInfeasible | Error::PivotInfeasible(_) | Error::GridMismatch(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(reports)
}

fn check_core(inst: &Instance, witness: bool) -> coreclear::Result<Value> {
    let (out, check) = vcg_in_core(&inst.market, &inst.bids)?;
    let mut v = json!({
        "vcg_in_core": check.in_core,
        "winners": ids(&out.clearing.winners),
        "vcg_payments": per_bidder(&out.order, &out.payments),
        "efficiency_gap": num(check.efficiency_gap),
        "violations": check.violations.len(),
    });
    if witness {
        v["violated"] = Value::Array(
            check
                .violations
                .iter()
                .map(|x| json!({"coalition": ids(&x.coalition), "lhs": num(x.lhs), "rhs": num(x.rhs)}))
                .collect(),
        );
    }
    Ok(v)
}

fn check_supermod(inst: &Instance, witness: bool) -> coreclear::Result<Value> {
    let (ok, w) = check_supermodularity(&inst.market, &inst.bids)?;
    let mut v = json!({ "supermodular": ok, "limit": MAX_SUPERMOD_BIDDERS });
    if let (true, Some(w)) = (witness, w) {
        v["witness"] = json!({
            "s": ids(&w.s), "r": ids(&w.r), "l": w.l.0, "lhs": cost(w.lhs), "rhs": cost(w.rhs),
        });
    }
    Ok(v)
}

fn check_msupermod(inst: &Instance, witness: bool) -> coreclear::Result<Value> {
    let MarketFamily::MultiType(m) = &inst.market.family else {
        return Err(Error::NotApplicable("requirement checks need a multi-type market".into()));
    };
    let r = check_m_supermodular(m);
    let mut v = json!({
        "supermodular": r.supermodular,
        "nondecreasing": r.nondecreasing,
        "normalized": r.normalized,
        "holds": r.holds(),
    });
    if witness {
        if let Some(w) = &r.witness {
            v["witness"] = json!({
                "union": w.union, "intersection": w.intersection,
                "left": w.left, "right": w.right, "gap": num(w.gap),
            });
        }
        if let Some((s, t)) = &r.monotone_witness {
            v["monotone_witness"] = json!({ "subset": s, "superset": t });
        }
    }
    Ok(v)
}

fn check_pairwise(inst: &Instance) -> coreclear::Result<Value> {
    let r = check_pairwise_removal_infeasible(&inst.market, &inst.bids)?;
    Ok(json!({
        "all_infeasible": r.all_infeasible,
        "feasible_pairs": Value::Array(r.feasible_pairs.iter().map(|(a, b)| json!([a.0, b.0])).collect()),
        "vcg_in_core": r.vcg_in_core,
    }))
}

fn check_attacks(inst: &Instance, witness: bool) -> coreclear::Result<Value> {
    let reports = attack_sweep(inst)?;
    let mut summary = Map::new();
    for rule in [Rule::Vcg, Rule::Bocs] {
        let of_rule: Vec<&AttackReport> = reports.iter().filter(|r| r.rule == rule).collect();
        let profitable = of_rule.iter().filter(|r| r.profitable).count();
        let above_vcg = of_rule.iter().filter(|r| r.vcg_margin().is_some_and(|m| m > coreclear::MARGIN_TOL)).count();
        let worst = of_rule.iter().map(|r| r.margin).fold(f64::NEG_INFINITY, f64::max);
        summary.insert(
            rule.name().to_string(),
            json!({
                "simulated": of_rule.len(),
                "profitable": profitable,
                "shill_above_truthful_vcg": above_vcg,
                "max_margin": if of_rule.is_empty() { Value::Null } else { num(worst) },
            }),
        );
    }
    let mut v = json!({ "summary": Value::Object(summary) });
    let shown: Vec<Value> =
        reports.iter().filter(|r| witness || r.profitable).map(|r| attack_json(r, witness)).collect();
    v["reports"] = Value::Array(shown);
    Ok(v)
}

pub fn cmd_diagnose(inst: &Instance, checks: &[Check], witness: bool) -> Result<Output, Output> {
    let mut out = Map::new();
    for c in checks {
        let (name, r) = match c {
            Check::Core => ("core", check_core(inst, witness)),
            Check::Supermod => ("supermod", check_supermod(inst, witness)),
            Check::Msupermod => ("msupermod", check_msupermod(inst, witness)),
            Check::Pairwise => ("pairwise", check_pairwise(inst)),
            Check::Attacks => ("attacks", check_attacks(inst, witness)),
        };
        let v = match r {
            Ok(v) => v,
            Err(Error::NotApplicable(reason)) => json!({ "applicable": false, "reason": reason }),
            Err(e) => {
                let mut o = engine_failure(e);
                o.stderr = format!("{name}: {}", o.stderr);
                return Err(o);
            }
        };
        out.insert(name.to_string(), v);
    }
    Ok(Output::ok(pretty(&Value::Object(out))))
}

/// `12`, `0.5`, `-60`: six decimals at most, no trailing zeros.
pub fn money(v: f64) -> String {
    let s = format!("{:.6}", round6(v));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// One table per rule, one column pair per scenario.
pub fn render_report(names: &[String], insts: &[Instance]) -> String {
    let mut out = String::new();
    let mut order: Vec<BidderId> = Vec::new();
    for inst in insts {
        for id in inst.bids.ids() {
            if !order.contains(&id) {
                order.push(id);
            }
        }
    }
    for rule in Rule::ALL {
        let outcomes: Vec<Option<PaymentOutcome>> = insts
            .iter()
            .map(|i| run(rule, &i.market, &i.bids, &i.true_costs).ok())
            .collect();
        if !insts.is_empty() && outcomes.iter().all(Option::is_none) {
            continue;
        }
        out.push_str(&format!("### {} outcomes\n\n", rule.name()));
        let mut header = String::from("| |");
        let mut rule_line = String::from("|---|");
        for name in names {
            header.push_str(&format!(" {name} payment (utility) | x |"));
            rule_line.push_str("---|---|");
        }
        out.push_str(&header);
        out.push('\n');
        out.push_str(&rule_line);
        out.push('\n');
        for id in &order {
            let mut row = format!("| Bidder {id} |");
            for (inst, o) in insts.iter().zip(&outcomes) {
                match (inst.bids.index_of(*id), o) {
                    (Some(_), Some(o)) => row.push_str(&format!(
                        " {} ({}) | {} |",
                        money(o.payment(*id)),
                        money(o.utility(*id)),
                        money(o.clearing.quantity(*id))
                    )),
                    (Some(_), None) => row.push_str(" n/a | n/a |"),
                    (None, _) => row.push_str(" - | - |"),
                }
            }
            out.push_str(&row);
            out.push('\n');
        }
        if !order.is_empty() {
            let mut row = String::from("| Total |");
            for o in &outcomes {
                match o {
                    Some(o) => row.push_str(&format!(" {} | {} |", money(o.total), money(o.clearing.total_quantity()))),
                    None => row.push_str(" n/a | n/a |"),
                }
            }
            out.push_str(&row);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn cmd_report(paths: &[PathBuf]) -> Result<Output, Output> {
    let mut names = Vec::with_capacity(paths.len());
    let mut insts = Vec::with_capacity(paths.len());
    for p in paths {
        insts.push(load(p)?);
        names.push(p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }
    Ok(Output::ok(render_report(&names, &insts)))
}

/// Caps the global rayon pool from `CORECLEAR_THREADS`, when set.
pub fn init_threads() -> Result<(), String> {
    match std::env::var("CORECLEAR_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| format!("CORECLEAR_THREADS: bad value {v:?}"))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| format!("CORECLEAR_THREADS: {e}"))
        }
        Err(_) => Ok(()),
    }
}
