//! Primary acceptance criteria. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use holocell::cell::{reconfiguration_report, RobotMemory, Scenario};
use holocell::config::SystemConfig;
use holocell::fb::{
    Behavior, ConnectionKind, Endpoint, ExecContext, FBTypeDef, Resource, TypeRegistry, Value,
    ValueKind,
};
use holocell::messaging::{ChannelId, Transport};
use holocell::protocol::*;
use holocell::runner::{run_scenario, RunOptions, RunReport};
use holocell::scheduling::{
    compute_bid, Action, Agenda, CellBidder, Negotiation, NegotiationConfig, ScheduleSlot,
};
use holocell::system::System;
use holocell::trace::EventKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

fn reference() -> SystemConfig {
    SystemConfig::load(&config_dir().join("reference.toml")).expect("reference config")
}

fn ch(s: &str) -> ChannelId {
    s.parse().unwrap()
}

fn run(cfg: SystemConfig, scenario: &str) -> Result<(System, RunReport), String> {
    let mut system = System::boot(cfg, Transport::InProc).map_err(|e| e.to_string())?;
    let scenario: Scenario = scenario
        .parse()
        .map_err(|e: holocell::cell::ScenarioError| e.to_string())?;
    let report =
        run_scenario(&mut system, &scenario, RunOptions::default()).map_err(|e| e.to_string())?;
    Ok((system, report))
}

fn p10_scenario() -> String {
    std::fs::read_to_string(config_dir().join("scenarios/p10.txt")).unwrap()
}

fn p10_end_to_end() -> Outcome {
    let started = Instant::now();
    let (system, report) = run(reference(), &p10_scenario())?;
    let wall = started.elapsed();
    check!(
        report.exit_code() == 0,
        "exit {}: {:?}",
        report.exit_code(),
        report.failures()
    );
    let root = &report.orders[0].id;

    let frames = system.frames();
    let children: BTreeSet<&str> = frames
        .iter()
        .filter(|f| f.kind == EventKind::HolonCreated && f.text("parent") == Some(root))
        .filter_map(|f| f.text("holon"))
        .collect();
    check!(children.len() == 2, "{} child order holons", children.len());
    let removed: BTreeSet<&str> = frames
        .iter()
        .filter(|f| f.kind == EventKind::HolonRemoved)
        .filter_map(|f| f.text("holon"))
        .collect();
    check!(
        children.is_subset(&removed),
        "children not despawned: {children:?} vs {removed:?}"
    );

    let slots = system.agenda(system.config().cell.inbox);
    let find = |s: &str| slots.iter().find(|x| x.serv_id == s).cloned();
    let (Some(s20), Some(s21), Some(s10)) = (find("S_20"), find("S_21"), find("S_10")) else {
        return Err(format!("agenda lacks a service: {slots:?}"));
    };
    check!(
        s10.start >= s20.end.max(s21.end),
        "S_10 starts at {} before its inputs",
        s10.start
    );
    let mut sorted = slots.clone();
    sorted.sort_by_key(|s| s.start);
    check!(
        sorted.windows(2).all(|w| w[0].end <= w[1].start),
        "overlapping slots {sorted:?}"
    );
    check!(wall < Duration::from_secs(5), "took {wall:?}");
    let t0 = system.start_time();
    Ok(format!(
        "S_20 [{}, {}) S_21 [{}, {}) S_10 [{}, {}) relative to start, {:.0} ms",
        s20.start - t0,
        s20.end - t0,
        s21.start - t0,
        s21.end - t0,
        s10.start - t0,
        s10.end - t0,
        wall.as_secs_f64() * 1e3
    ))
}

fn ident(rng: &mut ChaCha8Rng) -> String {
    const FIRST: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz_";
    const REST: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_:#";
    let n = rng.gen_range(0..10);
    let mut s = String::new();
    s.push(FIRST[rng.gen_range(0..FIRST.len())] as char);
    for _ in 0..n {
        s.push(REST[rng.gen_range(0..REST.len())] as char);
    }
    s
}

fn free_text(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[&str] = &[
        "a", "Z", "9", " ", "<", ">", "&", "\"", "'", "é", "ț", "=", "/", "\t", "µ",
    ];
    (0..rng.gen_range(0..16))
        .map(|_| *POOL.choose(rng).unwrap())
        .collect()
}

fn channel(rng: &mut ChaCha8Rng) -> ChannelId {
    ChannelId::new(
        [225, rng.gen(), rng.gen(), rng.gen()],
        rng.gen_range(1..=u16::MAX),
    )
    .unwrap()
}

fn time(rng: &mut ChaCha8Rng) -> EpochTime {
    EpochTime(rng.gen_range(0..=4_000_000_000))
}

fn product(rng: &mut ChaCha8Rng) -> ProductSpec {
    let name = ident(rng);
    if rng.gen_bool(0.5) {
        let servs: Vec<String> = (0..rng.gen_range(1..4)).map(|_| ident(rng)).collect();
        let refs: Vec<&str> = servs.iter().map(String::as_str).collect();
        ProductSpec::simple(&name, &refs)
    } else {
        let cmps: Vec<String> = (0..rng.gen_range(1..4)).map(|_| ident(rng)).collect();
        let refs: Vec<&str> = cmps.iter().map(String::as_str).collect();
        ProductSpec::composite(&name, &ident(rng), &refs)
    }
}

fn service(rng: &mut ChaCha8Rng) -> ServiceDef {
    let mut d = if rng.gen_bool(0.5) {
        ServiceDef::placement(&ident(rng), rng.gen_range(1..10_000), rng.gen_range(0..50))
    } else {
        ServiceDef::join(&ident(rng), rng.gen_range(1..10_000))
    };
    d.steps = rng.gen_range(1..6);
    d.resident_required = rng.gen_bool(0.5);
    d
}

fn message(rng: &mut ChaCha8Rng) -> ProtocolMsg {
    let opt_id = |rng: &mut ChaCha8Rng| rng.gen_bool(0.5).then(|| ident(rng));
    let opt_ch = |rng: &mut ChaCha8Rng| rng.gen_bool(0.5).then(|| channel(rng));
    match rng.gen_range(0..20) {
        0 => ProtocolMsg::GetBidForOp(BidRequest {
            id: ident(rng),
            op_id: ident(rng),
            min_start: time(rng),
            sender: channel(rng),
        }),
        1 => ProtocolMsg::RspBidForOp(BidResponse {
            id: ident(rng),
            op_id: ident(rng),
            start: time(rng),
            exec_time: rng.gen_range(0..100_000),
            sender: channel(rng),
        }),
        2 => ProtocolMsg::AwardOp(AwardOp {
            id: ident(rng),
            op_id: ident(rng),
            start: time(rng),
            sender: channel(rng),
        }),
        3 => ProtocolMsg::ConfirmOp(ConfirmOp {
            id: ident(rng),
            op_id: ident(rng),
            accepted: rng.gen(),
        }),
        4 => ProtocolMsg::CancelOp(CancelOp {
            id: ident(rng),
            op_id: ident(rng),
        }),
        5 => ProtocolMsg::RegisterService(RegisterService {
            serv_id: ident(rng),
            holon_addr: channel(rng),
        }),
        6 => ProtocolMsg::LookupService(LookupService {
            serv_id: ident(rng),
            sender: channel(rng),
        }),
        7 => ProtocolMsg::RspLookup(RspLookup {
            serv_id: ident(rng),
            holons: (0..rng.gen_range(0..4)).map(|_| channel(rng)).collect(),
        }),
        8 => ProtocolMsg::ExecOp(ExecOp {
            id: ident(rng),
            op_id: ident(rng),
            start: time(rng),
            exec_time: rng.gen_range(0..100_000),
            sender: channel(rng),
        }),
        9 => ProtocolMsg::OpProgress(OpProgress {
            id: ident(rng),
            op_id: ident(rng),
            percent: rng.gen_range(0..=100),
        }),
        10 => ProtocolMsg::OpDone(OpDone {
            id: ident(rng),
            op_id: ident(rng),
        }),
        11 => ProtocolMsg::OpFault(OpFault {
            id: ident(rng),
            op_id: ident(rng),
            reason: free_text(rng),
        }),
        12 => ProtocolMsg::CreateOrder(CreateOrder {
            product: ident(rng),
            order_id: opt_id(rng),
            parent: opt_ch(rng),
            sender: opt_ch(rng),
            spec: rng.gen_bool(0.5).then(|| product(rng)),
        }),
        13 => ProtocolMsg::OrderStatus(OrderStatus {
            order_id: ident(rng),
            percent: rng.gen_range(0..=100),
            state: opt_id(rng),
        }),
        14 => ProtocolMsg::OrderAccepted(OrderAccepted {
            order_id: ident(rng),
            product: ident(rng),
            from_stock: rng.gen(),
        }),
        15 => ProtocolMsg::OrderRejected(OrderRejected {
            product: ident(rng),
            reason: free_text(rng),
            order_id: opt_id(rng),
        }),
        16 => ProtocolMsg::PlanReady(PlanReady {
            order_id: ident(rng),
            end: time(rng),
        }),
        17 => ProtocolMsg::OrderFailed(OrderFailed {
            order_id: ident(rng),
            reason: free_text(rng),
        }),
        18 => ProtocolMsg::DefineProduct(product(rng)),
        _ => ProtocolMsg::DefineService(DefineService(service(rng))),
    }
}

fn protocol_byte_exactness() -> Outcome {
    let sender = ch("225.0.0.1:2101");
    let req = ProtocolMsg::GetBidForOp(BidRequest {
        id: "15".into(),
        op_id: "Op_30".into(),
        min_start: EpochTime(1308574904),
        sender,
    });
    let rsp = ProtocolMsg::RspBidForOp(BidResponse {
        id: "15".into(),
        op_id: "Op_30".into(),
        start: EpochTime(1308574950),
        exec_time: 50,
        sender: ch("225.0.0.1:3001"),
    });
    let req_text =
        r#"<GetBidForOp ID="15" OpID="Op_30" MinStartTime="1308574904" Sender="225.0.0.1:2101" />"#;
    let rsp_text = r#"<RspBidForOp ID="15" OpID="Op_30" StartTime="1308574950" ExecTime="50" Sender="225.0.0.1:3001" />"#;
    check!(
        req.encode() == req_text,
        "request encodes as {}",
        req.encode()
    );
    check!(
        rsp.encode() == rsp_text,
        "response encodes as {}",
        rsp.encode()
    );
    check!(
        ProtocolMsg::decode(req_text).as_ref() == Ok(&req),
        "request fixture decode"
    );
    check!(
        ProtocolMsg::decode(rsp_text).as_ref() == Ok(&rsp),
        "response fixture decode"
    );

    let (ProtocolMsg::GetBidForOp(r), ProtocolMsg::RspBidForOp(b)) = (&req, &rsp) else {
        unreachable!()
    };
    check!(
        b.answers(r).is_ok(),
        "fixture response does not answer its request"
    );
    check!(
        b.start.0 - r.min_start.0 == 46,
        "gap {}",
        b.start.0 - r.min_start.0
    );
    check!(b.finish() == EpochTime(1308575000), "end {}", b.finish());

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut kinds = BTreeSet::new();
    for i in 0..1000 {
        let m = message(&mut rng);
        kinds.insert(m.type_name());
        let text = m.encode();
        let back = ProtocolMsg::decode(&text).map_err(|e| format!("message {i} {text}: {e}"))?;
        check!(back == m, "message {i} changed: {text}");
        check!(
            back.encode() == text,
            "message {i} re-encodes differently: {text}"
        );
    }
    Ok(format!(
        "fixtures exact, gap 46 s, end 1308575000, 1000 round trips over {} types",
        kinds.len()
    ))
}

/// Smallest feasible start by scanning every second from `min_start`.
fn scan_oracle(slots: &[(u64, u64)], min_start: u64, dur: u64) -> u64 {
    (min_start..)
        .find(|&t| slots.iter().all(|&(s, e)| t + dur <= s || t >= e))
        .unwrap()
}

fn earliest_gap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0a11);
    let horizon = 10_000u64;
    let def = ServiceDef::placement("S", 1, 0);
    let mut nonzero_shift = 0;
    for trial in 0..500 {
        let mut agenda = Agenda::new();
        let mut raw = Vec::new();
        for k in 0..rng.gen_range(0..=8) {
            let s = rng.gen_range(0..horizon);
            let e = (s + rng.gen_range(1..=1500)).min(horizon);
            if e > s && agenda.is_free(EpochTime(s), EpochTime(e)) {
                agenda
                    .insert(
                        ScheduleSlot::new("X", &format!("c{k}"), EpochTime(s), EpochTime(e))
                            .unwrap(),
                    )
                    .unwrap();
                raw.push((s, e));
            }
        }
        let min_start = rng.gen_range(0..horizon);
        let dur = rng.gen_range(1..=2000);
        let resident = rng.gen_bool(0.7);
        let load = 120;
        let mut d = def.clone();
        d.base_exec = dur;
        let (start, exec) = compute_bid(&agenda, &d, EpochTime(min_start), resident, load);
        let want_exec = dur + if resident { 0 } else { load };
        let want = scan_oracle(&raw, min_start, want_exec);
        check!(
            exec == want_exec && start.0 == want,
            "trial {trial}: bid ({}, {exec}) vs oracle ({want}, {want_exec}) for {raw:?} min {min_start}",
            start.0
        );
        nonzero_shift += usize::from(want > min_start);
    }
    Ok(format!(
        "500 agendas exact, {nonzero_shift} needed a later gap"
    ))
}

struct RaceStats {
    conflicts: u32,
}

/// Two order-side negotiations and one cell exchange messages in a random
/// order. Returns the number of rejected awards.
fn race_trial(rng: &mut ChaCha8Rng) -> Result<RaceStats, String> {
    let cell_addr = ch("225.0.0.1:3002");
    let services = vec![
        ServiceDef::placement("S_A", rng.gen_range(10..=90), 0),
        ServiceDef::placement("S_B", rng.gen_range(10..=90), 0),
    ];
    let mut cell = CellBidder::new(
        cell_addr,
        services,
        RobotMemory::preloaded(4, &["S_A", "S_B"]),
        120,
    );
    for k in 0..rng.gen_range(0..4) {
        let s = rng.gen_range(0..300);
        let e = s + rng.gen_range(5..60);
        if cell.agenda().is_free(EpochTime(s), EpochTime(e)) {
            let slot =
                ScheduleSlot::new("S_A", &format!("pre{k}"), EpochTime(s), EpochTime(e)).unwrap();
            cell.agenda_mut().insert(slot).unwrap();
        }
    }
    let before: Vec<ScheduleSlot> = cell.agenda().slots().to_vec();
    let me = [ch("225.0.0.1:2101"), ch("225.0.0.1:2102")];
    let cfg = NegotiationConfig {
        timeout: 2,
        max_conflicts: 8,
    };
    let mut negs: Vec<Negotiation> = (0..2)
        .map(|i| {
            let serv = if rng.gen_bool(0.5) { "S_A" } else { "S_B" };
            Negotiation::new(
                &format!("O{}:1", i + 1),
                serv,
                EpochTime(rng.gen_range(0..60)),
                me[i],
                cfg,
            )
        })
        .collect();

    let mut in_flight: Vec<(ChannelId, ProtocolMsg)> = Vec::new();
    let mut timers: Vec<(usize, u64)> = Vec::new();
    let mut awarded: [Option<ScheduleSlot>; 2] = [None, None];
    let mut accepted_windows: Vec<(EpochTime, EpochTime)> = Vec::new();
    let mut rejected = 0u32;

    let absorb = |i: usize,
                  actions: Vec<Action>,
                  in_flight: &mut Vec<(ChannelId, ProtocolMsg)>,
                  timers: &mut Vec<(usize, u64)>,
                  awarded: &mut [Option<ScheduleSlot>; 2]|
     -> Result<(), String> {
        for a in actions {
            match a {
                Action::Send { to, msg } => in_flight.push((to, msg)),
                Action::StartTimer { tag, .. } => timers.push((i, tag)),
                Action::Awarded(w) => awarded[i] = Some(w.slot),
                Action::Failed(e) => return Err(format!("negotiation {i} failed: {e}")),
            }
        }
        Ok(())
    };
    for (i, neg) in negs.iter_mut().enumerate() {
        let actions = neg.start_with_providers(&[cell_addr]);
        absorb(i, actions, &mut in_flight, &mut timers, &mut awarded)?;
    }
    let mut steps = 0;
    while negs.iter().any(|n| !n.is_finished()) {
        steps += 1;
        check!(steps < 10_000, "no termination");
        if in_flight.is_empty() {
            // Bids and confirmations are never lost here, so timers only
            // matter once nothing is in flight.
            let Some(idx) = (!timers.is_empty()).then(|| rng.gen_range(0..timers.len())) else {
                return Err("stalled with no messages or timers".into());
            };
            let (i, tag) = timers.swap_remove(idx);
            let actions = negs[i].on_timer(tag);
            absorb(i, actions, &mut in_flight, &mut timers, &mut awarded)?;
            continue;
        }
        let idx = rng.gen_range(0..in_flight.len());
        let (to, msg) = in_flight.remove(idx);
        if to == cell_addr {
            match &msg {
                ProtocolMsg::GetBidForOp(req) => {
                    if let Some(bid) = cell.handle_request(req) {
                        in_flight.push((req.sender, ProtocolMsg::RspBidForOp(bid)));
                    }
                }
                ProtocolMsg::AwardOp(award) => {
                    let (confirm, result) = cell.handle_award(award);
                    match result {
                        Ok(slot) => accepted_windows.push((slot.start, slot.end)),
                        Err(_) => rejected += 1,
                    }
                    in_flight.push((award.sender, ProtocolMsg::ConfirmOp(confirm)));
                }
                ProtocolMsg::CancelOp(c) => {
                    cell.handle_cancel(c);
                }
                other => return Err(format!("cell got {}", other.type_name())),
            }
        } else {
            let i = me.iter().position(|m| *m == to).unwrap();
            let actions = negs[i].on_message(&msg);
            absorb(i, actions, &mut in_flight, &mut timers, &mut awarded)?;
        }
    }

    let (Some(a), Some(b)) = (&awarded[0], &awarded[1]) else {
        return Err("a negotiation finished without an award".into());
    };
    check!(
        accepted_windows.len() == 2,
        "{} commits succeeded",
        accepted_windows.len()
    );
    check!(
        !a.overlaps(b.start, b.end),
        "awarded windows overlap: {a:?} {b:?}"
    );
    check!(
        cell.agenda().is_consistent(),
        "agenda inconsistent: {:?}",
        cell.agenda().slots()
    );
    for s in [a, b] {
        check!(
            cell.agenda().slots().contains(s),
            "awarded slot {s:?} missing from agenda"
        );
    }
    for p in &before {
        check!(
            cell.agenda().slots().contains(p),
            "pre-existing slot {p:?} lost"
        );
    }
    check!(
        cell.agenda().len() == before.len() + 2,
        "agenda has {} slots",
        cell.agenda().len()
    );
    let total_conflicts: u32 = negs.iter().map(Negotiation::conflicts).sum();
    check!(
        total_conflicts == rejected,
        "{rejected} rejections but {total_conflicts} conflicts seen"
    );
    for n in &negs {
        check!(
            n.rounds() == n.conflicts() + 1,
            "rounds {} after {} conflicts",
            n.rounds(),
            n.conflicts()
        );
    }
    check!(
        cell.outstanding_quotes() <= 2 * rejected as usize + 2,
        "quotes pile up"
    );
    Ok(RaceStats {
        conflicts: rejected,
    })
}

fn negotiation_race() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2ace);
    let mut contested = 0;
    let mut total = 0;
    for trial in 0..200 {
        let stats = race_trial(&mut rng).map_err(|e| format!("trial {trial}: {e}"))?;
        contested += usize::from(stats.conflicts > 0);
        total += stats.conflicts;
    }
    check!(contested > 0, "no trial produced a conflicting award");
    Ok(format!(
        "200 trials, {contested} contested, {total} rejected awards all re-negotiated"
    ))
}

fn reconfiguration() -> Outcome {
    let cfg = reference();
    let t_a = cfg.cell_sim.load_time;
    let mut text = String::new();
    for k in 0..10u64 {
        let product = if k % 2 == 0 { "P_20" } else { "P_21" };
        text.push_str(&format!(
            "{} order {product}\n{} board\n{} collect\n",
            60 * k,
            60 * k,
            60 * (k + 1)
        ));
    }
    let (system, report) = run(cfg, &text)?;
    check!(
        report.exit_code() == 0,
        "alternating run: {:?}",
        report.failures()
    );
    let ex = system.sim().executions();
    let order: Vec<&str> = ex.iter().map(|e| e.serv_id.as_str()).collect();
    let expected: Vec<&str> = (0..10)
        .map(|k| if k % 2 == 0 { "S_20" } else { "S_21" })
        .collect();
    check!(order == expected, "execution order {order:?}");
    let r = reconfiguration_report(ex, t_a);
    check!(
        r.holonic.total_switch_time == 0,
        "holonic {}",
        r.holonic.total_switch_time
    );
    check!(
        r.classical.total_switch_time == 9 * t_a,
        "classical {}",
        r.classical.total_switch_time
    );

    let mut cfg = reference();
    cfg.cell_sim.memory_capacity = 1;
    cfg.cell_sim.preloaded = vec!["S_20".into()];
    let mut text = String::new();
    for k in 0..3u64 {
        text.push_str(&format!("{} order P_21\n{} board\n", 200 * k, 200 * k));
        text.push_str(&format!("{} collect\n", 200 * k + 199));
    }
    let (system, report) = run(cfg, &text)?;
    check!(
        report.exit_code() == 0,
        "non-resident run: {:?}",
        report.failures()
    );
    let r = reconfiguration_report(system.sim().executions(), t_a);
    check!(r.loads == 1, "{} loads", r.loads);
    check!(
        r.holonic.total_switch_time == t_a && r.classical.total_switch_time == t_a,
        "non-resident: holonic {} classical {}",
        r.holonic.total_switch_time,
        r.classical.total_switch_time
    );
    Ok(format!(
        "alternating x5: holonic 0, classical {} = 9 T_a; non-resident N=1: both {} = T_a",
        9 * t_a,
        t_a
    ))
}

/// (block, value received on IN, value published on OUT)
type Entry = (String, String, String);
type Log = Arc<Mutex<Vec<Entry>>>;

/// Records what arrived on IN, then publishes a fresh value on OUT.
struct Stamp {
    log: Log,
    count: u32,
}

impl Behavior for Stamp {
    fn on_event(&mut self, _event: &str, ctx: &mut ExecContext<'_>) {
        let me = ctx.instance().to_string();
        let got = ctx.text("IN").to_string();
        self.count += 1;
        let out = format!("{me}:{}", self.count);
        self.log.lock().unwrap().push((me, got, out.clone()));
        ctx.set_output("OUT", out);
        ctx.emit("CNF").unwrap();
    }
}

struct Network {
    blocks: usize,
    edges: Vec<(usize, usize)>,
    injections: Vec<usize>,
    /// Steps after which every output is overwritten.
    mutate_after: BTreeSet<usize>,
}

fn gen_network(rng: &mut ChaCha8Rng) -> Network {
    let blocks = rng.gen_range(2..=6);
    let mut edges = Vec::new();
    for b in 1..blocks {
        if rng.gen_bool(0.8) {
            edges.push((rng.gen_range(0..b), b));
        }
    }
    let injections = (0..rng.gen_range(1..=4))
        .map(|_| rng.gen_range(0..blocks))
        .collect();
    let mutate_after = (0..40).filter(|_| rng.gen_bool(0.5)).collect();
    Network {
        blocks,
        edges,
        injections,
        mutate_after,
    }
}

type Invocations = Vec<(String, String)>;

fn run_network(net: &Network) -> Result<(Invocations, Vec<Entry>), String> {
    let log: Log = Arc::default();
    let mut reg = TypeRegistry::new();
    let factory_log = log.clone();
    reg.register(
        FBTypeDef::basic("Stamp", move || Stamp {
            log: factory_log.clone(),
            count: 0,
        })
        .event_in("REQ", &["IN"])
        .event_out("CNF", &["OUT"])
        .data_in("IN", ValueKind::Text)
        .data_out("OUT", ValueKind::Text),
    )
    .map_err(|e| e.to_string())?;
    let mut r = Resource::new("R");
    r.record_invocations();
    let name = |i: usize| format!("b{i}");
    for i in 0..net.blocks {
        r.create_instance(&reg, &name(i), "Stamp", &[])
            .map_err(|e| e.to_string())?;
    }
    for &(a, b) in &net.edges {
        r.connect(
            ConnectionKind::Event,
            &Endpoint::new(name(a), "CNF"),
            &Endpoint::new(name(b), "REQ"),
        )
        .map_err(|e| e.to_string())?;
        r.connect(
            ConnectionKind::Data,
            &Endpoint::new(name(a), "OUT"),
            &Endpoint::new(name(b), "IN"),
        )
        .map_err(|e| e.to_string())?;
    }
    for &i in &net.injections {
        r.inject(
            &name(i),
            "REQ",
            vec![("IN".into(), Value::Text("ext".into()))],
        )
        .map_err(|e| e.to_string())?;
    }
    let mut step = 0;
    loop {
        if net.mutate_after.contains(&step) {
            for i in 0..net.blocks {
                r.set_output(&name(i), "OUT", Value::Text("MUTATED".into()))
                    .map_err(|e| e.to_string())?;
            }
        }
        if r.dispatch_step() == 0 {
            break;
        }
        step += 1;
        if step > 100_000 {
            return Err("network did not quiesce".into());
        }
    }
    let log = log.lock().unwrap().clone();
    Ok((r.invocations().to_vec(), log))
}

/// Every value a block received is the one its source published when it
/// emitted, delivered once per connection and in emission order.
fn coherent(net: &Network, log: &[Entry]) -> Result<(), String> {
    let mut received: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for (me, got, _) in log {
        if got == "ext" {
            continue;
        }
        check!(got != "MUTATED", "{me} saw a value written after emit");
        let src = got.split(':').next().unwrap_or_default().to_string();
        received
            .entry((src, me.clone()))
            .or_default()
            .push(got.clone());
    }
    let mut multiplicity: BTreeMap<(String, String), usize> = BTreeMap::new();
    for &(a, b) in &net.edges {
        *multiplicity
            .entry((format!("b{a}"), format!("b{b}")))
            .or_default() += 1;
    }
    for ((src, dst), m) in &multiplicity {
        let emitted: Vec<&String> = log
            .iter()
            .filter(|(me, ..)| me == src)
            .map(|(.., out)| out)
            .collect();
        let expected: Vec<String> = emitted
            .iter()
            .flat_map(|v| std::iter::repeat_n((*v).clone(), *m))
            .collect();
        let got = received
            .remove(&(src.clone(), dst.clone()))
            .unwrap_or_default();
        check!(
            got == expected,
            "{src}->{dst}: received {got:?}, emitted {expected:?}"
        );
    }
    check!(
        received.is_empty(),
        "values from unconnected blocks: {received:?}"
    );
    Ok(())
}

fn fb_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xfb);
    let mut deliveries = 0;
    for n in 0..300 {
        let net = gen_network(&mut rng);
        let (first, log) = run_network(&net)?;
        coherent(&net, &log).map_err(|e| format!("network {n}: {e}"))?;
        for _ in 1..5 {
            let (again, _) = run_network(&net)?;
            check!(
                again == first,
                "network {n}: invocation trace differs between runs"
            );
        }
        deliveries += first.len();
    }

    let mut traces = Vec::new();
    for _ in 0..5 {
        let mut cfg = reference();
        cfg.seed = 42;
        let mut system = System::boot(cfg, Transport::InProc).map_err(|e| e.to_string())?;
        system.record_invocations();
        let scenario: Scenario = p10_scenario().parse().unwrap();
        run_scenario(&mut system, &scenario, RunOptions::default()).map_err(|e| e.to_string())?;
        traces.push((system.invocations(), system.frames().to_vec()));
    }
    check!(
        traces.windows(2).all(|w| w[0] == w[1]),
        "P_10 invocation traces differ across runs"
    );
    let per_resource: usize = traces[0].0.values().map(Vec::len).sum();
    Ok(format!(
        "300 networks of 2-6 blocks coherent ({deliveries} invocations) and repeatable x5; P_10 x5 identical ({per_resource} invocations over {} resources)",
        traces[0].0.len()
    ))
}

fn lifecycle() -> Outcome {
    let mut checked = Vec::new();
    let scenarios = [
        ("p10", reference(), p10_scenario()),
        (
            "two P_10",
            reference(),
            "0 order P_10\n0 board\n60 board\n170 order P_10\n170 board\n230 board\n".to_string(),
        ),
        (
            "starved",
            reference(),
            "0 order P_10\n0 board\n".to_string(),
        ),
        ("unknown", reference(), "0 order P_99\n".to_string()),
    ];
    for (name, cfg, text) in scenarios {
        let mut system = System::boot(cfg, Transport::InProc).map_err(|e| e.to_string())?;
        let before = system.census();
        check!(
            system.dangling_connections() == 0,
            "{name}: dangling connections at boot"
        );
        let scenario: Scenario = text.parse().unwrap();
        let report = run_scenario(&mut system, &scenario, RunOptions::default())
            .map_err(|e| e.to_string())?;
        check!(
            system.dangling_connections() == 0,
            "{name}: {} dangling connections",
            system.dangling_connections()
        );
        if report.finished {
            check!(
                system.census() == before,
                "{name}: census {:?} vs {:?}",
                system.census(),
                before
            );
            let created = system
                .frames()
                .iter()
                .filter(|f| f.kind == EventKind::HolonCreated)
                .count();
            let removed = system
                .frames()
                .iter()
                .filter(|f| f.kind == EventKind::HolonRemoved)
                .count();
            check!(
                created - removed == before.len(),
                "{name}: {created} created, {removed} removed"
            );
        }
        checked.push(format!("{name} ({} holons)", system.census().len()));
    }
    Ok(format!("zero dangling after {}", checked.join(", ")))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("P_10 end-to-end", p10_end_to_end),
        ("protocol byte-exactness", protocol_byte_exactness),
        ("earliest-gap oracle equivalence", earliest_gap_oracle),
        ("negotiation race", negotiation_race),
        ("reconfiguration time", reconfiguration),
        ("FB determinism and coherence", fb_determinism),
        ("dynamic lifecycle", lifecycle),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
