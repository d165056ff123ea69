//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.
//!
//! The trend criteria run the full desk matrix (240 runs of 100 s). Set
//! `VANETLAB_DESK_RESULTS` to a results CSV (or a directory holding one)
//! to evaluate a matrix that was already run with `vanetlab sim matrix`.

mod common;

use std::collections::VecDeque;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vanet_core::cost_model::{
    dsr_discovery_cost, fsr_cost, graph_stats, olsr_total_cost, olsr_update_cost, ring_cost, update_instants,
    DsrErsSchedule, GraphSnapshot, ScopedCostParams, UpdateIntervals,
};
use vanet_core::engine::frame::{DataPacket, Dest, Frame, Payload};
use vanet_core::engine::mobility::Position;
use vanet_core::harness::matrix::read_rows;
use vanet_core::harness::RunRow;
use vanet_core::mac_model::{
    conditional_success_collision, geom_success_pmf, monte_carlo_virtual_tx_time, slot_outcome_probs,
    tx_probability_from_cw, avg_contention_window, virtual_tx_time,
};
use vanet_core::protocols::{Agent, Mode, ProtocolKind};
use vanet_core::{run_matrix, run_scenario, MacParams, ScenarioConfig, SimTime, Simulation};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, bad: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(bad.into())
    }
}

fn within(elapsed: Duration, limit: f64) -> Outcome {
    let s = elapsed.as_secs_f64();
    check(s < limit, format!("{s:.2} s"), format!("took {s:.2} s, limit {limit} s"))
}

fn c1_mac_identities() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut p = 0.01;
    while p <= 0.99 + 1e-9 {
        for q in 1..=30 {
            let params = MacParams::new(p, q, 1.0, 5.0, 1.0).map_err(|e| e.to_string())?;
            let probs = slot_outcome_probs(&params).map_err(|e| e.to_string())?;
            let (p_s, p_c) = conditional_success_collision(&params).map_err(|e| e.to_string())?;
            worst = worst.max((p_s + p_c - 1.0).abs()).max((probs.p_none + probs.p_any - 1.0).abs());
            if q == 1 {
                worst = worst.max((p_s - 1.0).abs());
            }
        }
        p += 0.07;
    }
    check(worst <= 1e-12, format!("max deviation {worst:.1e}"), format!("max deviation {worst:.1e}"))?;
    within(started.elapsed(), 1.0)
}

fn c2_monte_carlo() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for (i, &p) in [0.05, 0.1, 0.3].iter().enumerate() {
        for (j, &q) in [2u32, 5, 10].iter().enumerate() {
            let params = MacParams::from_seconds(p, q, 13e-6, 780e-6, 58e-6).map_err(|e| e.to_string())?;
            let exact = virtual_tx_time(&params).map_err(|e| e.to_string())?.t_total;
            let mc = monte_carlo_virtual_tx_time(&params, 100_000, 100 + (i * 3 + j) as u64)
                .map_err(|e| e.to_string())?;
            let diff = (mc.mean.t_total - exact).abs();
            let rel = diff / exact;
            worst = worst.max(rel);
            if rel >= 0.01 || diff > 3.0 * mc.t_total_std_error {
                notes.push(format!("p={p} Q={q}: rel {rel:.4}, {:.1} sigma", diff / mc.t_total_std_error));
            }
        }
    }
    if !notes.is_empty() {
        return Err(notes.join("; "));
    }
    within(started.elapsed(), 30.0).map(|t| format!("max relative error {worst:.4}, {t}"))
}

fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize) -> GraphSnapshot {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    let extra = rng.random_range(0.0..0.15);
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(extra) {
                edges.push((u, v));
            }
        }
    }
    GraphSnapshot::new(n, edges).unwrap()
}

/// Message-level flood: each node rebroadcasts the first copy it hears if
/// the copy still has TTL to spare.
fn flood_transmissions(graph: &GraphSnapshot, src: usize, ttl: u32) -> u64 {
    let mut heard = vec![false; graph.node_count()];
    heard[src] = true;
    let mut sends = VecDeque::from([(src, ttl)]);
    let mut count = 0;
    while let Some((node, ttl)) = sends.pop_front() {
        count += 1;
        for &v in graph.neighbors(node) {
            if !heard[v] {
                heard[v] = true;
                if ttl > 1 {
                    sends.push_back((v, ttl - 1));
                }
            }
        }
    }
    count
}

fn c3_discovery_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checks = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let graph = random_connected_graph(&mut rng, n);
        for src in 0..n {
            for nonprop in [1, 3] {
                let schedule = DsrErsSchedule::two_stage(nonprop).unwrap();
                let rings = schedule.rings().to_vec();
                let floods: Vec<u64> = rings.iter().map(|&t| flood_transmissions(&graph, src, t)).collect();
                let mut cases = vec![(None, floods.iter().sum::<u64>())];
                for i in 0..rings.len() {
                    // A reply inside a first ring of TTL 1 pays that ring only,
                    // which is what the prefix sum gives as well.
                    cases.push((Some(i), floods[..=i].iter().sum()));
                }
                for (ring, expected) in cases {
                    let got = dsr_discovery_cost(&graph, src, &schedule, ring).map_err(|e| e.to_string())?;
                    if got != expected {
                        return Err(format!("n={n} src={src} rings={rings:?} ring={ring:?}: {got} vs {expected}"));
                    }
                    checks += 1;
                }
            }
        }
    }
    within(started.elapsed(), 10.0).map(|t| format!("{checks} agreeing checks on 100 graphs, {t}"))
}

fn scoped(p_err: f64) -> ScopedCostParams {
    ScopedCostParams {
        d_avg_in: 4.0,
        d_avg_out: 4.0,
        n_in: 2,
        n_out: 1,
        p_err,
        d_f: vec![3.0],
        d_f_mpr: vec![2.0],
        p_c_mpr: 1.0,
        h: 2,
        horizon: 1.0,
        intervals: UpdateIntervals {
            intra: 1.0,
            inter: 10.0,
            hello: 1.0,
            tc: 3.0,
        },
    }
}

fn c4_hand_checks() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut failures = Vec::new();
    let mut expect = |label: &str, got: f64, want: f64| {
        if !close(got, want) {
            failures.push(format!("{label}: {got} vs {want}"));
        }
    };
    let e = |e: vanet_core::Error| e.to_string();

    let geometric: f64 = (1..=50).map(|z| geom_success_pmf(0.25, z).unwrap()).sum();
    expect("geometric partial sum", geometric, 1.0 - 0.75f64.powi(50));
    expect("cw from p", avg_contention_window(2.0 / 17.0).map_err(e)?, 16.0);
    expect("p from cw", tx_probability_from_cw(15.0).map_err(e)?, 0.125);
    let two = MacParams::new(0.5, 2, 1.0, 5.0, 1.0).map_err(e)?;
    let probs = slot_outcome_probs(&two).map_err(e)?;
    expect("p_none", probs.p_none, 0.25);
    expect("p_one", probs.p_one, 0.5);
    expect("p_any", probs.p_any, 0.75);
    let (p_s, p_c) = conditional_success_collision(&two).map_err(e)?;
    expect("p_s", p_s, 2.0 / 3.0);
    expect("p_c", p_c, 1.0 / 3.0);
    expect("t_total", virtual_tx_time(&two).map_err(e)?.t_total, 9.5);

    let path = GraphSnapshot::new(4, [(0, 1), (1, 2), (2, 3)]).map_err(e)?;
    expect("ring cost on a path", ring_cost(&path, 0, 3).map_err(e)? as f64, 3.0);
    let schedule = DsrErsSchedule::new(vec![1, 255]).map_err(e)?;
    expect("discovery without reply", dsr_discovery_cost(&path, 0, &schedule, None).map_err(e)? as f64, 5.0);
    expect("reply in the first ring", dsr_discovery_cost(&path, 0, &schedule, Some(0)).map_err(e)? as f64, 1.0);
    let stats = graph_stats(&path, None).map_err(e)?;
    expect("path mean degree", stats.d_avg, 1.5);
    expect("path diameter", f64::from(stats.diameter), 3.0);

    expect("fsr single term", fsr_cost(&scoped(0.5)).map_err(e)?, 3.0);
    expect("fsr without errors", fsr_cost(&scoped(0.0)).map_err(e)?, 0.0);
    let (c_nc, c_c) = olsr_update_cost(&scoped(0.5)).map_err(e)?;
    expect("olsr changed", c_c, 5.0);
    expect("olsr unchanged", c_nc, 2.0);
    let (z_nc, z_c) = olsr_update_cost(&scoped(0.0)).map_err(e)?;
    expect("olsr without errors", z_nc + z_c, 0.0);
    let mut modded = scoped(0.5);
    modded.horizon = 900.0;
    let mut orig = modded.clone();
    orig.intervals.tc = 5.0;
    let ratio = olsr_total_cost(&modded).map_err(e)? / olsr_total_cost(&orig).map_err(e)?;
    expect("olsr horizon ratio", ratio, 5.0 / 3.0);

    check(failures.is_empty(), "all hand values match to 1e-12", failures.join("; "))
}

fn desk_config(kind: ProtocolKind, mode: Mode, connections: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.scenario.duration = 100.0;
    cfg.scenario.nodes = 50;
    cfg.scenario.connections = connections;
    cfg.scenario.seed = 7;
    cfg.protocol.name = kind;
    cfg.protocol.mode = mode;
    cfg
}

fn csv_bytes(row: &RunRow) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(row).unwrap();
    w.into_inner().unwrap()
}

fn c5_determinism() -> Outcome {
    let mut slowest = Duration::ZERO;
    for kind in ProtocolKind::ALL {
        for mode in Mode::ALL {
            let cfg = desk_config(kind, mode, 10);
            let started = Instant::now();
            let a = run_scenario(&cfg, None).map_err(|e| e.to_string())?;
            slowest = slowest.max(started.elapsed());
            let b = run_scenario(&cfg, None).map_err(|e| e.to_string())?;
            if csv_bytes(&a.row) != csv_bytes(&b.row) {
                return Err(format!("{kind}-{mode} rows differ between identical runs"));
            }
        }
    }
    let heavy = desk_config(ProtocolKind::Dsr, Mode::Orig, 30);
    let started = Instant::now();
    run_scenario(&heavy, None).map_err(|e| e.to_string())?;
    slowest = slowest.max(started.elapsed());
    within(slowest, 60.0).map(|t| format!("identical rows for every protocol and mode; slowest 100 s run {t}"))
}

fn c6_mac_consistency() -> Outcome {
    let q = 5;
    let positions: Vec<Position> = (0..q).map(|i| Position::new(100.0 + i as f64, 100.0)).collect();
    let mut cfg = static_engine(positions, 30.0, 9);
    cfg.mac.queue_capacity = 100_000;
    let payload = 400;
    let agents: Vec<Saturator> = (0..q).map(|_| Saturator::new(20_000, payload)).collect();
    let probe = Frame::new(
        0,
        Dest::Broadcast,
        1,
        SimTime::ZERO,
        Payload::Data(DataPacket {
            id: 0,
            flow: 0,
            origin: 0,
            target: 0,
            created_at: SimTime::ZERO,
            payload_bytes: payload,
            salvaged: 0,
        }),
    );
    let mac = cfg.mac;
    let (out, _) = Simulation::new(cfg, Vec::new(), agents)
        .and_then(|s| s.run())
        .map_err(|e| e.to_string())?;
    let busy = mac.busy_slots(probe.size(), false) as f64;
    let params = MacParams::new(mac.tx_probability().unwrap(), q as u32, mac.slot, busy, 0.0).unwrap();
    let (_, p_c) = conditional_success_collision(&params).unwrap();
    let t_total = virtual_tx_time(&params).unwrap().t_total;
    let m = &out.medium;
    let interval = m.mean_success_interval().unwrap_or(f64::NAN);
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let (e_c, e_t) = (rel(m.collision_rate(), p_c), rel(interval, t_total));
    let detail = format!(
        "{} deliveries; p_c {:.4} vs {p_c:.4} ({:.1}%), t_total {:.3e} vs {t_total:.3e} ({:.1}%)",
        m.clean_busy_periods,
        m.collision_rate(),
        e_c * 100.0,
        interval,
        e_t * 100.0
    );
    check(m.clean_busy_periods >= 10_000 && e_c < 0.05 && e_t < 0.05, detail.clone(), detail)
}

/// `(src, dst)` pairs whose next hop is not one hop closer on the unit disk.
fn route_errors(agents: &[Agent], positions: &[Position], range: f64) -> usize {
    let n = positions.len();
    let mut bad = 0;
    for dst in 0..n {
        let dist = disk_distances(positions, range, dst);
        for src in (0..n).filter(|&s| s != dst) {
            let ok = agents[src].next_hop(dst).is_some_and(|h| {
                positions[h].distance(&positions[src]) <= range
                    && matches!((dist[h], dist[src]), (Some(a), Some(b)) if a + 1 == b)
            });
            bad += usize::from(!ok);
        }
    }
    bad
}

fn c7_static_routing() -> Outcome {
    let positions = grid(4, 4, 200.0);
    let n = positions.len();
    let range = ideal_radio().nominal_range;
    let mut notes = Vec::new();
    let mut failed = false;
    for kind in ProtocolKind::ALL {
        for mode in Mode::ALL {
            let p = params(kind, mode);
            let converge = 2.0 * p.slowest_interval();
            let start = converge + 0.5;
            let stop = start + 8.0;
            let mut flows = Vec::new();
            for src in 0..n {
                for dst in (0..n).filter(|&d| d != src) {
                    flows.push(flow(src, dst, start + 0.01 * (src * n + dst) as f64 % 2.0, stop, 0.5));
                }
            }
            let cfg = static_engine(positions.clone(), stop + 5.0, 1);
            let mut sim = Simulation::new(cfg, flows, agents(&p, n)).map_err(|e| e.to_string())?;
            sim.run_until(secs(converge)).map_err(|e| e.to_string())?;
            let early = if kind == ProtocolKind::Dsr {
                0
            } else {
                route_errors(sim.agents(), &positions, range)
            };
            let (out, agents) = sim.run().map_err(|e| e.to_string())?;
            let late = route_errors(&agents, &positions, range);
            let c = &out.report.counters;
            let violations: u64 = agents.iter().map(|a| a.stats().coverage_violations).sum();
            let selections: u64 = agents.iter().map(|a| a.stats().mpr_selections).sum();
            let ok = early == 0
                && late == 0
                && c.sent > 0
                && c.delivered == c.sent
                && violations == 0
                && (kind != ProtocolKind::Olsr || selections > 0);
            failed |= !ok;
            notes.push(format!(
                "{kind}-{mode}: {}/{} delivered, {early}+{late} off-path routes{}",
                c.delivered,
                c.sent,
                if kind == ProtocolKind::Olsr {
                    format!(", {selections} MPR selections, {violations} violations")
                } else {
                    String::new()
                }
            ));
        }
    }
    check(!failed, notes.join("; "), notes.join("; "))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn desk_rows() -> Result<(Vec<RunRow>, String), String> {
    if let Ok(path) = std::env::var("VANETLAB_DESK_RESULTS") {
        let rows = read_rows(Path::new(&path)).map_err(|e| e.to_string())?;
        return Ok((rows, format!("read from {path}")));
    }
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let started = Instant::now();
    let summary = run_matrix(&ScenarioConfig::desk_preset(), jobs, None).map_err(|e| e.to_string())?;
    if summary.failed > 0 {
        return Err(format!("{} desk runs failed", summary.failed));
    }
    Ok((summary.rows, format!("ran in {:.0} s", started.elapsed().as_secs_f64())))
}

struct Desk<'a>(&'a [RunRow]);

impl Desk<'_> {
    fn mean(&self, protocol: &str, mode: &str, keep: impl Fn(&RunRow) -> bool, metric: impl Fn(&RunRow) -> Option<f64>) -> f64 {
        mean(
            self.0
                .iter()
                .filter(|r| r.is_ok() && r.protocol == protocol && r.mode == mode && keep(r))
                .filter_map(metric),
        )
    }
}

fn throughput(r: &RunRow) -> Option<f64> {
    Some(r.throughput_kbps)
}

fn nrl(r: &RunRow) -> Option<f64> {
    r.nrl_defined.then_some(r.nrl)
}

fn delay(r: &RunRow) -> Option<f64> {
    r.e2ed_s
}

fn c8_dsr_throughput(desk: &Desk) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (label, keep) in [
        ("pause 0", Box::new(|r: &RunRow| r.pause_time == 0.0) as Box<dyn Fn(&RunRow) -> bool>),
        ("30 connections", Box::new(|r: &RunRow| r.connections == 30)),
    ] {
        let o = desk.mean("dsr", "orig", &keep, throughput);
        let m = desk.mean("dsr", "mod", &keep, throughput);
        ok &= m >= o;
        notes.push(format!("{label}: mod {m:.2} vs orig {o:.2} kbps"));
    }
    check(ok, notes.join("; "), notes.join("; "))
}

fn c9_link_state_load(desk: &Desk) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for protocol in ["fsr", "olsr"] {
        let o = desk.mean(protocol, "orig", |_| true, nrl);
        let m = desk.mean(protocol, "mod", |_| true, nrl);
        ok &= m > o;
        notes.push(format!("{protocol}: mod {m:.2} vs orig {o:.2}"));
    }
    check(ok, notes.join("; "), notes.join("; "))
}

fn c10_fsr_delay(desk: &Desk) -> Outcome {
    let o = desk.mean("fsr", "orig", |_| true, delay);
    let m = desk.mean("fsr", "mod", |_| true, delay);
    let detail = format!("mod {:.4} s vs orig {:.4} s", m, o);
    check(m < o, detail.clone(), detail)
}

fn unit_disk(positions: &[Position], range: f64) -> GraphSnapshot {
    let n = positions.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if positions[u].distance(&positions[v]) <= range {
                edges.push((u, v));
            }
        }
    }
    GraphSnapshot::new(n, edges).unwrap()
}

/// Runs `kind` over a script alternating between two placements at the
/// given change times; returns (control transmissions, triggered updates,
/// predicted FSR transmissions).
fn two_topology_run(kind: ProtocolKind, changes: &[f64], duration: f64) -> Result<(u64, u64, u64), String> {
    let a = line(6, 200.0);
    let b = grid(2, 3, 200.0);
    let range = ideal_radio().nominal_range;
    let graphs = [unit_disk(&a, range), unit_disk(&b, range)];
    let script: Vec<(SimTime, Vec<Position>)> = changes
        .iter()
        .enumerate()
        .map(|(i, &t)| (secs(t), if i % 2 == 0 { b.clone() } else { a.clone() }))
        .collect();

    let mut p = params(kind, Mode::Mod);
    p.common.forward_jitter = 0.0;
    let cfg = scripted_engine(a.clone(), script, duration, 3);
    let (out, agents) = Simulation::new(cfg, Vec::new(), agents(&p, 6))
        .and_then(|s| s.run())
        .map_err(|e| e.to_string())?;
    let triggered = agents.iter().map(|ag| ag.stats().triggered_updates).sum();

    // Update instants inside each topology phase times the flood reach in
    // that phase's graph.
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(changes);
    bounds.push(duration);
    let mut predicted = 0;
    for (phase, w) in bounds.windows(2).enumerate() {
        let graph = &graphs[phase % 2];
        for (interval, radius) in [(p.fsr.intra_interval, p.fsr.intra_radius), (p.fsr.inter_interval, p.fsr.inter_radius)] {
            let instants = update_instants(w[1], interval) - update_instants(w[0], interval);
            for src in 0..6 {
                predicted += instants * ring_cost(graph, src, radius).unwrap();
            }
        }
    }
    Ok((out.report.counters.control_total(), triggered, predicted))
}

fn c11_fsr_reactivity() -> Outcome {
    let duration = 30.5;
    let few = [10.5];
    let many = [5.5, 10.5, 15.5, 20.5, 25.5];
    let (fsr_few, trig_few, pred_few) = two_topology_run(ProtocolKind::Fsr, &few, duration)?;
    let (fsr_many, trig_many, pred_many) = two_topology_run(ProtocolKind::Fsr, &many, duration)?;
    let (_, olsr_few, _) = two_topology_run(ProtocolKind::Olsr, &few, duration)?;
    let (_, olsr_many, _) = two_topology_run(ProtocolKind::Olsr, &many, duration)?;
    let detail = format!(
        "FSR control {fsr_few}/{fsr_many} vs predicted {pred_few}/{pred_many}, triggered {trig_few}/{trig_many}; OLSR triggered TCs {olsr_few}/{olsr_many} for 1/5 changes"
    );
    let ok = fsr_few == pred_few && fsr_many == pred_many && trig_few == 0 && trig_many == 0 && olsr_many > olsr_few;
    check(ok, detail.clone(), detail)
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {detail}");
            }
        }
    };
    report(1, "MAC identity suite", c1_mac_identities());
    report(2, "MAC model vs Monte Carlo", c2_monte_carlo());
    report(3, "discovery cost vs flood oracle", c3_discovery_oracle());
    report(4, "cost and MAC hand values", c4_hand_checks());
    report(5, "determinism and run time", c5_determinism());
    report(6, "simulated MAC vs model", c6_mac_consistency());
    report(7, "static-topology routing", c7_static_routing());
    match desk_rows() {
        Ok((rows, origin)) => {
            println!("     desk matrix: {} rows, {origin}", rows.len());
            let desk = Desk(&rows);
            report(8, "DSR-mod throughput >= DSR-orig", c8_dsr_throughput(&desk));
            report(9, "FSR/OLSR-mod routing load > orig", c9_link_state_load(&desk));
            report(10, "FSR-mod delay < FSR-orig", c10_fsr_delay(&desk));
        }
        Err(e) => {
            for (id, name) in [
                (8, "DSR-mod throughput >= DSR-orig"),
                (9, "FSR/OLSR-mod routing load > orig"),
                (10, "FSR-mod delay < FSR-orig"),
            ] {
                report(id, name, Err(e.clone()));
            }
        }
    }
    report(11, "FSR control independent of topology changes", c11_fsr_reactivity());
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
