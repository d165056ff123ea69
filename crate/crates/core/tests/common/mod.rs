#![allow(dead_code)]

use vanet_core::engine::frame::{DataPacket, Dest, Frame, Payload};
use vanet_core::engine::mobility::{Arena, Position};
use vanet_core::engine::{Ctx, EngineConfig, MacConfig, Placement, RadioConfig, RoutingAgent};
use vanet_core::protocols::{Agent, Mode, ProtocolKind, ProtocolParams};
use vanet_core::{Flow, NodeId, SimTime};

pub fn secs(s: f64) -> SimTime {
    SimTime::from_secs_f64(s)
}

pub fn line(n: usize, spacing: f64) -> Vec<Position> {
    (0..n).map(|i| Position::new(100.0 + i as f64 * spacing, 500.0)).collect()
}

pub fn grid(rows: usize, cols: usize, spacing: f64) -> Vec<Position> {
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            out.push(Position::new(100.0 + c as f64 * spacing, 100.0 + r as f64 * spacing));
        }
    }
    out
}

pub fn ideal_radio() -> RadioConfig {
    RadioConfig {
        ideal: true,
        ..RadioConfig::default()
    }
}

/// Static placement, loss-free channel, large arena.
pub fn static_engine(positions: Vec<Position>, duration: f64, seed: u64) -> EngineConfig {
    scripted_engine(positions, Vec::new(), duration, seed)
}

pub fn scripted_engine(
    initial: Vec<Position>,
    changes: Vec<(SimTime, Vec<Position>)>,
    duration: f64,
    seed: u64,
) -> EngineConfig {
    EngineConfig {
        arena: Arena {
            width: 5000.0,
            height: 5000.0,
        },
        duration: secs(duration),
        nodes: initial.len(),
        placement: Placement::Scripted { initial, changes },
        radio: ideal_radio(),
        mac: MacConfig::default(),
        seed,
        sample_interval: SimTime::ZERO,
    }
}

pub fn flow(src: NodeId, dst: NodeId, start: f64, stop: f64, rate: f64) -> Flow {
    Flow {
        src,
        dst,
        packet_size: 512,
        rate,
        start: secs(start),
        stop: secs(stop),
    }
}

/// Protocol parameters with timer jitter removed.
pub fn params(kind: ProtocolKind, mode: Mode) -> ProtocolParams {
    let mut p = ProtocolParams::new(kind, mode);
    p.common.timer_jitter = 0.0;
    p
}

pub fn agents(params: &ProtocolParams, n: usize) -> Vec<Agent> {
    vanet_core::protocols::build_agents(params, n)
}

/// Sends each application packet straight to its target, one hop.
#[derive(Default)]
pub struct Direct {
    pub received: Vec<u64>,
    pub failures: usize,
}

impl RoutingAgent for Direct {
    fn start(&mut self, _ctx: &mut Ctx<'_>) {}

    fn on_timer(&mut self, _ctx: &mut Ctx<'_>, _token: u64) {}

    fn on_app_packet(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket) {
        let dst = packet.target;
        ctx.send(Frame::new(ctx.node(), Dest::Unicast(dst), 1, ctx.now(), Payload::Data(packet)));
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        if let Some(p) = frame.data() {
            self.received.push(p.id);
            ctx.deliver(p);
        }
    }

    fn on_link_failure(&mut self, ctx: &mut Ctx<'_>, frame: Frame) {
        self.failures += 1;
        if let Some(p) = frame.data() {
            ctx.drop_packet(p, vanet_core::traffic_metrics::DropCause::LinkBreak);
        }
    }
}

/// Queues `frames` broadcast frames at start, keeping the node backlogged.
pub struct Saturator {
    pub frames: usize,
    pub payload: u32,
    pub heard: usize,
}

impl Saturator {
    pub fn new(frames: usize, payload: u32) -> Self {
        Saturator {
            frames,
            payload,
            heard: 0,
        }
    }
}

impl RoutingAgent for Saturator {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        for i in 0..self.frames {
            let packet = DataPacket {
                id: (ctx.node() as u64) << 32 | i as u64,
                flow: 0,
                origin: ctx.node(),
                target: ctx.node(),
                created_at: ctx.now(),
                payload_bytes: self.payload,
                salvaged: 0,
            };
            ctx.send(Frame::new(ctx.node(), Dest::Broadcast, 1, ctx.now(), Payload::Data(packet)));
        }
    }

    fn on_timer(&mut self, _ctx: &mut Ctx<'_>, _token: u64) {}

    fn on_app_packet(&mut self, _ctx: &mut Ctx<'_>, _packet: DataPacket) {}

    fn on_receive(&mut self, _ctx: &mut Ctx<'_>, _frame: &Frame) {
        self.heard += 1;
    }

    fn on_link_failure(&mut self, _ctx: &mut Ctx<'_>, _frame: Frame) {}
}

/// BFS hop distances on the unit-disk graph of `positions`.
pub fn disk_distances(positions: &[Position], range: f64, src: NodeId) -> Vec<Option<u32>> {
    let n = positions.len();
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if dist[v].is_none() && v != u && positions[u].distance(&positions[v]) <= range {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
