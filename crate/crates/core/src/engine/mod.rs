//! Deterministic discrete-event simulation core.
//!
//! A run is single threaded: one [`EventQueue`] drives random-waypoint
//! mobility, a slotted p-persistent CSMA/CA medium with per-receiver
//! collision detection and Nakagami fading, CBR traffic, and one
//! [`RoutingAgent`] per node.

pub mod frame;
pub mod mobility;
pub mod queue;
pub mod radio;
pub mod time;

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{domain, Error, Result};
use crate::traffic_metrics::{DropCause, Flow, MetricsCollector, MetricsReport, TRACE_HEADER};
use crate::NodeId;
use frame::{DataPacket, Dest, Frame, ACK_BYTES};
use mobility::{Arena, Position, Trajectory};
pub use queue::{Event, EventKind, EventQueue, TraceDigest, TxId};
use radio::{reception_probability, NakagamiProfile};
pub use time::SimTime;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    /// Distance at which the mean received power equals the threshold.
    pub nominal_range: f64,
    pub carrier_sense_range: f64,
    pub pathloss_exponent: f64,
    /// `(max distance, m)` fading shape breakpoints.
    pub shape_breakpoints: Vec<(f64, f64)>,
    /// Loss-free channel: deterministic reception inside `nominal_range`
    /// and no collision corruption. Contention and airtime still apply.
    pub ideal: bool,
}

impl Default for RadioConfig {
    fn default() -> Self {
        let profile = NakagamiProfile::default();
        RadioConfig {
            nominal_range: 250.0,
            carrier_sense_range: 550.0,
            pathloss_exponent: profile.pathloss_exponent,
            shape_breakpoints: profile.breakpoints,
            ideal: false,
        }
    }
}

impl RadioConfig {
    pub fn profile(&self) -> NakagamiProfile {
        let mut profile = NakagamiProfile::with_nominal_range(self.nominal_range);
        profile.pathloss_exponent = self.pathloss_exponent;
        profile.reference_power =
            (self.nominal_range / profile.reference_distance).powf(self.pathloss_exponent);
        profile.breakpoints = self.shape_breakpoints.clone();
        profile
    }
}

/// 802.11p 10 MHz timing at the 6 Mb/s base rate.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacConfig {
    pub slot: f64,
    pub difs: f64,
    pub sifs: f64,
    pub bitrate: f64,
    /// Mean contention window; the per-slot transmit probability is
    /// `2 / (cw + 1)`.
    pub contention_window: f64,
    pub retry_limit: u32,
    pub queue_capacity: usize,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            slot: 13e-6,
            difs: 58e-6,
            sifs: 32e-6,
            bitrate: 6e6,
            contention_window: 15.0,
            retry_limit: 4,
            queue_capacity: 50,
        }
    }
}

impl MacConfig {
    pub fn tx_probability(&self) -> Result<f64> {
        crate::mac_model::tx_probability_from_cw(self.contention_window)
    }

    pub fn airtime(&self, bytes: u32) -> SimTime {
        let ns = (f64::from(bytes) * 8.0 * 1e9 / self.bitrate).ceil();
        SimTime::from_nanos(ns as u64)
    }

    /// Medium occupancy of one transmission attempt.
    pub fn occupancy(&self, bytes: u32, unicast: bool) -> SimTime {
        let mut t = self.airtime(bytes);
        if unicast {
            t = t + SimTime::from_secs_f64(self.sifs) + self.airtime(ACK_BYTES);
        }
        t
    }

    /// Slots consumed by one busy period (occupancy plus DIFS, rounded up to
    /// the slot grid) for a frame of `bytes`.
    pub fn busy_slots(&self, bytes: u32, unicast: bool) -> u64 {
        let slot = SimTime::from_secs_f64(self.slot).as_nanos();
        let busy = self.occupancy(bytes, unicast).as_nanos() + SimTime::from_secs_f64(self.difs).as_nanos();
        busy.div_ceil(slot)
    }

    fn validate(&self) -> Result<()> {
        if !(self.slot > 0.0 && self.difs >= 0.0 && self.sifs >= 0.0 && self.bitrate > 0.0) {
            return domain("MAC timings must be positive");
        }
        if self.queue_capacity == 0 {
            return domain("MAC queue capacity must be >= 1");
        }
        self.tx_probability().map(|_| ())
    }
}

/// How nodes are placed and moved.
#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// Uniform initial positions and random-waypoint movement.
    RandomWaypoint { speed: f64, pause_time: f64 },
    /// Explicit positions with optional timed re-placements of every node.
    Scripted {
        initial: Vec<Position>,
        changes: Vec<(SimTime, Vec<Position>)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub arena: Arena,
    pub duration: SimTime,
    pub nodes: usize,
    pub placement: Placement,
    pub radio: RadioConfig,
    pub mac: MacConfig,
    pub seed: u64,
    pub sample_interval: SimTime,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return domain("need at least two nodes");
        }
        if self.duration == SimTime::ZERO {
            return domain("duration must be > 0");
        }
        if !(self.arena.width > 0.0 && self.arena.height > 0.0) {
            return domain("arena must have positive size");
        }
        if !(self.radio.nominal_range > 0.0 && self.radio.carrier_sense_range >= self.radio.nominal_range)
        {
            return domain("carrier-sense range must be >= nominal range > 0");
        }
        self.radio.profile().validate()?;
        self.mac.validate()?;
        if let Placement::Scripted { initial, changes } = &self.placement {
            if initial.len() != self.nodes || changes.iter().any(|(_, p)| p.len() != self.nodes) {
                return domain("scripted placements must list every node");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeKind {
    CarrierSense,
    NominalRx,
}

/// Verbosity of the tab-separated trace log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceLevel {
    /// Only the lines needed to recompute metrics.
    Metrics,
    /// Every processed event as well.
    Events,
}

pub struct TraceSink {
    out: Box<dyn Write + Send>,
    level: TraceLevel,
}

impl TraceSink {
    pub fn new(out: Box<dyn Write + Send>, level: TraceLevel) -> Self {
        TraceSink { out, level }
    }

    fn line(&mut self, time: SimTime, kind: &str, node: Option<NodeId>, detail: std::fmt::Arguments<'_>) {
        let node = node.map_or_else(|| "-".to_string(), |n| n.to_string());
        // Trace output is best effort; a failing sink must not abort the run.
        let _ = writeln!(self.out, "{time}\t{kind}\t{node}\t{detail}");
    }
}

/// Counters kept by the medium itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MediumStats {
    pub transmissions: u64,
    /// Groups of transmissions starting in the same slot.
    pub busy_periods: u64,
    /// Busy periods with two or more transmitters.
    pub collided_busy_periods: u64,
    /// Busy periods with exactly one transmitter.
    pub clean_busy_periods: u64,
    pub first_clean_start: Option<SimTime>,
    pub last_clean_start: Option<SimTime>,
    pub unicast_failures: u64,
    pub ttl_violations: u64,
    pub control_queue_drops: u64,
}

impl MediumStats {
    /// Mean spacing between single-transmitter busy periods; meaningful in
    /// a single carrier-sense neighborhood.
    pub fn mean_success_interval(&self) -> Option<f64> {
        let (first, last) = (self.first_clean_start?, self.last_clean_start?);
        (self.clean_busy_periods > 1)
            .then(|| (last - first).as_secs_f64() / (self.clean_busy_periods - 1) as f64)
    }

    pub fn collision_rate(&self) -> f64 {
        if self.busy_periods == 0 {
            0.0
        } else {
            self.collided_busy_periods as f64 / self.busy_periods as f64
        }
    }
}

/// Per-node routing logic driven by the engine.
pub trait RoutingAgent {
    fn start(&mut self, ctx: &mut Ctx<'_>);

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, token: u64);

    /// A CBR packet originates at this node.
    fn on_app_packet(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket);

    /// A broadcast frame, or a unicast frame addressed to this node, was
    /// received.
    fn on_receive(&mut self, ctx: &mut Ctx<'_>, frame: &Frame);

    /// A unicast frame addressed to another node was decoded.
    fn on_overhear(&mut self, _ctx: &mut Ctx<'_>, _frame: &Frame) {}

    /// A unicast frame exhausted its MAC retries.
    fn on_link_failure(&mut self, ctx: &mut Ctx<'_>, frame: Frame);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MacPhase {
    Idle,
    /// Holding a frame while the medium is sensed busy.
    WaitIdle,
    Backoff { generation: u64, at: SimTime },
    Transmitting(TxId),
}

struct MacNode {
    control: VecDeque<Frame>,
    data: VecDeque<Frame>,
    current: Option<(Frame, u32)>,
    phase: MacPhase,
    generation: u64,
    incoming: Vec<TxId>,
    idle_since: SimTime,
}

struct NodeRuntime {
    trajectory: Trajectory,
    script: VecDeque<(SimTime, Position)>,
    mac: MacNode,
    mobility_rng: ChaCha8Rng,
    mac_rng: ChaCha8Rng,
    radio_rng: ChaCha8Rng,
    protocol_rng: ChaCha8Rng,
}

struct Reception {
    node: NodeId,
    distance: f64,
    corrupted: bool,
}

struct Transmission {
    sender: NodeId,
    frame: Frame,
    receivers: Vec<Reception>,
}

const DEFERRED_SEND: u64 = 1 << 63;

/// Everything except the agents; handed to agents through [`Ctx`].
pub struct Core {
    cfg: EngineConfig,
    profile: NakagamiProfile,
    p_tx: f64,
    slot: SimTime,
    difs: SimTime,
    queue: EventQueue,
    nodes: Vec<NodeRuntime>,
    txs: BTreeMap<TxId, Transmission>,
    next_tx: TxId,
    last_busy_start: Option<(SimTime, u64)>,
    deferred: BTreeMap<u64, (NodeId, Frame)>,
    next_deferred: u64,
    flows: Vec<Flow>,
    next_packet: u64,
    metrics: MetricsCollector,
    stats: MediumStats,
    trace: Option<TraceSink>,
    digest: TraceDigest,
    error: Option<Error>,
}

fn substream(seed: u64, node: NodeId, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ node as u64);
    rng.set_stream(stream);
    rng
}

impl Core {
    fn new(cfg: EngineConfig, flows: Vec<Flow>) -> Result<Self> {
        cfg.validate()?;
        for f in &flows {
            if f.src >= cfg.nodes || f.dst >= cfg.nodes || f.src == f.dst {
                return domain(format!("flow {}->{} is invalid for {} nodes", f.src, f.dst, cfg.nodes));
            }
        }
        let mut nodes = Vec::with_capacity(cfg.nodes);
        for id in 0..cfg.nodes {
            let mut mobility_rng = substream(cfg.seed, id, 1);
            let (trajectory, script) = match &cfg.placement {
                Placement::RandomWaypoint { speed, pause_time } => {
                    let start = cfg.arena.sample(&mut mobility_rng);
                    let pause = SimTime::from_secs_f64(*pause_time);
                    (Trajectory::new(start, *speed, pause), VecDeque::new())
                }
                Placement::Scripted { initial, changes } => (
                    Trajectory::fixed(initial[id]),
                    changes.iter().map(|(t, p)| (*t, p[id])).collect(),
                ),
            };
            nodes.push(NodeRuntime {
                trajectory,
                script,
                mac: MacNode {
                    control: VecDeque::new(),
                    data: VecDeque::new(),
                    current: None,
                    phase: MacPhase::Idle,
                    generation: 0,
                    incoming: Vec::new(),
                    idle_since: SimTime::ZERO,
                },
                mobility_rng,
                mac_rng: substream(cfg.seed, id, 2),
                radio_rng: substream(cfg.seed, id, 3),
                protocol_rng: substream(cfg.seed, id, 4),
            });
        }
        Ok(Core {
            profile: cfg.radio.profile(),
            p_tx: cfg.mac.tx_probability()?,
            slot: SimTime::from_secs_f64(cfg.mac.slot),
            difs: SimTime::from_secs_f64(cfg.mac.difs),
            queue: EventQueue::new(),
            nodes,
            txs: BTreeMap::new(),
            next_tx: 0,
            last_busy_start: None,
            deferred: BTreeMap::new(),
            next_deferred: 0,
            flows,
            next_packet: 0,
            metrics: MetricsCollector::new(),
            stats: MediumStats::default(),
            trace: None,
            digest: TraceDigest::default(),
            error: None,
            cfg,
        })
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn position(&self, node: NodeId) -> Position {
        self.nodes[node].trajectory.position_at(self.now())
    }

    fn position_at(&self, node: NodeId, t: SimTime) -> Position {
        self.nodes[node].trajectory.position_at(t)
    }

    /// Nodes within the requested range of `node` at time `t` (which must
    /// not precede the current movement leg).
    pub fn neighbor_set(&self, node: NodeId, t: SimTime, range: RangeKind) -> Vec<NodeId> {
        let radius = match range {
            RangeKind::CarrierSense => self.cfg.radio.carrier_sense_range,
            RangeKind::NominalRx => self.cfg.radio.nominal_range,
        };
        let here = self.position_at(node, t);
        (0..self.nodes.len())
            .filter(|&v| v != node && self.position_at(v, t).distance(&here) <= radius)
            .collect()
    }

    /// Queued control and data frames at `node`, excluding the frame in
    /// service.
    pub fn queue_lengths(&self, node: NodeId) -> (usize, usize) {
        let mac = &self.nodes[node].mac;
        (mac.control.len(), mac.data.len())
    }

    pub fn medium_stats(&self) -> &MediumStats {
        &self.stats
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        if let Err(e) = self.queue.schedule(time, kind) {
            self.error.get_or_insert(e);
        }
    }

    fn trace_metric(&mut self, kind: &str, node: NodeId, detail: std::fmt::Arguments<'_>) {
        let now = self.now();
        if let Some(trace) = self.trace.as_mut() {
            trace.line(now, kind, Some(node), detail);
        }
    }

    fn record_drop(&mut self, node: NodeId, packet: &DataPacket, cause: DropCause) {
        if self.metrics.record_drop(packet.id, cause) {
            self.trace_metric("drop", node, format_args!("pkt={} cause={cause}", packet.id));
        }
    }

    fn record_delivery(&mut self, node: NodeId, packet: &DataPacket) {
        match self.metrics.record_delivery(packet.id, self.now()) {
            Ok(true) => self.trace_metric("app-recv", node, format_args!("pkt={}", packet.id)),
            Ok(false) => {}
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
    }

    fn enqueue(&mut self, node: NodeId, frame: Frame) {
        let capacity = self.cfg.mac.queue_capacity;
        let mac = &mut self.nodes[node].mac;
        let queue = if frame.kind().is_control() { &mut mac.control } else { &mut mac.data };
        if queue.len() >= capacity {
            match frame.data() {
                Some(packet) => {
                    let packet = packet.clone();
                    self.record_drop(node, &packet, DropCause::QueueOverflow);
                }
                None => self.stats.control_queue_drops += 1,
            }
            return;
        }
        queue.push_back(frame);
        if self.nodes[node].mac.current.is_none() {
            self.load_next(node);
        }
    }

    /// Takes the next queued frame, control first, and starts contending.
    fn load_next(&mut self, node: NodeId) {
        let mac = &mut self.nodes[node].mac;
        let next = mac.control.pop_front().or_else(|| mac.data.pop_front());
        match next {
            Some(frame) => {
                mac.current = Some((frame, 0));
                self.contend(node);
            }
            None => {
                mac.current = None;
                mac.phase = MacPhase::Idle;
            }
        }
    }

    fn contend(&mut self, node: NodeId) {
        if self.nodes[node].mac.incoming.is_empty() {
            self.schedule_attempt(node);
        } else {
            self.nodes[node].mac.phase = MacPhase::WaitIdle;
        }
    }

    /// Draws a geometric number of idle slots, counted after DIFS.
    fn schedule_attempt(&mut self, node: NodeId) {
        let now = self.now();
        let p = self.p_tx;
        let (slot, difs) = (self.slot, self.difs);
        let runtime = &mut self.nodes[node];
        let earliest = (runtime.mac.idle_since + difs).max(now);
        let first = earliest.ceil_to(slot);
        let extra_slots = if p >= 1.0 {
            0
        } else {
            let u: f64 = 1.0 - runtime.mac_rng.random::<f64>();
            (u.ln() / (1.0 - p).ln()).floor() as u64
        };
        let at = first + SimTime::from_nanos(extra_slots * slot.as_nanos());
        runtime.mac.generation += 1;
        let generation = runtime.mac.generation;
        runtime.mac.phase = MacPhase::Backoff { generation, at };
        self.schedule(at, EventKind::MacSlot { node, generation });
    }

    fn on_mac_slot(&mut self, node: NodeId, generation: u64) {
        match self.nodes[node].mac.phase {
            MacPhase::Backoff { generation: g, .. } if g == generation => self.start_transmission(node),
            _ => {}
        }
    }

    fn start_transmission(&mut self, sender: NodeId) {
        let now = self.now();
        let Some((frame, attempts)) = self.nodes[sender].mac.current.clone() else {
            return;
        };
        let unicast = matches!(frame.dst, Dest::Unicast(_));
        if attempts == 0 {
            if frame.hops > frame.initial_ttl {
                self.stats.ttl_violations += 1;
            }
            let kind = frame.kind();
            if kind.is_control() {
                self.metrics.record_control(kind);
                self.trace_metric("ctrl-tx", sender, format_args!("kind={kind}"));
            }
        }
        self.stats.transmissions += 1;
        match self.last_busy_start {
            Some((t, count)) if t == now => self.last_busy_start = Some((t, count + 1)),
            _ => {
                self.close_busy_period();
                self.stats.busy_periods += 1;
                self.last_busy_start = Some((now, 1));
            }
        }

        let id = self.next_tx;
        self.next_tx += 1;
        let ideal = self.cfg.radio.ideal;
        let here = self.position(sender);
        let cs_range = self.cfg.radio.carrier_sense_range;
        let mut receivers = Vec::new();
        for r in 0..self.nodes.len() {
            if r == sender {
                continue;
            }
            let distance = self.position(r).distance(&here);
            if distance > cs_range {
                continue;
            }
            let mut corrupted = false;
            if !ideal {
                if matches!(self.nodes[r].mac.phase, MacPhase::Transmitting(_)) {
                    corrupted = true;
                }
                if !self.nodes[r].mac.incoming.is_empty() {
                    corrupted = true;
                    let overlapping = self.nodes[r].mac.incoming.clone();
                    for other in overlapping {
                        self.corrupt(other, r);
                    }
                }
            }
            let mac = &mut self.nodes[r].mac;
            mac.incoming.push(id);
            if mac.incoming.len() == 1 {
                if let MacPhase::Backoff { at, .. } = mac.phase {
                    // Same-slot starters cannot hear each other.
                    if at != now {
                        mac.generation += 1;
                        mac.phase = MacPhase::WaitIdle;
                    }
                }
            }
            receivers.push(Reception {
                node: r,
                distance,
                corrupted,
            });
        }
        if !ideal {
            let own = self.nodes[sender].mac.incoming.clone();
            for other in own {
                self.corrupt(other, sender);
            }
        }
        let end = now + self.cfg.mac.occupancy(frame.size(), unicast);
        self.nodes[sender].mac.phase = MacPhase::Transmitting(id);
        self.txs.insert(
            id,
            Transmission {
                sender,
                frame,
                receivers,
            },
        );
        self.schedule(end, EventKind::FrameDelivery { tx: id });
    }

    fn close_busy_period(&mut self) {
        if let Some((t, count)) = self.last_busy_start.take() {
            if count == 1 {
                self.stats.clean_busy_periods += 1;
                self.stats.first_clean_start.get_or_insert(t);
                self.stats.last_clean_start = Some(t);
            } else {
                self.stats.collided_busy_periods += 1;
            }
        }
    }

    fn corrupt(&mut self, tx: TxId, at: NodeId) {
        if let Some(t) = self.txs.get_mut(&tx) {
            if let Some(rx) = t.receivers.iter_mut().find(|rx| rx.node == at) {
                rx.corrupted = true;
            }
        }
    }

    /// Ends a transmission; returns successful receivers and a failed
    /// unicast frame to hand back to the sender's agent.
    fn end_transmission(&mut self, id: TxId) -> (Transmission, Vec<NodeId>, Option<Frame>) {
        let now = self.now();
        let tx = self.txs.remove(&id).expect("delivery event for a live transmission");
        let ideal = self.cfg.radio.ideal;
        let nominal = self.cfg.radio.nominal_range;
        let mut received = Vec::new();
        for rx in &tx.receivers {
            let node = &mut self.nodes[rx.node];
            node.mac.incoming.retain(|&t| t != id);
            let ok = if ideal {
                rx.distance <= nominal
            } else if rx.corrupted {
                false
            } else {
                let p = reception_probability(rx.distance.max(1e-3), &self.profile).unwrap_or(0.0);
                node.radio_rng.random_bool(p)
            };
            if ok {
                received.push(rx.node);
            }
        }
        for rx in &tx.receivers {
            let mac = &mut self.nodes[rx.node].mac;
            if mac.incoming.is_empty() && !matches!(mac.phase, MacPhase::Transmitting(_)) {
                mac.idle_since = now;
                if mac.phase == MacPhase::WaitIdle {
                    self.schedule_attempt(rx.node);
                }
            }
        }

        let sender = tx.sender;
        let mut failed = None;
        let retry_limit = self.cfg.mac.retry_limit;
        let mac = &mut self.nodes[sender].mac;
        mac.idle_since = now;
        let finished = match tx.frame.dst {
            Dest::Broadcast => true,
            Dest::Unicast(to) => {
                if received.contains(&to) {
                    true
                } else {
                    let (_, attempts) = mac.current.as_mut().expect("sender holds its frame");
                    *attempts += 1;
                    if *attempts > retry_limit {
                        self.stats.unicast_failures += 1;
                        failed = Some(tx.frame.clone());
                        true
                    } else {
                        false
                    }
                }
            }
        };
        if finished {
            self.load_next(sender);
        } else {
            self.contend(sender);
        }
        (tx, received, failed)
    }

    fn start_flow_packet(&mut self, flow: usize) -> Option<(NodeId, DataPacket)> {
        let now = self.now();
        let f = &self.flows[flow];
        if now > f.stop {
            return None;
        }
        let packet = DataPacket {
            id: self.next_packet,
            flow,
            origin: f.src,
            target: f.dst,
            created_at: now,
            payload_bytes: f.packet_size,
            salvaged: 0,
        };
        let src = f.src;
        let next = now + f.interval();
        if next <= f.stop {
            self.schedule(next, EventKind::TrafficTick { flow });
        }
        self.next_packet += 1;
        self.metrics.record_send(packet.id, now);
        self.trace_metric("app-send", src, format_args!("pkt={}", packet.id));
        Some((src, packet))
    }

    fn on_mobility(&mut self, node: NodeId) {
        let now = self.now();
        let runtime = &mut self.nodes[node];
        while runtime.script.front().is_some_and(|(t, _)| *t <= now) {
            let (_, to) = runtime.script.pop_front().unwrap();
            runtime.trajectory.teleport(to);
        }
        runtime.trajectory.advance(now, &self.cfg.arena, &mut runtime.mobility_rng);
        self.schedule_mobility(node);
    }

    fn schedule_mobility(&mut self, node: NodeId) {
        let runtime = &self.nodes[node];
        let next = [runtime.trajectory.next_change(), runtime.script.front().map(|(t, _)| *t)]
            .into_iter()
            .flatten()
            .min();
        if let Some(t) = next {
            if t <= self.cfg.duration {
                self.schedule(t.max(self.now()), EventKind::MobilityUpdate { node });
            }
        }
    }
}

/// Handle given to an agent while it runs.
pub struct Ctx<'a> {
    core: &'a mut Core,
    node: NodeId,
}

impl Ctx<'_> {
    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn now(&self) -> SimTime {
        self.core.now()
    }

    pub fn end_time(&self) -> SimTime {
        self.core.cfg.duration
    }

    pub fn node_count(&self) -> usize {
        self.core.nodes.len()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.core.nodes[self.node].protocol_rng
    }

    /// Hands a frame to this node's MAC queue.
    pub fn send(&mut self, frame: Frame) {
        self.core.enqueue(self.node, frame);
    }

    /// Hands a frame to the MAC after `delay`.
    pub fn send_after(&mut self, delay: SimTime, frame: Frame) {
        if delay == SimTime::ZERO {
            return self.send(frame);
        }
        let token = DEFERRED_SEND | self.core.next_deferred;
        self.core.next_deferred += 1;
        self.core.deferred.insert(token, (self.node, frame));
        let at = self.now() + delay;
        self.core.schedule(at, EventKind::ProtocolTimer { node: self.node, token });
    }

    /// Schedules `on_timer(token)`; tokens must stay below `1 << 63`.
    pub fn set_timer(&mut self, delay: SimTime, token: u64) {
        debug_assert_eq!(token & DEFERRED_SEND, 0);
        let at = self.now() + delay;
        self.core.schedule(at, EventKind::ProtocolTimer { node: self.node, token });
    }

    /// Removes the queued data frames addressed to `next_hop`, leaving the
    /// frame in service alone.
    pub fn take_queued_to(&mut self, next_hop: NodeId) -> Vec<Frame> {
        let queue = &mut self.core.nodes[self.node].mac.data;
        let (taken, kept): (VecDeque<Frame>, VecDeque<Frame>) =
            std::mem::take(queue).into_iter().partition(|f| f.dst == Dest::Unicast(next_hop));
        *queue = kept;
        taken.into()
    }

    /// The packet reached its target application.
    pub fn deliver(&mut self, packet: &DataPacket) {
        self.core.record_delivery(self.node, packet);
    }

    pub fn drop_packet(&mut self, packet: &DataPacket, cause: DropCause) {
        self.core.record_drop(self.node, packet, cause);
    }

    pub fn is_live(&self, packet: &DataPacket) -> bool {
        self.core.metrics.is_live(packet.id)
    }

    pub fn position(&self, node: NodeId) -> Position {
        self.core.position(node)
    }
}

/// Result of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub medium: MediumStats,
    pub digest: u64,
    pub events: u64,
}

pub struct Simulation<A> {
    core: Core,
    agents: Vec<A>,
    events: u64,
    started: bool,
}

impl<A: RoutingAgent> Simulation<A> {
    pub fn new(cfg: EngineConfig, flows: Vec<Flow>, agents: Vec<A>) -> Result<Self> {
        if agents.len() != cfg.nodes {
            return domain(format!("{} agents for {} nodes", agents.len(), cfg.nodes));
        }
        Ok(Simulation {
            core: Core::new(cfg, flows)?,
            agents,
            events: 0,
            started: false,
        })
    }

    pub fn with_trace(mut self, sink: TraceSink) -> Self {
        self.core.trace = Some(sink);
        self
    }

    pub fn core(&self) -> &Core {
        &self.core
    }

    pub fn agents(&self) -> &[A] {
        &self.agents
    }

    fn dispatch<R>(&mut self, node: NodeId, f: impl FnOnce(&mut A, &mut Ctx<'_>) -> R) -> R {
        let mut ctx = Ctx {
            core: &mut self.core,
            node,
        };
        f(&mut self.agents[node], &mut ctx)
    }

    fn start(&mut self) {
        if self.started {
            return;
        }
        self.started = true;
        let duration = self.core.cfg.duration;
        let packet_size = self.core.flows.first().map_or(512, |f| f.packet_size);
        if let Some(trace) = self.core.trace.as_mut() {
            let _ = writeln!(
                trace.out,
                "{TRACE_HEADER} duration_ns={} packet_bytes={packet_size}",
                duration.as_nanos()
            );
        }
        for node in 0..self.core.nodes.len() {
            self.core.schedule_mobility(node);
        }
        for flow in 0..self.core.flows.len() {
            let start = self.core.flows[flow].start;
            self.core.schedule(start, EventKind::TrafficTick { flow });
        }
        let sample = self.core.cfg.sample_interval;
        if sample > SimTime::ZERO {
            self.core.schedule(sample, EventKind::MetricsSample);
        }
        for node in 0..self.agents.len() {
            self.dispatch(node, |agent, ctx| agent.start(ctx));
        }
    }

    /// Processes events up to and including `until` (capped at the run
    /// duration).
    pub fn run_until(&mut self, until: SimTime) -> Result<()> {
        self.start();
        let until = until.min(self.core.cfg.duration);
        while let Some(t) = self.core.queue.peek_time() {
            if t > until {
                break;
            }
            let event = self.core.queue.next_event().expect("peeked event");
            self.events += 1;
            self.core.digest.absorb(&event);
            if let Some(trace) = self.core.trace.as_mut() {
                if trace.level >= TraceLevel::Events {
                    trace.line(event.time, event.kind.label(), event.kind.node(), format_args!("{:?}", event.kind));
                }
            }
            self.handle(event.kind);
            if let Some(e) = self.core.error.take() {
                return Err(e);
            }
        }
        Ok(())
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::MobilityUpdate { node } => self.core.on_mobility(node),
            EventKind::MacSlot { node, generation } => self.core.on_mac_slot(node, generation),
            EventKind::FrameDelivery { tx } => {
                let (tx, received, failed) = self.core.end_transmission(tx);
                for node in received {
                    let addressed = match tx.frame.dst {
                        Dest::Broadcast => true,
                        Dest::Unicast(to) => to == node,
                    };
                    self.dispatch(node, |agent, ctx| {
                        if addressed {
                            agent.on_receive(ctx, &tx.frame)
                        } else {
                            agent.on_overhear(ctx, &tx.frame)
                        }
                    });
                }
                if let Some(frame) = failed {
                    self.dispatch(tx.sender, |agent, ctx| agent.on_link_failure(ctx, frame));
                }
            }
            EventKind::ProtocolTimer { node, token } => {
                if token & DEFERRED_SEND != 0 {
                    if let Some((owner, frame)) = self.core.deferred.remove(&token) {
                        self.core.enqueue(owner, frame);
                    }
                } else {
                    self.dispatch(node, |agent, ctx| agent.on_timer(ctx, token));
                }
            }
            EventKind::TrafficTick { flow } => {
                if let Some((src, packet)) = self.core.start_flow_packet(flow) {
                    self.dispatch(src, |agent, ctx| agent.on_app_packet(ctx, packet));
                }
            }
            EventKind::MetricsSample => {
                let now = self.core.now();
                let c = self.core.metrics.counters();
                if let Some(trace) = self.core.trace.as_mut() {
                    trace.line(
                        now,
                        "sample",
                        None,
                        format_args!("sent={} delivered={} control={}", c.sent, c.delivered, c.control_total()),
                    );
                }
                let next = now + self.core.cfg.sample_interval;
                if next <= self.core.cfg.duration {
                    self.core.schedule(next, EventKind::MetricsSample);
                }
            }
        }
    }

    pub fn run(mut self) -> Result<(RunOutcome, Vec<A>)> {
        let end = self.core.cfg.duration;
        self.run_until(end)?;
        if let Some(trace) = self.core.trace.as_mut() {
            let _ = trace.out.flush();
        }
        self.core.close_busy_period();
        let packet_size = self.core.flows.first().map_or(512, |f| f.packet_size);
        let outcome = RunOutcome {
            report: self.core.metrics.report(end, packet_size),
            medium: self.core.stats,
            digest: self.core.digest.value(),
            events: self.events,
        };
        Ok((outcome, self.agents))
    }
}
