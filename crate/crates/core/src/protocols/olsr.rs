//! Optimized link state routing: HELLO-based neighbor sensing, greedy MPR
//! selection, and TC flooding through MPRs.

use std::collections::{BTreeMap, BTreeSet};

use super::buffer::SendBuffer;
use super::linkstate::{HopByHop, LinkGraph};
use super::params::{CommonParams, OlsrParams, ProtocolParams};
use super::{forward_delay, jittered, AgentStats};
use crate::engine::frame::{DataPacket, Dest, Frame, LinkCode, Payload};
use crate::engine::{Ctx, RoutingAgent, SimTime};
use crate::NodeId;

const HELLO_TIMER: u64 = 1;
const TC_TIMER: u64 = 2;
const TRIGGERED_TC_TIMER: u64 = 3;
const SWEEP_TIMER: u64 = 4;
const SWEEP_PERIOD: f64 = 0.5;
const TC_TTL: u32 = 255;

/// Greedy MPR selection over `one_hop`, which maps each symmetric neighbor
/// to its own symmetric neighbors.
///
/// Neighbors that are the only cover of some strict two-hop node are taken
/// first; then the neighbor covering the most still-uncovered nodes is
/// added until everything is covered, ties going to the smaller id.
pub fn select_mprs(me: NodeId, one_hop: &BTreeMap<NodeId, BTreeSet<NodeId>>) -> BTreeSet<NodeId> {
    let two_hop = strict_two_hop(me, one_hop);
    let mut mprs = BTreeSet::new();
    for t in &two_hop {
        let mut covers = one_hop.iter().filter(|(_, reach)| reach.contains(t));
        if let (Some((&only, _)), None) = (covers.next(), covers.next()) {
            mprs.insert(only);
        }
    }
    let mut uncovered: BTreeSet<NodeId> = two_hop
        .iter()
        .filter(|t| !mprs.iter().any(|m| one_hop[m].contains(t)))
        .copied()
        .collect();
    while !uncovered.is_empty() {
        let best = one_hop
            .iter()
            .filter(|(n, _)| !mprs.contains(*n))
            .map(|(&n, reach)| (reach.intersection(&uncovered).count(), n))
            .filter(|&(c, _)| c > 0)
            // Max coverage, then smallest id.
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let Some((_, n)) = best else { break };
        mprs.insert(n);
        uncovered.retain(|t| !one_hop[&n].contains(t));
    }
    mprs
}

/// Nodes two hops away that are neither `me` nor one-hop neighbors.
pub fn strict_two_hop(me: NodeId, one_hop: &BTreeMap<NodeId, BTreeSet<NodeId>>) -> BTreeSet<NodeId> {
    one_hop
        .values()
        .flatten()
        .filter(|&&t| t != me && !one_hop.contains_key(&t))
        .copied()
        .collect()
}

pub fn covers_two_hop(me: NodeId, one_hop: &BTreeMap<NodeId, BTreeSet<NodeId>>, mprs: &BTreeSet<NodeId>) -> bool {
    mprs.iter().all(|m| one_hop.contains_key(m))
        && strict_two_hop(me, one_hop)
            .iter()
            .all(|t| mprs.iter().any(|m| one_hop[m].contains(t)))
}

#[derive(Debug, Clone)]
struct Neighbor {
    last_heard: SimTime,
    sym: bool,
    /// The neighbor's own symmetric neighbors.
    reach: BTreeSet<NodeId>,
}

#[derive(Debug, Clone)]
struct Topology {
    ansn: u64,
    selectors: Vec<NodeId>,
    updated_at: SimTime,
}

pub struct Olsr {
    id: NodeId,
    params: OlsrParams,
    common: CommonParams,
    neighbors: BTreeMap<NodeId, Neighbor>,
    mprs: BTreeSet<NodeId>,
    selectors: BTreeMap<NodeId, SimTime>,
    topology: BTreeMap<NodeId, Topology>,
    seen_tc: BTreeSet<(NodeId, u64)>,
    tc_seqno: u64,
    ansn: u64,
    last_tc: Option<SimTime>,
    triggered_pending: bool,
    advertised_any: bool,
    forwarding: HopByHop,
    stats: AgentStats,
}

impl Olsr {
    pub fn new(id: NodeId, params: &ProtocolParams) -> Self {
        let common = params.common.clone();
        Olsr {
            id,
            params: params.olsr.clone(),
            neighbors: BTreeMap::new(),
            mprs: BTreeSet::new(),
            selectors: BTreeMap::new(),
            topology: BTreeMap::new(),
            seen_tc: BTreeSet::new(),
            tc_seqno: 0,
            ansn: 0,
            last_tc: None,
            triggered_pending: false,
            advertised_any: false,
            forwarding: HopByHop::new(SendBuffer::new(
                common.send_buffer_capacity,
                SimTime::from_secs_f64(common.send_buffer_timeout),
            )),
            stats: AgentStats::default(),
            common,
        }
    }

    pub fn forwarding(&self) -> &HopByHop {
        &self.forwarding
    }

    pub fn mprs(&self) -> &BTreeSet<NodeId> {
        &self.mprs
    }

    pub fn mpr_selectors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.selectors.keys().copied()
    }

    pub fn stats(&self) -> AgentStats {
        self.stats
    }

    /// Symmetric neighbors with their advertised reach.
    pub fn one_hop(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        self.neighbors
            .iter()
            .filter(|(_, n)| n.sym)
            .map(|(&id, n)| (id, n.reach.clone()))
            .collect()
    }

    fn hold(&self, interval: f64) -> SimTime {
        SimTime::from_secs_f64(self.common.hold_factor * interval)
    }

    fn reselect(&mut self) {
        let one_hop = self.one_hop();
        let mprs = select_mprs(self.id, &one_hop);
        self.stats.mpr_selections += 1;
        if !covers_two_hop(self.id, &one_hop, &mprs) {
            self.stats.coverage_violations += 1;
        }
        self.mprs = mprs;
    }

    /// Current route table, computed on demand if the link state changed
    /// since the last refresh.
    pub fn next_hop(&self, dst: NodeId) -> Option<NodeId> {
        if self.forwarding.is_stale() {
            self.compute_routes().get(&dst).map(|&(n, _)| n)
        } else {
            self.forwarding.next_hop(dst)
        }
    }

    fn compute_routes(&self) -> BTreeMap<NodeId, (NodeId, u32)> {
        let mut graph = LinkGraph::default();
        for (&n, info) in self.neighbors.iter().filter(|(_, n)| n.sym) {
            graph.link(self.id, n);
            for &t in &info.reach {
                graph.link(n, t);
            }
        }
        for (&origin, t) in &self.topology {
            for &s in &t.selectors {
                graph.link(origin, s);
            }
        }
        graph.next_hops(self.id)
    }

    fn refresh(&mut self, ctx: &mut Ctx<'_>) {
        if self.forwarding.is_stale() {
            let routes = self.compute_routes();
            self.forwarding.set_routes(ctx, routes);
        }
    }

    fn recompute_routes(&mut self, ctx: &mut Ctx<'_>) {
        self.forwarding.invalidate();
        if self.forwarding.needs_eager_refresh() {
            self.refresh(ctx);
        }
    }

    fn send_hello(&mut self, ctx: &mut Ctx<'_>) {
        let links = self
            .neighbors
            .iter()
            .map(|(&n, info)| {
                let code = if self.mprs.contains(&n) {
                    LinkCode::Mpr
                } else if info.sym {
                    LinkCode::Sym
                } else {
                    LinkCode::Asym
                };
                (n, code)
            })
            .collect();
        let frame = Frame::new(self.id, Dest::Broadcast, 1, ctx.now(), Payload::Hello { links });
        self.stats.periodic_updates += 1;
        ctx.send(frame);
    }

    fn send_tc(&mut self, ctx: &mut Ctx<'_>) {
        self.tc_seqno += 1;
        self.last_tc = Some(ctx.now());
        self.seen_tc.insert((self.id, self.tc_seqno));
        let selectors: Vec<NodeId> = self.selectors.keys().copied().collect();
        self.advertised_any = !selectors.is_empty();
        let payload = Payload::Tc {
            origin: self.id,
            ansn: self.ansn,
            selectors,
        };
        let frame = Frame::new(self.id, Dest::Broadcast, TC_TTL, ctx.now(), payload).with_seqno(self.tc_seqno);
        ctx.send(frame);
    }

    /// Reacts to a change of this node's MPR-selector set.
    fn selectors_changed(&mut self, ctx: &mut Ctx<'_>) {
        self.ansn += 1;
        if self.selectors.is_empty() && !self.advertised_any {
            return;
        }
        if self.triggered_pending {
            return;
        }
        let gap = SimTime::from_secs_f64(self.params.min_triggered_gap);
        let now = ctx.now();
        match self.last_tc {
            Some(last) if now.saturating_sub(last) < gap => {
                self.triggered_pending = true;
                ctx.set_timer((last + gap) - now, TRIGGERED_TC_TIMER);
            }
            _ => {
                self.stats.triggered_updates += 1;
                self.send_tc(ctx);
            }
        }
    }

    fn sweep(&mut self, ctx: &mut Ctx<'_>) {
        let now = ctx.now();
        let nbr_life = self.hold(self.params.hello_interval);
        let topo_life = self.hold(self.params.tc_interval);
        let before = self.neighbors.len();
        self.neighbors.retain(|_, n| now.saturating_sub(n.last_heard) <= nbr_life);
        let lost_neighbor = before != self.neighbors.len();
        let selectors_before = self.selectors.len();
        self.selectors.retain(|_, &mut heard| now.saturating_sub(heard) <= nbr_life);
        let lost_selector = selectors_before != self.selectors.len();
        let topo_before = self.topology.len();
        self.topology.retain(|_, t| now.saturating_sub(t.updated_at) <= topo_life);
        if lost_neighbor {
            self.reselect();
        }
        if lost_selector {
            self.selectors_changed(ctx);
        }
        if lost_neighbor || topo_before != self.topology.len() {
            self.recompute_routes(ctx);
        }
        self.forwarding.expire(ctx, now);
    }

    fn on_hello(&mut self, ctx: &mut Ctx<'_>, from: NodeId, links: &[(NodeId, LinkCode)]) {
        let now = ctx.now();
        let my_code = links.iter().find(|(n, _)| *n == self.id).map(|&(_, c)| c);
        let reach: BTreeSet<NodeId> = links
            .iter()
            .filter(|&&(n, c)| n != self.id && c != LinkCode::Asym)
            .map(|&(n, _)| n)
            .collect();
        let sym = my_code.is_some();
        let entry = self.neighbors.entry(from).or_insert(Neighbor {
            last_heard: now,
            sym: false,
            reach: BTreeSet::new(),
        });
        let topology_changed = entry.sym != sym || (sym && entry.reach != reach);
        entry.last_heard = now;
        entry.sym = sym;
        entry.reach = reach;

        let selected = my_code == Some(LinkCode::Mpr);
        let selector_change = if selected {
            self.selectors.insert(from, now).is_none()
        } else {
            self.selectors.remove(&from).is_some()
        };
        if topology_changed {
            self.reselect();
            self.recompute_routes(ctx);
        }
        if selector_change {
            self.selectors_changed(ctx);
        }
    }

    fn on_tc(&mut self, ctx: &mut Ctx<'_>, frame: &Frame, origin: NodeId, ansn: u64, selectors: &[NodeId]) {
        if origin == self.id || !self.seen_tc.insert((origin, frame.seqno)) {
            return;
        }
        let now = ctx.now();
        let fresh = self.topology.get(&origin).is_none_or(|t| ansn >= t.ansn);
        if fresh {
            let old = self.topology.insert(
                origin,
                Topology {
                    ansn,
                    selectors: selectors.to_vec(),
                    updated_at: now,
                },
            );
            if old.is_none_or(|o| o.selectors != selectors) {
                self.recompute_routes(ctx);
            }
        }
        // Only relays chosen by the previous hop re-broadcast.
        if self.selectors.contains_key(&frame.src) {
            if let Some(next) = frame.forwarded(self.id, Dest::Broadcast) {
                let delay = forward_delay(ctx, self.common.forward_jitter);
                ctx.send_after(delay, next);
            }
        }
    }
}

impl RoutingAgent for Olsr {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        let j = self.common.timer_jitter;
        let hello = jittered(ctx, self.params.hello_interval, j);
        ctx.set_timer(hello, HELLO_TIMER);
        let tc = jittered(ctx, self.params.tc_interval, j);
        ctx.set_timer(tc, TC_TIMER);
        ctx.set_timer(SimTime::from_secs_f64(SWEEP_PERIOD), SWEEP_TIMER);
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, token: u64) {
        let j = self.common.timer_jitter;
        match token {
            HELLO_TIMER => {
                self.send_hello(ctx);
                let next = jittered(ctx, self.params.hello_interval, j);
                ctx.set_timer(next, HELLO_TIMER);
            }
            TC_TIMER => {
                if !self.selectors.is_empty() {
                    self.stats.periodic_updates += 1;
                    self.send_tc(ctx);
                }
                let next = jittered(ctx, self.params.tc_interval, j);
                ctx.set_timer(next, TC_TIMER);
            }
            TRIGGERED_TC_TIMER => {
                self.triggered_pending = false;
                if !self.selectors.is_empty() || self.advertised_any {
                    self.stats.triggered_updates += 1;
                    self.send_tc(ctx);
                }
            }
            SWEEP_TIMER => {
                self.sweep(ctx);
                ctx.set_timer(SimTime::from_secs_f64(SWEEP_PERIOD), SWEEP_TIMER);
            }
            _ => {}
        }
    }

    fn on_app_packet(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket) {
        self.refresh(ctx);
        self.forwarding.originate(ctx, packet);
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        match &frame.payload {
            Payload::Hello { links } => self.on_hello(ctx, frame.src, links),
            Payload::Tc { origin, ansn, selectors } => self.on_tc(ctx, frame, *origin, *ansn, selectors),
            Payload::Data(_) => {
                self.refresh(ctx);
                self.forwarding.on_data(ctx, frame);
            }
            _ => {}
        }
    }

    fn on_link_failure(&mut self, ctx: &mut Ctx<'_>, frame: Frame) {
        self.forwarding.on_link_failure(ctx, &frame);
    }
}
