//! Dynamic source routing with a two-stage expanding ring search, a FIFO
//! path cache fed by promiscuous listening, gratuitous cache replies, and
//! packet salvaging.

use std::collections::{BTreeMap, BTreeSet};

use super::buffer::SendBuffer;
use super::linkstate::DATA_TTL;
use super::params::{CommonParams, DsrParams, ProtocolParams};
use super::route_cache::{is_loop_free, RouteCache};
use super::{forward_delay, AgentStats};
use crate::cost_model::{DsrErsSchedule, MAX_TTL};
use crate::engine::frame::{DataPacket, Dest, Frame, Payload, SourceRoute};
use crate::engine::{Ctx, RoutingAgent, SimTime};
use crate::traffic_metrics::DropCause;
use crate::NodeId;

const SWEEP_TOKEN: u64 = 0;
const SWEEP_PERIOD: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct Discovery {
    ring: usize,
    floods: u32,
    request_id: u64,
}

pub struct Dsr {
    id: NodeId,
    params: DsrParams,
    common: CommonParams,
    rings: Vec<u32>,
    cache: RouteCache,
    buffer: SendBuffer,
    next_request: u64,
    seen: BTreeSet<(NodeId, u64)>,
    discoveries: BTreeMap<NodeId, Discovery>,
    timers: BTreeMap<u64, (NodeId, u64)>,
    next_token: u64,
    pending_error: Option<(NodeId, NodeId)>,
    maintenance: BTreeMap<(u64, NodeId), u32>,
    stats: AgentStats,
}

impl Dsr {
    pub fn new(id: NodeId, params: &ProtocolParams) -> Self {
        let dsr = params.dsr.clone();
        let common = params.common.clone();
        let rings = DsrErsSchedule::two_stage(dsr.non_propagating_ttl)
            .map(|s| s.rings().to_vec())
            .unwrap_or_else(|_| vec![MAX_TTL]);
        Dsr {
            id,
            cache: RouteCache::new(id, dsr.cache_capacity),
            buffer: SendBuffer::new(
                common.send_buffer_capacity,
                SimTime::from_secs_f64(common.send_buffer_timeout),
            ),
            params: dsr,
            common,
            rings,
            next_request: 0,
            seen: BTreeSet::new(),
            discoveries: BTreeMap::new(),
            timers: BTreeMap::new(),
            next_token: 1,
            pending_error: None,
            maintenance: BTreeMap::new(),
            stats: AgentStats::default(),
        }
    }

    pub fn cache(&self) -> &RouteCache {
        &self.cache
    }

    pub fn stats(&self) -> AgentStats {
        self.stats
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn discovering(&self, target: NodeId) -> bool {
        self.discoveries.contains_key(&target)
    }

    fn send_data(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket, route: Vec<NodeId>) {
        debug_assert!(is_loop_free(&route) && route[0] == self.id && route.len() >= 2);
        let frame = Frame::new(self.id, Dest::Unicast(route[1]), DATA_TTL, ctx.now(), Payload::Data(packet))
            .with_route(SourceRoute::new(route));
        ctx.send(frame);
    }

    fn buffer_packet(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket) {
        let target = packet.target;
        if let Some(old) = self.buffer.push(ctx.now(), packet) {
            ctx.drop_packet(&old, DropCause::BufferOverflow);
        }
        if !self.discoveries.contains_key(&target) {
            self.stats.discoveries_started += 1;
            self.discoveries.insert(
                target,
                Discovery {
                    ring: 0,
                    floods: 0,
                    request_id: 0,
                },
            );
            self.send_rreq(ctx, target);
        }
    }

    fn send_rreq(&mut self, ctx: &mut Ctx<'_>, target: NodeId) {
        self.next_request += 1;
        let request_id = self.next_request;
        let d = self.discoveries.get_mut(&target).expect("active discovery");
        d.request_id = request_id;
        let ttl = self.rings[d.ring];
        let timeout = if d.ring + 1 == self.rings.len() {
            let t = self.params.flood_timeout * 2f64.powi(d.floods as i32);
            d.floods += 1;
            t.min(self.params.max_flood_timeout)
        } else {
            self.params.ring_timeout_per_hop * f64::from(ttl)
        };
        self.seen.insert((self.id, request_id));
        let payload = Payload::Rreq {
            origin: self.id,
            target,
            request_id,
            path: vec![self.id],
            piggyback_error: self.pending_error.take(),
        };
        let frame = Frame::new(self.id, Dest::Broadcast, ttl, ctx.now(), payload).with_seqno(request_id);
        ctx.send(frame);
        let token = self.next_token;
        self.next_token += 1;
        self.timers.insert(token, (target, request_id));
        ctx.set_timer(SimTime::from_secs_f64(timeout), token);
    }

    fn on_discovery_timeout(&mut self, ctx: &mut Ctx<'_>, target: NodeId, request_id: u64) {
        let Some(d) = self.discoveries.get(&target).copied() else {
            return;
        };
        if d.request_id != request_id {
            return;
        }
        if self.cache.lookup(target).is_some() {
            self.flush(ctx);
            return;
        }
        if d.ring + 1 < self.rings.len() {
            self.discoveries.get_mut(&target).unwrap().ring += 1;
            self.send_rreq(ctx, target);
        } else if d.floods < self.params.max_floods {
            self.send_rreq(ctx, target);
        } else {
            self.discoveries.remove(&target);
            self.stats.discoveries_failed += 1;
            for packet in self.buffer.take_where(|p| p.target == target) {
                ctx.drop_packet(&packet, DropCause::DiscoveryFailed);
            }
        }
    }

    /// Sends buffered packets that now have a cached route and closes the
    /// matching discoveries.
    fn flush(&mut self, ctx: &mut Ctx<'_>) {
        let cache = &self.cache;
        let done: Vec<NodeId> = self
            .discoveries
            .keys()
            .copied()
            .filter(|&t| cache.lookup(t).is_some())
            .collect();
        for t in done {
            self.discoveries.remove(&t);
        }
        if self.buffer.is_empty() {
            return;
        }
        let ready = self.buffer.take_where(|p| cache.lookup(p.target).is_some());
        for packet in ready {
            let route = self.cache.lookup(packet.target).expect("checked above");
            self.send_data(ctx, packet, route);
        }
    }

    fn learn(&mut self, ctx: &mut Ctx<'_>, path: &[NodeId]) {
        if self.cache.learn(ctx.now(), path) && (!self.buffer.is_empty() || !self.discoveries.is_empty()) {
            self.flush(ctx);
        }
    }

    fn learn_via(&mut self, ctx: &mut Ctx<'_>, via: NodeId, path: &[NodeId]) {
        if self.cache.learn_via(ctx.now(), via, path) && (!self.buffer.is_empty() || !self.discoveries.is_empty())
        {
            self.flush(ctx);
        }
    }

    fn send_rrep(&mut self, ctx: &mut Ctx<'_>, reverse: Vec<NodeId>, route: Vec<NodeId>, gratuitous: bool) {
        let frame = Frame::new(
            self.id,
            Dest::Unicast(reverse[1]),
            DATA_TTL,
            ctx.now(),
            Payload::Rrep { route, gratuitous },
        )
        .with_route(SourceRoute::new(reverse));
        ctx.send(frame);
    }

    fn on_rreq(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        let Payload::Rreq {
            origin,
            target,
            request_id,
            path,
            piggyback_error,
        } = &frame.payload
        else {
            return;
        };
        if *origin == self.id {
            return;
        }
        if let Some((a, b)) = *piggyback_error {
            self.cache.purge_link(a, b);
        }
        if path.contains(&self.id) {
            return;
        }
        let mut full = path.clone();
        full.push(self.id);
        self.learn(ctx, &full);
        if !self.seen.insert((*origin, *request_id)) {
            return;
        }
        let reverse: Vec<NodeId> = full.iter().rev().copied().collect();
        if *target == self.id {
            self.send_rrep(ctx, reverse, full, false);
            return;
        }
        if let Some(rest) = self.cache.lookup(*target) {
            let mut candidate = path.clone();
            candidate.extend_from_slice(&rest);
            if is_loop_free(&candidate) {
                self.send_rrep(ctx, reverse, candidate, true);
                return;
            }
        }
        if let Some(mut next) = frame.forwarded(self.id, Dest::Broadcast) {
            if let Payload::Rreq { path, .. } = &mut next.payload {
                *path = full;
            }
            let delay = forward_delay(ctx, self.common.forward_jitter);
            ctx.send_after(delay, next);
        }
    }

    /// Passes a source-routed frame to its next hop. Returns `true` when
    /// this node is the last hop.
    fn relay(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) -> bool {
        let Some(route) = frame.route.as_ref() else {
            return true;
        };
        let here = route.advanced();
        let Some(next) = here.next_hop() else {
            return true;
        };
        match frame.forwarded(self.id, Dest::Unicast(next)) {
            Some(mut f) => {
                f.route = Some(here);
                ctx.send(f);
            }
            None => {
                if let Some(p) = frame.data() {
                    ctx.drop_packet(p, DropCause::TtlExpired);
                }
            }
        }
        false
    }

    fn send_rerr(&mut self, ctx: &mut Ctx<'_>, back: Vec<NodeId>, broken: (NodeId, NodeId)) {
        if back.len() < 2 {
            return;
        }
        let frame = Frame::new(self.id, Dest::Unicast(back[1]), DATA_TTL, ctx.now(), Payload::Rerr { broken })
            .with_route(SourceRoute::new(back));
        ctx.send(frame);
    }

    fn on_data_failure(&mut self, ctx: &mut Ctx<'_>, frame: Frame, next: NodeId) {
        let Some(packet) = frame.data().cloned() else {
            return;
        };
        let rounds = self.maintenance.entry((packet.id, next)).or_insert(0);
        if *rounds < self.params.max_maint_rexmt {
            *rounds += 1;
            ctx.send(frame);
            return;
        }
        self.maintenance.remove(&(packet.id, next));
        self.cache.purge_link(self.id, next);
        // Frames still queued for the dead hop are re-routed now rather
        // than each retrying the link.
        let queued = ctx.take_queued_to(next);
        self.reroute(ctx, &frame, packet, next);
        for f in queued {
            if let Some(p) = f.data().cloned() {
                self.maintenance.remove(&(p.id, next));
                self.reroute(ctx, &f, p, next);
            }
        }
    }

    /// Handles a packet whose next hop `next` is known to be unreachable.
    fn reroute(&mut self, ctx: &mut Ctx<'_>, frame: &Frame, mut packet: DataPacket, next: NodeId) {
        if !ctx.is_live(&packet) {
            return;
        }
        let path = frame.route.as_ref().map(|r| r.path.clone()).unwrap_or_default();
        let position = path.iter().position(|&n| n == self.id).unwrap_or(0);
        if position == 0 {
            // This node built the route: re-route or rediscover.
            self.pending_error = Some((self.id, next));
            match self.cache.lookup(packet.target) {
                Some(route) => self.send_data(ctx, packet, route),
                None => self.buffer_packet(ctx, packet),
            }
            return;
        }
        if packet.salvaged < self.params.salvage_limit {
            if let Some(route) = self.cache.lookup(packet.target) {
                packet.salvaged += 1;
                self.stats.salvaged += 1;
                self.send_data(ctx, packet, route);
                return;
            }
        }
        let cause = if packet.salvaged >= self.params.salvage_limit {
            DropCause::SalvageLimit
        } else {
            DropCause::LinkBreak
        };
        ctx.drop_packet(&packet, cause);
        let back: Vec<NodeId> = path[..=position].iter().rev().copied().collect();
        self.send_rerr(ctx, back, (self.id, next));
    }
}

impl RoutingAgent for Dsr {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        ctx.set_timer(SimTime::from_secs_f64(SWEEP_PERIOD), SWEEP_TOKEN);
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, token: u64) {
        if token == SWEEP_TOKEN {
            for packet in self.buffer.expire(ctx.now()) {
                ctx.drop_packet(&packet, DropCause::BufferTimeout);
            }
            ctx.set_timer(SimTime::from_secs_f64(SWEEP_PERIOD), SWEEP_TOKEN);
        } else if let Some((target, request_id)) = self.timers.remove(&token) {
            self.on_discovery_timeout(ctx, target, request_id);
        }
    }

    fn on_app_packet(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket) {
        match self.cache.lookup(packet.target) {
            Some(route) => self.send_data(ctx, packet, route),
            None => self.buffer_packet(ctx, packet),
        }
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        match &frame.payload {
            Payload::Rreq { .. } => self.on_rreq(ctx, frame),
            Payload::Rrep { route, .. } => {
                self.learn(ctx, route);
                if self.relay(ctx, frame) {
                    self.flush(ctx);
                }
            }
            Payload::Rerr { broken } => {
                self.cache.purge_link(broken.0, broken.1);
                if self.relay(ctx, frame) {
                    self.pending_error = Some(*broken);
                }
            }
            Payload::Data(packet) => {
                if let Some(route) = &frame.route {
                    let path = route.path.clone();
                    self.learn(ctx, &path);
                }
                if packet.target == self.id {
                    ctx.deliver(packet);
                } else {
                    self.relay(ctx, frame);
                }
            }
            _ => {}
        }
    }

    fn on_overhear(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        if let Payload::Rerr { broken } = frame.payload {
            self.cache.purge_link(broken.0, broken.1);
            return;
        }
        if let Some(route) = &frame.route {
            let path = route.path.clone();
            self.learn_via(ctx, frame.src, &path);
        }
        if let Payload::Rrep { route, .. } = &frame.payload {
            self.learn_via(ctx, frame.src, route);
        }
    }

    fn on_link_failure(&mut self, ctx: &mut Ctx<'_>, frame: Frame) {
        let Dest::Unicast(next) = frame.dst else { return };
        if frame.data().is_some() {
            self.on_data_failure(ctx, frame, next);
        } else {
            self.cache.purge_link(self.id, next);
        }
    }
}
