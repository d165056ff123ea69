//! Fisheye state routing with two update scopes.
//!
//! Every node periodically floods its own neighbor list: at the intra
//! interval within `intra_radius` hops, at the inter interval within
//! `inter_radius` hops. Updates carry a per-origin sequence number; tables
//! only take strictly newer entries. Nothing is sent in reaction to link
//! changes.

use std::collections::BTreeMap;

use super::buffer::SendBuffer;
use super::linkstate::{HopByHop, LinkGraph};
use super::params::{CommonParams, FsrParams, ProtocolParams};
use super::{forward_delay, jittered, AgentStats};
use crate::engine::frame::{DataPacket, Dest, Frame, FrameKind, Payload, Scope};
use crate::engine::{Ctx, RoutingAgent, SimTime};
use crate::NodeId;

const INTRA_TIMER: u64 = 1;
const INTER_TIMER: u64 = 2;
const SWEEP_TIMER: u64 = 3;
const SWEEP_PERIOD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub seqno: u64,
    pub neighbors: Vec<NodeId>,
    pub updated_at: SimTime,
}

pub struct Fsr {
    id: NodeId,
    params: FsrParams,
    common: CommonParams,
    seqno: u64,
    neighbors: BTreeMap<NodeId, SimTime>,
    table: BTreeMap<NodeId, LinkState>,
    /// Highest flooded sequence number seen per (origin, scope).
    flooded: BTreeMap<(NodeId, Scope), u64>,
    forwarding: HopByHop,
    stats: AgentStats,
}

impl Fsr {
    pub fn new(id: NodeId, params: &ProtocolParams) -> Self {
        let common = params.common.clone();
        Fsr {
            id,
            params: params.fsr.clone(),
            seqno: 0,
            neighbors: BTreeMap::new(),
            table: BTreeMap::new(),
            flooded: BTreeMap::new(),
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

    pub fn table(&self) -> &BTreeMap<NodeId, LinkState> {
        &self.table
    }

    pub fn neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.neighbors.keys().copied()
    }

    pub fn stats(&self) -> AgentStats {
        self.stats
    }

    fn emit(&mut self, ctx: &mut Ctx<'_>, scope: Scope) {
        self.seqno += 1;
        let ttl = match scope {
            Scope::Intra => self.params.intra_radius,
            Scope::Inter => self.params.inter_radius,
        };
        self.flooded.insert((self.id, scope), self.seqno);
        let payload = Payload::FsrUpdate {
            origin: self.id,
            seqno: self.seqno,
            scope,
            neighbors: self.neighbors.keys().copied().collect(),
        };
        let frame = Frame::new(self.id, Dest::Broadcast, ttl, ctx.now(), payload).with_seqno(self.seqno);
        self.stats.periodic_updates += 1;
        ctx.send(frame);
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
        for &n in self.neighbors.keys() {
            graph.link(self.id, n);
        }
        for (&origin, state) in &self.table {
            for &n in &state.neighbors {
                graph.link(origin, n);
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

    fn recompute(&mut self, ctx: &mut Ctx<'_>) {
        self.forwarding.invalidate();
        if self.forwarding.needs_eager_refresh() {
            self.refresh(ctx);
        }
    }

    fn sweep(&mut self, ctx: &mut Ctx<'_>) {
        let now = ctx.now();
        let hold = self.common.hold_factor;
        let nbr_life = SimTime::from_secs_f64(hold * self.params.intra_interval);
        let entry_life = SimTime::from_secs_f64(hold * self.params.inter_interval);
        let before = (self.neighbors.len(), self.table.len());
        self.neighbors.retain(|_, &mut heard| now.saturating_sub(heard) <= nbr_life);
        self.table.retain(|_, e| now.saturating_sub(e.updated_at) <= entry_life);
        if before != (self.neighbors.len(), self.table.len()) {
            self.recompute(ctx);
        }
        self.forwarding.expire(ctx, now);
    }
}

impl RoutingAgent for Fsr {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        let j = self.common.timer_jitter;
        let intra = jittered(ctx, self.params.intra_interval, j);
        ctx.set_timer(intra, INTRA_TIMER);
        let inter = jittered(ctx, self.params.inter_interval, j);
        ctx.set_timer(inter, INTER_TIMER);
        ctx.set_timer(SimTime::from_secs_f64(SWEEP_PERIOD), SWEEP_TIMER);
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, token: u64) {
        let j = self.common.timer_jitter;
        match token {
            INTRA_TIMER => {
                self.emit(ctx, Scope::Intra);
                let next = jittered(ctx, self.params.intra_interval, j);
                ctx.set_timer(next, INTRA_TIMER);
            }
            INTER_TIMER => {
                self.emit(ctx, Scope::Inter);
                let next = jittered(ctx, self.params.inter_interval, j);
                ctx.set_timer(next, INTER_TIMER);
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
            Payload::FsrUpdate {
                origin,
                seqno,
                scope,
                neighbors,
            } => {
                let now = ctx.now();
                let new_neighbor = self.neighbors.insert(frame.src, now).is_none();
                let mut changed = new_neighbor;
                if *origin != self.id {
                    let last = self.flooded.entry((*origin, *scope)).or_insert(0);
                    if *seqno > *last {
                        *last = *seqno;
                        if let Some(next) = frame.forwarded(self.id, Dest::Broadcast) {
                            let delay = forward_delay(ctx, self.common.forward_jitter);
                            ctx.send_after(delay, next);
                        }
                    }
                    let newer = self.table.get(origin).is_none_or(|e| *seqno > e.seqno);
                    if newer {
                        let old = self.table.insert(
                            *origin,
                            LinkState {
                                seqno: *seqno,
                                neighbors: neighbors.clone(),
                                updated_at: now,
                            },
                        );
                        changed |= old.is_none_or(|o| o.neighbors != *neighbors);
                    }
                }
                if changed {
                    self.recompute(ctx);
                }
            }
            Payload::Data(_) => {
                self.refresh(ctx);
                self.forwarding.on_data(ctx, frame);
            }
            _ => {}
        }
    }

    fn on_link_failure(&mut self, ctx: &mut Ctx<'_>, frame: Frame) {
        debug_assert_eq!(frame.kind(), FrameKind::Data);
        self.forwarding.on_link_failure(ctx, &frame);
    }
}
