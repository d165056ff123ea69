//! Shortest-path tables and hop-by-hop data forwarding shared by the
//! proactive protocols.

use std::collections::{BTreeMap, VecDeque};

use super::buffer::SendBuffer;
use crate::engine::frame::{DataPacket, Dest, Frame, Payload};
use crate::engine::{Ctx, SimTime};
use crate::traffic_metrics::DropCause;
use crate::NodeId;

pub const DATA_TTL: u32 = 255;

/// Undirected graph over dense node ids, rebuilt for each route
/// computation.
#[derive(Debug, Clone, Default)]
pub struct LinkGraph {
    adj: Vec<Vec<NodeId>>,
}

impl LinkGraph {
    pub fn link(&mut self, a: NodeId, b: NodeId) {
        if a == b {
            return;
        }
        let need = a.max(b) + 1;
        if self.adj.len() < need {
            self.adj.resize_with(need, Vec::new);
        }
        self.adj[a].push(b);
        self.adj[b].push(a);
    }

    /// BFS from `src`: destination -> (first hop, hop distance). Ties go to
    /// the smallest-id parent, so the result does not depend on insertion
    /// order.
    pub fn next_hops(mut self, src: NodeId) -> BTreeMap<NodeId, (NodeId, u32)> {
        for list in &mut self.adj {
            list.sort_unstable();
            list.dedup();
        }
        let mut table = BTreeMap::new();
        if src >= self.adj.len() {
            return table;
        }
        let mut best: Vec<Option<(NodeId, u32)>> = vec![None; self.adj.len()];
        let mut queue = VecDeque::new();
        for &n in &self.adj[src] {
            best[n] = Some((n, 1));
            queue.push_back(n);
        }
        while let Some(u) = queue.pop_front() {
            let (via, d) = best[u].expect("queued nodes are labeled");
            for &v in &self.adj[u] {
                if v != src && best[v].is_none() {
                    best[v] = Some((via, d + 1));
                    queue.push_back(v);
                }
            }
        }
        for (dst, entry) in best.into_iter().enumerate() {
            if let Some(e) = entry {
                table.insert(dst, e);
            }
        }
        table
    }
}

/// Hop-by-hop data forwarding over a routing table, with a send buffer for
/// packets that originate while no route is known.
///
/// Routes are recomputed lazily: the owner calls [`HopByHop::invalidate`]
/// when its link state changes and refreshes before any routing decision.
#[derive(Debug, Clone)]
pub struct HopByHop {
    routes: BTreeMap<NodeId, (NodeId, u32)>,
    stale: bool,
    buffer: SendBuffer,
}

impl HopByHop {
    pub fn new(buffer: SendBuffer) -> Self {
        HopByHop {
            routes: BTreeMap::new(),
            stale: false,
            buffer,
        }
    }

    pub fn routes(&self) -> &BTreeMap<NodeId, (NodeId, u32)> {
        &self.routes
    }

    pub fn next_hop(&self, dst: NodeId) -> Option<NodeId> {
        self.routes.get(&dst).map(|&(n, _)| n)
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Installs a new table and releases buffered packets that now have a
    /// route.
    pub fn invalidate(&mut self) {
        self.stale = true;
    }

    pub fn is_stale(&self) -> bool {
        self.stale
    }

    /// True when the table is stale and a recomputation must not wait:
    /// buffered packets may now have a route.
    pub fn needs_eager_refresh(&self) -> bool {
        self.stale && !self.buffer.is_empty()
    }

    pub fn set_routes(&mut self, ctx: &mut Ctx<'_>, routes: BTreeMap<NodeId, (NodeId, u32)>) {
        self.routes = routes;
        self.stale = false;
        if self.buffer.is_empty() {
            return;
        }
        let routes = &self.routes;
        let ready = self.buffer.take_where(|p| routes.contains_key(&p.target));
        for packet in ready {
            self.forward(ctx, packet, DATA_TTL);
        }
    }

    fn forward(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket, ttl: u32) {
        let next = self.routes[&packet.target].0;
        let frame = Frame::new(ctx.node(), Dest::Unicast(next), ttl, ctx.now(), Payload::Data(packet));
        ctx.send(frame);
    }

    pub fn originate(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket) {
        if self.routes.contains_key(&packet.target) {
            self.forward(ctx, packet, DATA_TTL);
        } else if let Some(old) = self.buffer.push(ctx.now(), packet) {
            ctx.drop_packet(&old, DropCause::BufferOverflow);
        }
    }

    /// Handles a data frame addressed to this node.
    pub fn on_data(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        let Some(packet) = frame.data() else { return };
        if packet.target == ctx.node() {
            ctx.deliver(packet);
            return;
        }
        let Some(&(next, _)) = self.routes.get(&packet.target) else {
            ctx.drop_packet(packet, DropCause::NoRoute);
            return;
        };
        match frame.forwarded(ctx.node(), Dest::Unicast(next)) {
            Some(f) => ctx.send(f),
            None => ctx.drop_packet(packet, DropCause::TtlExpired),
        }
    }

    pub fn on_link_failure(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        if let Some(packet) = frame.data() {
            ctx.drop_packet(packet, DropCause::LinkBreak);
        }
    }

    pub fn expire(&mut self, ctx: &mut Ctx<'_>, now: SimTime) {
        for packet in self.buffer.expire(now) {
            ctx.drop_packet(&packet, DropCause::BufferTimeout);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfs_next_hops_on_ring() {
        let mut g = LinkGraph::default();
        for i in 0..6 {
            g.link(i, (i + 1) % 6);
            g.link((i + 1) % 6, i);
        }
        let t = g.next_hops(0);
        assert_eq!(t[&1], (1, 1));
        assert_eq!(t[&2], (1, 2));
        assert_eq!(t[&3], (1, 3));
        assert_eq!(t[&4], (5, 2));
        assert!(!t.contains_key(&0));
    }
}
