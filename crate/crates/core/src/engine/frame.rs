use std::fmt;

use super::time::SimTime;
use crate::NodeId;

pub const MAC_HEADER_BYTES: u32 = 34;
pub const IP_HEADER_BYTES: u32 = 20;
pub const ACK_BYTES: u32 = 14;
pub const ADDRESS_BYTES: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Broadcast,
    Unicast(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    Data,
    Rreq,
    Rrep,
    Rerr,
    FsrUpdate,
    Hello,
    Tc,
}

impl FrameKind {
    pub const CONTROL: [FrameKind; 6] = [
        FrameKind::Rreq,
        FrameKind::Rrep,
        FrameKind::Rerr,
        FrameKind::FsrUpdate,
        FrameKind::Hello,
        FrameKind::Tc,
    ];

    pub fn is_control(self) -> bool {
        self != FrameKind::Data
    }

    pub fn label(self) -> &'static str {
        match self {
            FrameKind::Data => "data",
            FrameKind::Rreq => "rreq",
            FrameKind::Rrep => "rrep",
            FrameKind::Rerr => "rerr",
            FrameKind::FsrUpdate => "fsr-update",
            FrameKind::Hello => "hello",
            FrameKind::Tc => "tc",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        std::iter::once(FrameKind::Data)
            .chain(Self::CONTROL)
            .find(|k| k.label() == s)
    }

    /// Dense index for per-kind counters.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// An application packet of a CBR flow.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    pub id: u64,
    pub flow: usize,
    pub origin: NodeId,
    pub target: NodeId,
    pub created_at: SimTime,
    pub payload_bytes: u32,
    /// Times an intermediate node re-routed this packet from its cache.
    pub salvaged: u32,
}

/// A DSR source route with the index of the hop currently receiving.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRoute {
    pub path: Vec<NodeId>,
    pub position: usize,
}

impl SourceRoute {
    pub fn new(path: Vec<NodeId>) -> Self {
        SourceRoute { path, position: 0 }
    }

    pub fn current(&self) -> NodeId {
        self.path[self.position]
    }

    pub fn next_hop(&self) -> Option<NodeId> {
        self.path.get(self.position + 1).copied()
    }

    pub fn advanced(&self) -> Self {
        SourceRoute {
            path: self.path.clone(),
            position: self.position + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkCode {
    Asym,
    Sym,
    Mpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Intra,
    Inter,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Data(DataPacket),
    Rreq {
        origin: NodeId,
        target: NodeId,
        request_id: u64,
        /// Nodes traversed so far, starting with the origin.
        path: Vec<NodeId>,
        piggyback_error: Option<(NodeId, NodeId)>,
    },
    Rrep {
        /// Discovered route, origin first.
        route: Vec<NodeId>,
        gratuitous: bool,
    },
    Rerr {
        broken: (NodeId, NodeId),
    },
    FsrUpdate {
        origin: NodeId,
        seqno: u64,
        scope: Scope,
        neighbors: Vec<NodeId>,
    },
    Hello {
        links: Vec<(NodeId, LinkCode)>,
    },
    Tc {
        origin: NodeId,
        ansn: u64,
        selectors: Vec<NodeId>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Transmitter of this hop.
    pub src: NodeId,
    pub dst: Dest,
    pub ttl: u32,
    /// TTL at origination; `hops` never exceeds it.
    pub initial_ttl: u32,
    pub hops: u32,
    pub born_at: SimTime,
    pub seqno: u64,
    pub route: Option<SourceRoute>,
    pub payload: Payload,
}

impl Frame {
    pub fn new(src: NodeId, dst: Dest, ttl: u32, born_at: SimTime, payload: Payload) -> Self {
        Frame {
            src,
            dst,
            ttl,
            initial_ttl: ttl,
            hops: 0,
            born_at,
            seqno: 0,
            route: None,
            payload,
        }
    }

    pub fn with_route(mut self, route: SourceRoute) -> Self {
        self.route = Some(route);
        self
    }

    pub fn with_seqno(mut self, seqno: u64) -> Self {
        self.seqno = seqno;
        self
    }

    pub fn kind(&self) -> FrameKind {
        match self.payload {
            Payload::Data(_) => FrameKind::Data,
            Payload::Rreq { .. } => FrameKind::Rreq,
            Payload::Rrep { .. } => FrameKind::Rrep,
            Payload::Rerr { .. } => FrameKind::Rerr,
            Payload::FsrUpdate { .. } => FrameKind::FsrUpdate,
            Payload::Hello { .. } => FrameKind::Hello,
            Payload::Tc { .. } => FrameKind::Tc,
        }
    }

    pub fn data(&self) -> Option<&DataPacket> {
        match &self.payload {
            Payload::Data(p) => Some(p),
            _ => None,
        }
    }

    /// Copy for the next hop: TTL decremented once, hop count incremented.
    /// `None` when the TTL is spent.
    pub fn forwarded(&self, by: NodeId, dst: Dest) -> Option<Frame> {
        if self.ttl <= 1 {
            return None;
        }
        let mut next = self.clone();
        next.src = by;
        next.dst = dst;
        next.ttl -= 1;
        next.hops += 1;
        Some(next)
    }

    /// On-air size in bytes, including MAC and IP headers.
    pub fn size(&self) -> u32 {
        let route = self
            .route
            .as_ref()
            .map_or(0, |r| 4 + ADDRESS_BYTES * r.path.len() as u32);
        let body = match &self.payload {
            Payload::Data(p) => p.payload_bytes,
            Payload::Rreq { path, piggyback_error, .. } => {
                12 + ADDRESS_BYTES * path.len() as u32 + piggyback_error.map_or(0, |_| 12)
            }
            Payload::Rrep { route, .. } => 8 + ADDRESS_BYTES * route.len() as u32,
            Payload::Rerr { .. } => 12,
            Payload::FsrUpdate { neighbors, .. } => 12 + ADDRESS_BYTES * neighbors.len() as u32,
            Payload::Hello { links } => 8 + (ADDRESS_BYTES + 1) * links.len() as u32,
            Payload::Tc { selectors, .. } => 12 + ADDRESS_BYTES * selectors.len() as u32,
        };
        MAC_HEADER_BYTES + IP_HEADER_BYTES + route + body
    }
}
