//! DSR, FSR and OLSR agents.

pub mod buffer;
pub mod dsr;
pub mod fsr;
pub mod linkstate;
pub mod olsr;
pub mod params;
pub mod route_cache;

use rand::Rng;

use crate::engine::frame::{DataPacket, Frame};
use crate::engine::{Ctx, RoutingAgent, SimTime};
use crate::NodeId;
pub use dsr::Dsr;
pub use fsr::Fsr;
pub use olsr::Olsr;
pub use params::{Mode, ProtocolKind, ProtocolOverrides, ProtocolParams};

/// `interval` scaled by a uniform factor in `[1 - jitter, 1 + jitter]`.
pub(crate) fn jittered(ctx: &mut Ctx<'_>, interval: f64, jitter: f64) -> SimTime {
    let factor = if jitter > 0.0 {
        ctx.rng().random_range(1.0 - jitter..=1.0 + jitter)
    } else {
        1.0
    };
    SimTime::from_secs_f64(interval * factor)
}

/// Random delay before re-broadcasting a flooded frame.
pub(crate) fn forward_delay(ctx: &mut Ctx<'_>, max: f64) -> SimTime {
    if max > 0.0 {
        SimTime::from_secs_f64(ctx.rng().random_range(0.0..max))
    } else {
        SimTime::ZERO
    }
}

/// Counters exposed by every agent for tests and reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentStats {
    /// Control messages originated in reaction to topology changes.
    pub triggered_updates: u64,
    pub periodic_updates: u64,
    pub discoveries_started: u64,
    pub discoveries_failed: u64,
    pub salvaged: u64,
    pub mpr_selections: u64,
    pub coverage_violations: u64,
}

pub enum Agent {
    Dsr(Dsr),
    Fsr(Fsr),
    Olsr(Olsr),
}

impl Agent {
    pub fn new(node: NodeId, params: &ProtocolParams) -> Self {
        match params.kind {
            ProtocolKind::Dsr => Agent::Dsr(Dsr::new(node, params)),
            ProtocolKind::Fsr => Agent::Fsr(Fsr::new(node, params)),
            ProtocolKind::Olsr => Agent::Olsr(Olsr::new(node, params)),
        }
    }

    /// First hop this node would use towards `dst`, if any.
    pub fn next_hop(&self, dst: NodeId) -> Option<NodeId> {
        match self {
            Agent::Dsr(a) => a.cache().lookup(dst).map(|r| r[1]),
            Agent::Fsr(a) => a.next_hop(dst),
            Agent::Olsr(a) => a.next_hop(dst),
        }
    }

    pub fn stats(&self) -> AgentStats {
        match self {
            Agent::Dsr(a) => a.stats(),
            Agent::Fsr(a) => a.stats(),
            Agent::Olsr(a) => a.stats(),
        }
    }
}

pub fn build_agents(params: &ProtocolParams, nodes: usize) -> Vec<Agent> {
    (0..nodes).map(|n| Agent::new(n, params)).collect()
}

macro_rules! delegate {
    ($self:ident, $a:ident => $call:expr) => {
        match $self {
            Agent::Dsr($a) => $call,
            Agent::Fsr($a) => $call,
            Agent::Olsr($a) => $call,
        }
    };
}

impl RoutingAgent for Agent {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        delegate!(self, a => a.start(ctx))
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, token: u64) {
        delegate!(self, a => a.on_timer(ctx, token))
    }

    fn on_app_packet(&mut self, ctx: &mut Ctx<'_>, packet: DataPacket) {
        delegate!(self, a => a.on_app_packet(ctx, packet))
    }

    fn on_receive(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        delegate!(self, a => a.on_receive(ctx, frame))
    }

    fn on_overhear(&mut self, ctx: &mut Ctx<'_>, frame: &Frame) {
        delegate!(self, a => a.on_overhear(ctx, frame))
    }

    fn on_link_failure(&mut self, ctx: &mut Ctx<'_>, frame: Frame) {
        delegate!(self, a => a.on_link_failure(ctx, frame))
    }
}
