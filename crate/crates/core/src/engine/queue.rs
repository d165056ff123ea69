use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::time::SimTime;
use crate::error::{Error, Result};
use crate::NodeId;

/// Identifier of an in-flight transmission.
pub type TxId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// A node reaches the end of a pause or a movement leg.
    MobilityUpdate { node: NodeId },
    /// A contention attempt scheduled for a slot boundary.
    MacSlot { node: NodeId, generation: u64 },
    /// A transmission leaves the air.
    FrameDelivery { tx: TxId },
    ProtocolTimer { node: NodeId, token: u64 },
    TrafficTick { flow: usize },
    MetricsSample,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::MobilityUpdate { .. } => "mobility",
            EventKind::MacSlot { .. } => "mac-slot",
            EventKind::FrameDelivery { .. } => "frame-delivery",
            EventKind::ProtocolTimer { .. } => "timer",
            EventKind::TrafficTick { .. } => "traffic",
            EventKind::MetricsSample => "sample",
        }
    }

    pub fn node(&self) -> Option<NodeId> {
        match *self {
            EventKind::MobilityUpdate { node }
            | EventKind::MacSlot { node, .. }
            | EventKind::ProtocolTimer { node, .. } => Some(node),
            _ => None,
        }
    }

    fn code(&self) -> u8 {
        match self {
            EventKind::MobilityUpdate { .. } => 1,
            EventKind::MacSlot { .. } => 2,
            EventKind::FrameDelivery { .. } => 3,
            EventKind::ProtocolTimer { .. } => 4,
            EventKind::TrafficTick { .. } => 5,
            EventKind::MetricsSample => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Key(SimTime, u64);

/// Time-ordered event queue; ties break by scheduling order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(Key, usize)>>,
    slots: Vec<Option<EventKind>>,
    free: Vec<usize>,
    next_seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: SimTime, kind: EventKind) -> Result<u64> {
        if time < self.now {
            return Err(Error::Logic(format!(
                "event {} scheduled at {time} before current time {}",
                kind.label(),
                self.now
            )));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let slot = match self.free.pop() {
            Some(i) => {
                self.slots[i] = Some(kind);
                i
            }
            None => {
                self.slots.push(Some(kind));
                self.slots.len() - 1
            }
        };
        self.heap.push(Reverse((Key(time, seq), slot)));
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse((Key(t, _), _))| *t)
    }

    pub fn next_event(&mut self) -> Option<Event> {
        let Reverse((Key(time, seq), slot)) = self.heap.pop()?;
        let kind = self.slots[slot].take().expect("queued slot is occupied");
        self.free.push(slot);
        self.now = time;
        Some(Event { time, seq, kind })
    }
}

/// FNV-1a digest of the processed event sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceDigest(u64);

impl Default for TraceDigest {
    fn default() -> Self {
        TraceDigest(0xcbf2_9ce4_8422_2325)
    }
}

impl TraceDigest {
    pub fn absorb(&mut self, event: &Event) {
        let node = event.kind.node().map_or(u64::MAX, |n| n as u64);
        let mut bytes = [0u8; 17];
        bytes[..8].copy_from_slice(&event.time.as_nanos().to_le_bytes());
        bytes[8] = event.kind.code();
        bytes[9..].copy_from_slice(&node.to_le_bytes());
        for b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    #[test]
    fn orders_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.schedule(t(1.0), EventKind::TrafficTick { flow: 1 }).unwrap();
        q.schedule(t(0.5), EventKind::TrafficTick { flow: 2 }).unwrap();
        q.schedule(t(1.0), EventKind::TrafficTick { flow: 3 }).unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.next_event()).map(|e| e.kind).collect();
        assert_eq!(
            order,
            vec![
                EventKind::TrafficTick { flow: 2 },
                EventKind::TrafficTick { flow: 1 },
                EventKind::TrafficTick { flow: 3 }
            ]
        );
    }

    #[test]
    fn rejects_past_events() {
        let mut q = EventQueue::new();
        q.schedule(t(2.0), EventKind::MetricsSample).unwrap();
        q.next_event().unwrap();
        assert!(q.schedule(t(1.0), EventKind::MetricsSample).is_err());
        assert!(q.schedule(t(2.0), EventKind::MetricsSample).is_ok());
    }
}
