use std::collections::VecDeque;

use crate::engine::frame::DataPacket;
use crate::engine::SimTime;
use crate::NodeId;

/// Packets waiting for a route, oldest first.
#[derive(Debug, Clone)]
pub struct SendBuffer {
    capacity: usize,
    timeout: SimTime,
    packets: VecDeque<(SimTime, DataPacket)>,
}

impl SendBuffer {
    pub fn new(capacity: usize, timeout: SimTime) -> Self {
        SendBuffer {
            capacity,
            timeout,
            packets: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Buffers `packet`, returning the oldest packet when it had to make
    /// room.
    pub fn push(&mut self, now: SimTime, packet: DataPacket) -> Option<DataPacket> {
        let evicted = if self.packets.len() >= self.capacity {
            self.packets.pop_front().map(|(_, p)| p)
        } else {
            None
        };
        self.packets.push_back((now, packet));
        evicted
    }

    pub fn has_target(&self, target: NodeId) -> bool {
        self.packets.iter().any(|(_, p)| p.target == target)
    }

    pub fn targets(&self) -> Vec<NodeId> {
        let mut t: Vec<_> = self.packets.iter().map(|(_, p)| p.target).collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Removes and returns every packet for which `pred` holds, in order.
    pub fn take_where(&mut self, mut pred: impl FnMut(&DataPacket) -> bool) -> Vec<DataPacket> {
        let mut taken = Vec::new();
        self.packets.retain(|(_, p)| {
            if pred(p) {
                taken.push(p.clone());
                false
            } else {
                true
            }
        });
        taken
    }

    /// Removes packets buffered for longer than the timeout.
    pub fn expire(&mut self, now: SimTime) -> Vec<DataPacket> {
        let mut expired = Vec::new();
        while let Some((at, _)) = self.packets.front() {
            if now.saturating_sub(*at) < self.timeout {
                break;
            }
            expired.push(self.packets.pop_front().unwrap().1);
        }
        expired
    }
}
