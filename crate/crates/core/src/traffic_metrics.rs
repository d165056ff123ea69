//! CBR flows and the throughput / end-to-end delay / normalized routing
//! load metrics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::engine::frame::FrameKind;
use crate::engine::time::SimTime;
use crate::error::{domain, Error, Result};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    /// Packets per second per flow.
    pub rate: f64,
    pub packet_size: u32,
    /// Flow start times are drawn uniformly from `[0, start_window]`.
    pub start_window: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            rate: 4.0,
            packet_size: 512,
            start_window: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub src: NodeId,
    pub dst: NodeId,
    pub packet_size: u32,
    pub rate: f64,
    pub start: SimTime,
    pub stop: SimTime,
}

impl Flow {
    pub fn interval(&self) -> SimTime {
        SimTime::from_secs_f64(1.0 / self.rate)
    }
}

/// Draws `n_connections` distinct ordered `(src, dst)` pairs with staggered
/// starts. Flows stop at `stop`.
pub fn spawn_flows(
    n_connections: usize,
    nodes: usize,
    seed: u64,
    traffic: &TrafficConfig,
    stop: SimTime,
) -> Result<Vec<Flow>> {
    let pairs = nodes.saturating_mul(nodes.saturating_sub(1));
    if n_connections > pairs {
        return domain(format!(
            "{n_connections} connections exceed the {pairs} ordered pairs of {nodes} nodes"
        ));
    }
    if !(traffic.rate > 0.0) || traffic.packet_size == 0 {
        return domain("traffic rate and packet size must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xf10);
    // Index `k` encodes the pair (k / (n-1), k % (n-1)) with dst skipping src.
    let picks = sample(&mut rng, pairs, n_connections);
    let mut flows = Vec::with_capacity(n_connections);
    for k in picks.iter() {
        let src = k / (nodes - 1);
        let mut dst = k % (nodes - 1);
        if dst >= src {
            dst += 1;
        }
        let start = SimTime::from_secs_f64(rng.random_range(0.0..=traffic.start_window));
        flows.push(Flow {
            src,
            dst,
            packet_size: traffic.packet_size,
            rate: traffic.rate,
            start: start.min(stop),
            stop,
        });
    }
    Ok(flows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropCause {
    QueueOverflow,
    BufferOverflow,
    BufferTimeout,
    DiscoveryFailed,
    NoRoute,
    LinkBreak,
    SalvageLimit,
    TtlExpired,
}

impl DropCause {
    pub const ALL: [DropCause; 8] = [
        DropCause::QueueOverflow,
        DropCause::BufferOverflow,
        DropCause::BufferTimeout,
        DropCause::DiscoveryFailed,
        DropCause::NoRoute,
        DropCause::LinkBreak,
        DropCause::SalvageLimit,
        DropCause::TtlExpired,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DropCause::QueueOverflow => "queue-overflow",
            DropCause::BufferOverflow => "buffer-overflow",
            DropCause::BufferTimeout => "buffer-timeout",
            DropCause::DiscoveryFailed => "discovery-failed",
            DropCause::NoRoute => "no-route",
            DropCause::LinkBreak => "link-break",
            DropCause::SalvageLimit => "salvage-limit",
            DropCause::TtlExpired => "ttl-expired",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == s)
    }
}

impl fmt::Display for DropCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: [u64; DropCause::ALL.len()],
    pub in_flight: u64,
    /// Indexed by [`FrameKind::index`]; the data slot stays zero.
    pub control: [u64; 7],
}

impl Counters {
    pub fn dropped_by(&self, cause: DropCause) -> u64 {
        self.dropped[cause as usize]
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped.iter().sum()
    }

    pub fn control_of(&self, kind: FrameKind) -> u64 {
        self.control[kind.index()]
    }

    pub fn control_total(&self) -> u64 {
        self.control.iter().sum()
    }
}

/// Accumulates per-run metric events.
#[derive(Debug, Clone, Default)]
pub struct MetricsCollector {
    send_times: HashMap<u64, SimTime>,
    live: HashSet<u64>,
    delivered: HashSet<u64>,
    drop_causes: HashMap<u64, DropCause>,
    delay_sum_ns: u128,
    counters: Counters,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_send(&mut self, packet: u64, at: SimTime) {
        self.counters.sent += 1;
        self.send_times.insert(packet, at);
        self.live.insert(packet);
    }

    /// Records a delivery; later arrivals of the same packet are ignored.
    /// Returns whether this was the first arrival.
    pub fn record_delivery(&mut self, packet: u64, at: SimTime) -> Result<bool> {
        let sent = *self.send_times.get(&packet).ok_or_else(|| {
            Error::Logic(format!("delivery of packet {packet} without a send record"))
        })?;
        if !self.delivered.insert(packet) {
            return Ok(false);
        }
        if !self.live.remove(&packet) {
            // A copy was dropped elsewhere but this one made it through.
            if let Some(cause) = self.drop_causes.remove(&packet) {
                self.counters.dropped[cause as usize] -= 1;
            }
        }
        self.counters.delivered += 1;
        self.delay_sum_ns += u128::from((at - sent).as_nanos());
        Ok(true)
    }

    /// Records a drop of a still-live packet. Returns false when the packet
    /// was already delivered or dropped.
    pub fn record_drop(&mut self, packet: u64, cause: DropCause) -> bool {
        if !self.live.remove(&packet) {
            return false;
        }
        self.counters.dropped[cause as usize] += 1;
        self.drop_causes.insert(packet, cause);
        true
    }

    pub fn is_live(&self, packet: u64) -> bool {
        self.live.contains(&packet)
    }

    pub fn record_control(&mut self, kind: FrameKind) {
        debug_assert!(kind.is_control());
        self.counters.control[kind.index()] += 1;
    }

    pub fn counters(&self) -> Counters {
        Counters {
            in_flight: self.live.len() as u64,
            ..self.counters
        }
    }

    pub fn report(&self, duration: SimTime, packet_size: u32) -> MetricsReport {
        MetricsReport::from_parts(self.counters(), self.delay_sum_ns, duration, packet_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub throughput_kbps: f64,
    /// Mean delay of delivered packets; `None` when nothing was delivered.
    pub e2ed_s: Option<f64>,
    /// Control transmissions per delivered packet; `+inf` when nothing was
    /// delivered (see `nrl_defined`).
    pub nrl: f64,
    pub nrl_defined: bool,
    pub counters: Counters,
}

impl MetricsReport {
    fn from_parts(counters: Counters, delay_sum_ns: u128, duration: SimTime, packet_size: u32) -> Self {
        let delivered = counters.delivered;
        let seconds = duration.as_secs_f64();
        let throughput_kbps = if seconds > 0.0 {
            delivered as f64 * f64::from(packet_size) * 8.0 / seconds / 1000.0
        } else {
            0.0
        };
        let (e2ed_s, nrl, nrl_defined) = if delivered == 0 {
            (None, f64::INFINITY, false)
        } else {
            let mean_ns = delay_sum_ns as f64 / delivered as f64;
            (
                Some(mean_ns * 1e-9),
                counters.control_total() as f64 / delivered as f64,
                true,
            )
        };
        MetricsReport {
            throughput_kbps,
            e2ed_s,
            nrl,
            nrl_defined,
            counters,
        }
    }

    pub fn pdr(&self) -> f64 {
        if self.counters.sent == 0 {
            0.0
        } else {
            self.counters.delivered as f64 / self.counters.sent as f64
        }
    }

    /// `sent == delivered + dropped + in_flight`.
    pub fn conserves_packets(&self) -> bool {
        let c = &self.counters;
        c.sent == c.delivered + c.dropped_total() + c.in_flight
    }
}

pub const TRACE_HEADER: &str = "# vanetlab-trace v1";

/// Recomputes a report from the metric lines of a trace log.
pub fn metrics_from_trace(reader: impl BufRead) -> Result<MetricsReport> {
    let mut collector = MetricsCollector::new();
    let mut duration = None;
    let mut packet_size = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let bad = || Error::Domain(format!("trace line {}: malformed `{line}`", lineno + 1));
        if let Some(header) = line.strip_prefix(TRACE_HEADER) {
            for field in header.split_whitespace() {
                match field.split_once('=') {
                    Some(("duration_ns", v)) => duration = v.parse().ok().map(SimTime::from_nanos),
                    Some(("packet_bytes", v)) => packet_size = v.parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let time = cols.next().and_then(SimTime::parse_trace).ok_or_else(bad)?;
        let kind = cols.next().ok_or_else(bad)?;
        let _node = cols.next().ok_or_else(bad)?;
        let detail = cols.next().unwrap_or("");
        let field = |key: &str| {
            detail
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        };
        let packet = || field("pkt").and_then(|v| v.parse::<u64>().ok());
        match kind {
            "app-send" => collector.record_send(packet().ok_or_else(bad)?, time),
            "app-recv" => {
                collector.record_delivery(packet().ok_or_else(bad)?, time)?;
            }
            "drop" => {
                let cause = field("cause").and_then(DropCause::from_label).ok_or_else(bad)?;
                collector.record_drop(packet().ok_or_else(bad)?, cause);
            }
            "ctrl-tx" => {
                let kind = field("kind").and_then(FrameKind::from_label).ok_or_else(bad)?;
                collector.record_control(kind);
            }
            _ => {}
        }
    }
    let duration = duration.ok_or_else(|| Error::Domain("trace has no header".into()))?;
    Ok(collector.report(duration, packet_size.unwrap_or(512)))
}
