//! Batch experiments: scenario files, single runs, parallel matrices and
//! orig-vs-mod comparisons.

pub mod compare;
pub mod config;
pub mod matrix;

use serde::{Deserialize, Serialize};

use crate::engine::{RunOutcome, Simulation, TraceSink};
use crate::error::Result;
use crate::protocols::{build_agents, Agent};
use crate::traffic_metrics::{spawn_flows, DropCause};
pub use compare::{compare, ComparisonReport, GroupComparison};
pub use config::ScenarioConfig;
pub use matrix::{expand_matrix, run_matrix, MatrixSummary};

/// Version of the results CSV column set.
pub const SCHEMA_VERSION: u32 = 1;

/// One results row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub schema_version: u32,
    pub scenario: String,
    pub protocol: String,
    pub mode: String,
    pub nodes: usize,
    pub pause_time: f64,
    pub connections: usize,
    pub seed: u64,
    pub status: String,
    pub error: String,
    pub throughput_kbps: f64,
    pub e2ed_s: Option<f64>,
    pub nrl: f64,
    pub nrl_defined: bool,
    pub sent: u64,
    pub delivered: u64,
    pub in_flight: u64,
    pub drop_queue_overflow: u64,
    pub drop_buffer_overflow: u64,
    pub drop_buffer_timeout: u64,
    pub drop_discovery_failed: u64,
    pub drop_no_route: u64,
    pub drop_link_break: u64,
    pub drop_salvage_limit: u64,
    pub drop_ttl_expired: u64,
    pub ctrl_rreq: u64,
    pub ctrl_rrep: u64,
    pub ctrl_rerr: u64,
    pub ctrl_fsr_update: u64,
    pub ctrl_hello: u64,
    pub ctrl_tc: u64,
    pub digest: String,
}

impl RunRow {
    fn blank(cfg: &ScenarioConfig) -> Self {
        let s = &cfg.scenario;
        RunRow {
            schema_version: SCHEMA_VERSION,
            scenario: scenario_id(cfg),
            protocol: cfg.protocol.name.to_string(),
            mode: cfg.protocol.mode.to_string(),
            nodes: s.nodes,
            pause_time: s.pause_time,
            connections: s.connections,
            seed: s.seed,
            status: "ok".into(),
            error: String::new(),
            throughput_kbps: 0.0,
            e2ed_s: None,
            nrl: f64::INFINITY,
            nrl_defined: false,
            sent: 0,
            delivered: 0,
            in_flight: 0,
            drop_queue_overflow: 0,
            drop_buffer_overflow: 0,
            drop_buffer_timeout: 0,
            drop_discovery_failed: 0,
            drop_no_route: 0,
            drop_link_break: 0,
            drop_salvage_limit: 0,
            drop_ttl_expired: 0,
            ctrl_rreq: 0,
            ctrl_rrep: 0,
            ctrl_rerr: 0,
            ctrl_fsr_update: 0,
            ctrl_hello: 0,
            ctrl_tc: 0,
            digest: String::new(),
        }
    }

    pub fn failed(cfg: &ScenarioConfig, error: &str) -> Self {
        RunRow {
            status: "failed".into(),
            error: error.to_string(),
            ..Self::blank(cfg)
        }
    }

    pub fn from_outcome(cfg: &ScenarioConfig, outcome: &RunOutcome) -> Self {
        use crate::engine::frame::FrameKind;
        let r = &outcome.report;
        let c = &r.counters;
        RunRow {
            throughput_kbps: r.throughput_kbps,
            e2ed_s: r.e2ed_s,
            nrl: r.nrl,
            nrl_defined: r.nrl_defined,
            sent: c.sent,
            delivered: c.delivered,
            in_flight: c.in_flight,
            drop_queue_overflow: c.dropped_by(DropCause::QueueOverflow),
            drop_buffer_overflow: c.dropped_by(DropCause::BufferOverflow),
            drop_buffer_timeout: c.dropped_by(DropCause::BufferTimeout),
            drop_discovery_failed: c.dropped_by(DropCause::DiscoveryFailed),
            drop_no_route: c.dropped_by(DropCause::NoRoute),
            drop_link_break: c.dropped_by(DropCause::LinkBreak),
            drop_salvage_limit: c.dropped_by(DropCause::SalvageLimit),
            drop_ttl_expired: c.dropped_by(DropCause::TtlExpired),
            ctrl_rreq: c.control_of(FrameKind::Rreq),
            ctrl_rrep: c.control_of(FrameKind::Rrep),
            ctrl_rerr: c.control_of(FrameKind::Rerr),
            ctrl_fsr_update: c.control_of(FrameKind::FsrUpdate),
            ctrl_hello: c.control_of(FrameKind::Hello),
            ctrl_tc: c.control_of(FrameKind::Tc),
            digest: format!("{:016x}", outcome.digest),
            ..Self::blank(cfg)
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Stable ordering key for sorted output.
    pub fn sort_key(&self) -> (String, u64) {
        (self.scenario.clone(), self.seed)
    }
}

pub fn scenario_id(cfg: &ScenarioConfig) -> String {
    let s = &cfg.scenario;
    format!(
        "{}-{}-n{}-p{}-c{}",
        cfg.protocol.name, cfg.protocol.mode, s.nodes, s.pause_time, s.connections
    )
}

pub struct RunResult {
    pub row: RunRow,
    pub outcome: RunOutcome,
    pub agents: Vec<Agent>,
}

/// Runs one seeded scenario end to end.
pub fn run_scenario(cfg: &ScenarioConfig, trace: Option<TraceSink>) -> Result<RunResult> {
    cfg.validate()?;
    let params = cfg.protocol_params()?;
    let engine = cfg.engine_config();
    let flows = spawn_flows(
        cfg.scenario.connections,
        cfg.scenario.nodes,
        cfg.scenario.seed,
        &cfg.traffic,
        engine.duration,
    )?;
    let agents = build_agents(&params, cfg.scenario.nodes);
    let mut sim = Simulation::new(engine, flows, agents)?;
    if let Some(sink) = trace {
        sim = sim.with_trace(sink);
    }
    let (outcome, agents) = sim.run()?;
    Ok(RunResult {
        row: RunRow::from_outcome(cfg, &outcome),
        outcome,
        agents,
    })
}
