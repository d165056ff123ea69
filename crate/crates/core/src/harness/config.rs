use std::path::Path;

use serde::Deserialize;

use crate::engine::mobility::Arena;
use crate::engine::{EngineConfig, MacConfig, Placement, RadioConfig, SimTime};
use crate::error::{Error, Result};
use crate::protocols::{Mode, ProtocolKind, ProtocolOverrides, ProtocolParams};
use crate::traffic_metrics::TrafficConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    /// Width and height in meters.
    pub arena: [f64; 2],
    pub duration: f64,
    pub nodes: usize,
    pub pause_time: f64,
    pub speed: f64,
    pub connections: usize,
    pub seed: u64,
    /// Metric sampling period for the trace log; 0 disables sampling.
    pub sample_interval: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            arena: [1000.0, 1000.0],
            duration: 900.0,
            nodes: 50,
            pause_time: 0.0,
            speed: 30.0,
            connections: 10,
            seed: 1,
            sample_interval: 0.0,
        }
    }
}

/// `name` and `mode` plus any individual parameter override.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct ProtocolSection {
    pub name: ProtocolKind,
    pub mode: Mode,
    pub overrides: ProtocolOverrides,
}

impl TryFrom<toml::Table> for ProtocolSection {
    type Error = Error;

    fn try_from(mut table: toml::Table) -> Result<Self> {
        let mut take = |key: &str| -> Result<String> {
            match table.remove(key) {
                Some(toml::Value::String(s)) => Ok(s),
                Some(other) => Err(Error::Config(format!("protocol.{key} must be a string, got {other}"))),
                None => Err(Error::Config(format!("protocol.{key} is required"))),
            }
        };
        let name = take("name")?.parse()?;
        let mode = take("mode")?.parse()?;
        let overrides = ProtocolOverrides::deserialize(toml::Value::Table(table))
            .map_err(|e| Error::Config(format!("[protocol]: {e}")))?;
        Ok(ProtocolSection { name, mode, overrides })
    }
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            name: ProtocolKind::Dsr,
            mode: Mode::Orig,
            overrides: ProtocolOverrides::default(),
        }
    }
}

/// Sweep axes; an empty list keeps the scenario's single value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixSection {
    pub protocol: Vec<ProtocolKind>,
    pub mode: Vec<Mode>,
    pub nodes: Vec<usize>,
    pub pause_time: Vec<f64>,
    pub connections: Vec<usize>,
    pub seeds: Vec<u64>,
}

/// A complete scenario file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub protocol: ProtocolSection,
    pub radio: RadioConfig,
    pub mac: MacConfig,
    pub traffic: TrafficConfig,
    pub matrix: MatrixSection,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The quick desk-scale preset: 100 s runs over 25 and 50 nodes, pause
    /// times 0 and 400 s, 10 and 30 connections, five seeds, every protocol
    /// and mode.
    pub fn desk_preset() -> Self {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.duration = 100.0;
        cfg.matrix = MatrixSection {
            protocol: ProtocolKind::ALL.to_vec(),
            mode: Mode::ALL.to_vec(),
            nodes: vec![25, 50],
            pause_time: vec![0.0, 400.0],
            connections: vec![10, 30],
            seeds: (1..=5).collect(),
        };
        cfg
    }

    /// Full-length matrix: 900 s, four pause times, every protocol and mode.
    pub fn full_preset() -> Self {
        let mut cfg = ScenarioConfig::default();
        cfg.matrix = MatrixSection {
            protocol: ProtocolKind::ALL.to_vec(),
            mode: Mode::ALL.to_vec(),
            nodes: vec![50],
            pause_time: vec![0.0, 100.0, 200.0, 400.0],
            connections: vec![10],
            seeds: (1..=5).collect(),
        };
        cfg
    }

    pub fn protocol_params(&self) -> Result<ProtocolParams> {
        let mut params = ProtocolParams::new(self.protocol.name, self.protocol.mode);
        self.protocol.overrides.apply(&mut params)?;
        Ok(params)
    }

    pub fn engine_config(&self) -> EngineConfig {
        let s = &self.scenario;
        EngineConfig {
            arena: Arena {
                width: s.arena[0],
                height: s.arena[1],
            },
            duration: SimTime::from_secs_f64(s.duration),
            nodes: s.nodes,
            placement: Placement::RandomWaypoint {
                speed: s.speed,
                pause_time: s.pause_time,
            },
            radio: self.radio.clone(),
            mac: self.mac,
            seed: s.seed,
            sample_interval: SimTime::from_secs_f64(s.sample_interval.max(0.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if !(s.duration > 0.0) {
            return Err(Error::Config("scenario.duration must be > 0".into()));
        }
        if s.nodes < 2 {
            return Err(Error::Config("scenario.nodes must be >= 2".into()));
        }
        if !(s.pause_time >= 0.0 && s.speed >= 0.0) {
            return Err(Error::Config("pause_time and speed must be >= 0".into()));
        }
        self.protocol_params()?;
        self.engine_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let m = &self.matrix;
        if m.nodes.iter().any(|&n| n < 2) || m.pause_time.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Config("matrix axes hold invalid values".into()));
        }
        Ok(())
    }
}
