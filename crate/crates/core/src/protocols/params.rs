use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use crate::cost_model::MAX_TTL;
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Dsr,
    Fsr,
    Olsr,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Dsr, ProtocolKind::Fsr, ProtocolKind::Olsr];

    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::Dsr => "dsr",
            ProtocolKind::Fsr => "fsr",
            ProtocolKind::Olsr => "olsr",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}` (dsr, fsr, olsr)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Orig,
    Mod,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Orig, Mode::Mod];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Orig => "orig",
            Mode::Mod => "mod",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}` (orig, mod)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsrParams {
    pub non_propagating_ttl: u32,
    pub cache_capacity: usize,
    /// Network-layer retransmission rounds after MAC retry exhaustion
    /// before a link is declared broken.
    pub max_maint_rexmt: u32,
    /// Wait per hop of the non-propagating ring before escalating.
    pub ring_timeout_per_hop: f64,
    /// First network-wide flood timeout; doubles per retry.
    pub flood_timeout: f64,
    pub max_flood_timeout: f64,
    /// Network-wide floods per discovery before giving up.
    pub max_floods: u32,
    pub salvage_limit: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsrParams {
    pub intra_interval: f64,
    pub inter_interval: f64,
    pub intra_radius: u32,
    pub inter_radius: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsrParams {
    pub hello_interval: f64,
    pub tc_interval: f64,
    /// Minimum spacing of triggered TC messages.
    pub min_triggered_gap: f64,
}

/// Settings shared by every protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonParams {
    /// Uniform relative jitter on periodic timers; 0 disables it.
    pub timer_jitter: f64,
    /// Upper bound of the random delay before re-broadcasting a flood.
    pub forward_jitter: f64,
    pub send_buffer_capacity: usize,
    pub send_buffer_timeout: f64,
    /// Lifetime of neighbor and topology state, in update intervals.
    pub hold_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub kind: ProtocolKind,
    pub mode: Mode,
    pub dsr: DsrParams,
    pub fsr: FsrParams,
    pub olsr: OlsrParams,
    pub common: CommonParams,
}

impl ProtocolParams {
    pub fn new(kind: ProtocolKind, mode: Mode) -> Self {
        let orig = mode == Mode::Orig;
        ProtocolParams {
            kind,
            mode,
            dsr: DsrParams {
                non_propagating_ttl: if orig { 1 } else { 3 },
                cache_capacity: if orig { 1024 } else { 256 },
                max_maint_rexmt: 2,
                ring_timeout_per_hop: 0.03,
                flood_timeout: 0.5,
                max_flood_timeout: 10.0,
                max_floods: 4,
                salvage_limit: 15,
            },
            fsr: FsrParams {
                intra_interval: if orig { 5.0 } else { 1.0 },
                inter_interval: if orig { 15.0 } else { 3.0 },
                intra_radius: 2,
                inter_radius: MAX_TTL,
            },
            olsr: OlsrParams {
                hello_interval: if orig { 2.0 } else { 1.0 },
                tc_interval: if orig { 5.0 } else { 3.0 },
                min_triggered_gap: 0.5,
            },
            common: CommonParams {
                timer_jitter: 0.1,
                forward_jitter: 0.01,
                send_buffer_capacity: 64,
                send_buffer_timeout: 30.0,
                hold_factor: 3.0,
            },
        }
    }

    /// The slowest periodic interval of the selected protocol.
    pub fn slowest_interval(&self) -> f64 {
        match self.kind {
            ProtocolKind::Dsr => 0.0,
            ProtocolKind::Fsr => self.fsr.inter_interval,
            ProtocolKind::Olsr => self.olsr.hello_interval.max(self.olsr.tc_interval),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dsr;
        if d.non_propagating_ttl == 0 || d.non_propagating_ttl > MAX_TTL {
            return domain("non_propagating_ttl must be in 1..=255");
        }
        if d.cache_capacity == 0 {
            return domain("cache_capacity must be >= 1");
        }
        if !(d.ring_timeout_per_hop > 0.0 && d.flood_timeout > 0.0 && d.max_flood_timeout >= d.flood_timeout)
            || d.max_floods == 0
        {
            return domain("DSR discovery timeouts must be positive with at least one flood");
        }
        let f = &self.fsr;
        if !(f.intra_interval > 0.0 && f.intra_interval < f.inter_interval) {
            return domain("FSR intervals must satisfy 0 < intra < inter");
        }
        if !(f.intra_radius >= 1 && f.intra_radius < f.inter_radius && f.inter_radius <= MAX_TTL) {
            return domain("FSR radii must satisfy 1 <= intra < inter <= 255");
        }
        let o = &self.olsr;
        if !(o.hello_interval > 0.0 && o.tc_interval > 0.0 && o.min_triggered_gap >= 0.0) {
            return domain("OLSR intervals must be > 0");
        }
        let c = &self.common;
        if !(0.0..1.0).contains(&c.timer_jitter) || !(c.forward_jitter >= 0.0) {
            return domain("timer jitter must be in [0, 1) and forward jitter >= 0");
        }
        if c.send_buffer_capacity == 0 || !(c.send_buffer_timeout > 0.0) || !(c.hold_factor >= 1.0) {
            return domain("send buffer and hold factor must be positive");
        }
        Ok(())
    }
}

/// Individually overridable parameters, as read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolOverrides {
    pub non_propagating_ttl: Option<u32>,
    pub cache_capacity: Option<usize>,
    pub max_maint_rexmt: Option<u32>,
    pub ring_timeout_per_hop: Option<f64>,
    pub flood_timeout: Option<f64>,
    pub max_flood_timeout: Option<f64>,
    pub max_floods: Option<u32>,
    pub salvage_limit: Option<u32>,
    pub intra_interval: Option<f64>,
    pub inter_interval: Option<f64>,
    pub intra_radius: Option<u32>,
    pub inter_radius: Option<u32>,
    pub hello_interval: Option<f64>,
    pub tc_interval: Option<f64>,
    pub min_triggered_gap: Option<f64>,
    pub timer_jitter: Option<f64>,
    pub forward_jitter: Option<f64>,
    pub send_buffer_capacity: Option<usize>,
    pub send_buffer_timeout: Option<f64>,
    pub hold_factor: Option<f64>,
}

impl ProtocolOverrides {
    pub fn apply(&self, p: &mut ProtocolParams) -> Result<()> {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set! {
            non_propagating_ttl => p.dsr.non_propagating_ttl,
            cache_capacity => p.dsr.cache_capacity,
            max_maint_rexmt => p.dsr.max_maint_rexmt,
            ring_timeout_per_hop => p.dsr.ring_timeout_per_hop,
            flood_timeout => p.dsr.flood_timeout,
            max_flood_timeout => p.dsr.max_flood_timeout,
            max_floods => p.dsr.max_floods,
            salvage_limit => p.dsr.salvage_limit,
            intra_interval => p.fsr.intra_interval,
            inter_interval => p.fsr.inter_interval,
            intra_radius => p.fsr.intra_radius,
            inter_radius => p.fsr.inter_radius,
            hello_interval => p.olsr.hello_interval,
            tc_interval => p.olsr.tc_interval,
            min_triggered_gap => p.olsr.min_triggered_gap,
            timer_jitter => p.common.timer_jitter,
            forward_jitter => p.common.forward_jitter,
            send_buffer_capacity => p.common.send_buffer_capacity,
            send_buffer_timeout => p.common.send_buffer_timeout,
            hold_factor => p.common.hold_factor,
        }
        p.validate()
    }
}
