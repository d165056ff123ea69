use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::RunRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    PauseTime,
    Nodes,
    Connections,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::PauseTime => "pause_time",
            Axis::Nodes => "nodes",
            Axis::Connections => "connections",
        }
    }

    fn value(self, row: &RunRow) -> f64 {
        match self {
            Axis::PauseTime => row.pause_time,
            Axis::Nodes => row.nodes as f64,
            Axis::Connections => row.connections as f64,
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pause_time" => Ok(Axis::PauseTime),
            "nodes" => Ok(Axis::Nodes),
            "connections" => Ok(Axis::Connections),
            _ => Err(Error::Config(format!("unknown axis `{s}` (pause_time, nodes, connections)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Throughput,
    Delay,
    RoutingLoad,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Throughput, Metric::Delay, Metric::RoutingLoad];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Throughput => "throughput_kbps",
            Metric::Delay => "e2ed_s",
            Metric::RoutingLoad => "nrl",
        }
    }

    /// `None` for undefined values (no deliveries).
    pub fn value(self, row: &RunRow) -> Option<f64> {
        match self {
            Metric::Throughput => Some(row.throughput_kbps),
            Metric::Delay => row.e2ed_s,
            Metric::RoutingLoad => row.nrl_defined.then_some(row.nrl),
        }
    }
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Some(Summary { mean, stderr, n })
}

/// `(new - base) / base * 100`; `None` for a zero base.
pub fn relative_change(base: f64, new: f64) -> Option<f64> {
    (base != 0.0).then(|| (new - base) / base * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub metric: &'static str,
    pub axis: &'static str,
    pub protocol: String,
    pub axis_value: f64,
    pub orig_mean: f64,
    pub orig_stderr: f64,
    pub orig_n: usize,
    pub mod_mean: f64,
    pub mod_stderr: f64,
    pub mod_n: usize,
    pub relative_change_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub axis: Axis,
    pub groups: Vec<GroupComparison>,
    pub skipped: Vec<String>,
}

fn key(v: f64) -> i64 {
    (v * 1e6).round() as i64
}

/// Per (protocol, axis value) orig-vs-mod comparison of every metric.
/// Failed runs and undefined metric values are left out; groups missing a
/// mode are skipped with a warning.
pub fn compare(rows: &[RunRow], axis: Axis) -> ComparisonReport {
    // (protocol, axis value) -> mode -> rows
    let mut groups: BTreeMap<(String, i64), BTreeMap<String, Vec<&RunRow>>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.is_ok()) {
        groups
            .entry((row.protocol.clone(), key(axis.value(row))))
            .or_default()
            .entry(row.mode.clone())
            .or_default()
            .push(row);
    }
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for ((protocol, k), modes) in &groups {
        let axis_value = *k as f64 / 1e6;
        let (Some(orig), Some(modded)) = (modes.get("orig"), modes.get("mod")) else {
            let msg = format!("{protocol} {}={axis_value}: missing a mode", axis.label());
            log::warn!("skipping group {msg}");
            skipped.push(msg);
            continue;
        };
        for metric in Metric::ALL {
            let vals = |rs: &[&RunRow]| rs.iter().filter_map(|r| metric.value(r)).collect::<Vec<_>>();
            let (Some(o), Some(m)) = (summarize(&vals(orig)), summarize(&vals(modded))) else {
                skipped.push(format!("{protocol} {}={axis_value} {}: no defined values", axis.label(), metric.label()));
                continue;
            };
            out.push(GroupComparison {
                metric: metric.label(),
                axis: axis.label(),
                protocol: protocol.clone(),
                axis_value,
                orig_mean: o.mean,
                orig_stderr: o.stderr,
                orig_n: o.n,
                mod_mean: m.mean,
                mod_stderr: m.stderr,
                mod_n: m.n,
                relative_change_pct: relative_change(o.mean, m.mean),
            });
        }
    }
    ComparisonReport {
        axis,
        groups: out,
        skipped,
    }
}

impl ComparisonReport {
    pub fn find(&self, metric: Metric, protocol: &str, axis_value: f64) -> Option<&GroupComparison> {
        self.groups
            .iter()
            .find(|g| g.metric == metric.label() && g.protocol == protocol && key(g.axis_value) == key(axis_value))
    }

    /// Writes `comparison_<axis>.csv` plus one plot table per metric,
    /// `plot_<metric>_by_<axis>.tsv`, with a mean and stderr column per
    /// protocol-mode series.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("comparison_{}.csv", self.axis.label())))?;
        for g in &self.groups {
            w.serialize(g)?;
        }
        w.flush()?;
        for metric in Metric::ALL {
            std::fs::write(
                dir.join(format!("plot_{}_by_{}.tsv", metric.label(), self.axis.label())),
                self.plot_table(metric),
            )?;
        }
        Ok(())
    }

    pub fn plot_table(&self, metric: Metric) -> String {
        let rows: Vec<&GroupComparison> = self.groups.iter().filter(|g| g.metric == metric.label()).collect();
        let mut protocols: Vec<&str> = rows.iter().map(|g| g.protocol.as_str()).collect();
        protocols.sort_unstable();
        protocols.dedup();
        let mut values: Vec<i64> = rows.iter().map(|g| key(g.axis_value)).collect();
        values.sort_unstable();
        values.dedup();

        let mut out = String::from(self.axis.label());
        for p in &protocols {
            for mode in ["orig", "mod"] {
                let _ = write!(out, "\t{p}-{mode}\t{p}-{mode}_stderr");
            }
        }
        out.push('\n');
        for v in values {
            let _ = write!(out, "{}", v as f64 / 1e6);
            for p in &protocols {
                let g = rows.iter().find(|g| g.protocol == *p && key(g.axis_value) == v);
                match g {
                    Some(g) => {
                        let _ = write!(
                            out,
                            "\t{}\t{}\t{}\t{}",
                            g.orig_mean, g.orig_stderr, g.mod_mean, g.mod_stderr
                        );
                    }
                    None => out.push_str("\tNaN\tNaN\tNaN\tNaN"),
                }
            }
            out.push('\n');
        }
        out
    }
}
