use std::fs::{self, File};
use std::path::Path;
use std::sync::mpsc;

use rayon::prelude::*;

use super::{run_scenario, RunRow, ScenarioConfig};
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.csv";

fn or<T: Clone>(axis: &[T], default: T) -> Vec<T> {
    if axis.is_empty() {
        vec![default]
    } else {
        axis.to_vec()
    }
}

/// Cartesian expansion of the matrix axes times the seeds. Axes left empty
/// keep the template's value.
pub fn expand_matrix(template: &ScenarioConfig) -> Vec<ScenarioConfig> {
    let m = &template.matrix;
    let protocols = or(&m.protocol, template.protocol.name);
    let modes = or(&m.mode, template.protocol.mode);
    let nodes = or(&m.nodes, template.scenario.nodes);
    let pauses = or(&m.pause_time, template.scenario.pause_time);
    let connections = or(&m.connections, template.scenario.connections);
    let seeds = or(&m.seeds, template.scenario.seed);

    let mut points = Vec::new();
    for &protocol in &protocols {
        for &mode in &modes {
            for &n in &nodes {
                for &pause in &pauses {
                    for &conn in &connections {
                        for &seed in &seeds {
                            let mut cfg = template.clone();
                            cfg.matrix = Default::default();
                            cfg.protocol.name = protocol;
                            cfg.protocol.mode = mode;
                            cfg.scenario.nodes = n;
                            cfg.scenario.pause_time = pause;
                            cfg.scenario.connections = conn;
                            cfg.scenario.seed = seed;
                            points.push(cfg);
                        }
                    }
                }
            }
        }
    }
    points
}

#[derive(Debug, Clone)]
pub struct MatrixSummary {
    /// All rows sorted by scenario and seed.
    pub rows: Vec<RunRow>,
    pub failed: usize,
}

/// Runs every matrix point on up to `jobs` threads. Rows are appended to
/// `out_dir/results.csv` as runs complete; the calling thread is the only
/// writer. A failing run yields a `failed` row and the matrix continues.
pub fn run_matrix(template: &ScenarioConfig, jobs: usize, out_dir: Option<&Path>) -> Result<MatrixSummary> {
    let points = expand_matrix(template);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;

    let mut writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(csv::Writer::from_writer(File::create(dir.join(RESULTS_FILE))?))
        }
        None => None,
    };

    let (tx, rx) = mpsc::channel::<RunRow>();
    let mut rows = Vec::with_capacity(points.len());
    let mut write_error = None;
    std::thread::scope(|scope| {
        scope.spawn(|| {
            pool.install(|| {
                points.par_iter().for_each_with(tx, |tx, cfg| {
                    let row = match run_scenario(cfg, None) {
                        Ok(r) => r.row,
                        Err(e) => {
                            log::warn!("run {} seed {} failed: {e}", super::scenario_id(cfg), cfg.scenario.seed);
                            RunRow::failed(cfg, &e.to_string())
                        }
                    };
                    // The receiver outlives every sender.
                    let _ = tx.send(row);
                });
            });
        });
        for row in rx {
            if let Some(w) = writer.as_mut() {
                let res = w.serialize(&row).and_then(|_| w.flush().map_err(csv::Error::from));
                if let Err(e) = res {
                    write_error.get_or_insert(e);
                }
            }
            log::info!("finished {} seed {} ({})", row.scenario, row.seed, row.status);
            rows.push(row);
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    rows.sort_by_key(RunRow::sort_key);
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    Ok(MatrixSummary { rows, failed })
}

/// Reads every results row under `dir` (its `results.csv`) or from a CSV
/// file path.
pub fn read_rows(path: &Path) -> Result<Vec<RunRow>> {
    let file = if path.is_dir() { path.join(RESULTS_FILE) } else { path.to_path_buf() };
    let mut reader = csv::Reader::from_path(&file)?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("schema_version") {
        return Err(Error::Config(format!("{} is not a results file", file.display())));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let version: u32 = record
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config("unreadable schema_version".into()))?;
        if version != super::SCHEMA_VERSION {
            return Err(Error::Schema {
                found: version,
                expected: super::SCHEMA_VERSION,
            });
        }
        rows.push(record.deserialize(Some(&headers))?);
    }
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{Mode, ProtocolKind};

    #[test]
    fn expansion_counts() {
        let mut cfg = ScenarioConfig::default();
        cfg.matrix.pause_time = vec![0.0, 100.0, 200.0, 400.0];
        cfg.matrix.mode = Mode::ALL.to_vec();
        cfg.matrix.seeds = vec![1, 2, 3];
        assert_eq!(expand_matrix(&cfg).len(), 24);

        let full = ScenarioConfig::full_preset();
        let points = expand_matrix(&full);
        assert_eq!(points.len(), 4 * 3 * 2 * full.matrix.seeds.len());
        assert!(points.iter().all(|p| p.scenario.duration == 900.0));
        let desk = expand_matrix(&ScenarioConfig::desk_preset());
        assert_eq!(desk.len(), 3 * 2 * 2 * 2 * 2 * 5);
        assert!(desk.iter().any(|p| p.protocol.name == ProtocolKind::Olsr));
    }
}
