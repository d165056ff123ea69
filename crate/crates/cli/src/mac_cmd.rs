use std::io;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;
use vanet_core::mac_model::{
    conditional_success_collision_with, slot_outcome_probs, tx_probability_from_cw, virtual_tx_time,
};
use vanet_core::{MacParams, SuccessForm};

#[derive(Subcommand)]
pub enum MacCommand {
    /// One CSV row for a single (p, Q) point.
    Eval {
        #[command(flatten)]
        point: Point,
    },
    /// One CSV row per point while sweeping Q or p.
    Sweep {
        #[command(flatten)]
        point: Point,
        #[arg(long, value_enum)]
        over: SweepAxis,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        step: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SweepAxis {
    Q,
    P,
}

#[derive(Args, Clone)]
pub struct Point {
    /// Per-slot transmission probability.
    #[arg(long, conflicts_with = "cw")]
    p: Option<f64>,
    /// Mean contention window; sets `p = 2 / (cw + 1)`.
    #[arg(long)]
    cw: Option<f64>,
    /// Number of contenders.
    #[arg(short = 'Q', long = "q", default_value_t = 10)]
    q: u32,
    /// Slot length in seconds.
    #[arg(long, default_value_t = 13e-6)]
    tau_slot: f64,
    /// Packet time, seconds (slots with `--slots`).
    #[arg(long, default_value_t = 780e-6)]
    tau_pack: f64,
    /// DIFS, seconds (slots with `--slots`).
    #[arg(long, default_value_t = 58e-6)]
    tau_difs: f64,
    /// Read `--tau-pack` and `--tau-difs` as slot counts.
    #[arg(long)]
    slots: bool,
    /// Conditional success form: corrected or printed.
    #[arg(long, default_value = "corrected")]
    form: SuccessForm,
}

#[derive(Serialize)]
struct Row {
    p: f64,
    #[serde(rename = "Q")]
    q: u32,
    p_none: f64,
    p_one: f64,
    p_any: f64,
    p_s: f64,
    p_c: f64,
    t_idle: f64,
    t_coll: f64,
    t_succ: f64,
    t_total: f64,
}

impl Point {
    fn p(&self) -> Result<f64> {
        match (self.p, self.cw) {
            (Some(p), _) => Ok(p),
            (None, Some(cw)) => Ok(tx_probability_from_cw(cw)?),
            (None, None) => bail!("one of --p or --cw is required"),
        }
    }

    fn params(&self, p: f64, q: u32) -> Result<MacParams> {
        Ok(if self.slots {
            MacParams::new(p, q, self.tau_slot, self.tau_pack, self.tau_difs)?
        } else {
            MacParams::from_seconds(p, q, self.tau_slot, self.tau_pack, self.tau_difs)?
        })
    }

    fn row(&self, p: f64, q: u32) -> Result<Row> {
        let params = self.params(p, q)?;
        let probs = slot_outcome_probs(&params)?;
        let (p_s, p_c) = conditional_success_collision_with(&params, self.form)?;
        let t = virtual_tx_time(&params)?;
        Ok(Row {
            p,
            q,
            p_none: probs.p_none,
            p_one: probs.p_one,
            p_any: probs.p_any,
            p_s,
            p_c,
            t_idle: t.t_idle,
            t_coll: t.t_coll,
            t_succ: t.t_succ,
            t_total: t.t_total,
        })
    }
}

fn sweep_points(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(to >= from) {
        bail!("sweep needs step > 0 and to >= from");
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

pub fn run(cmd: MacCommand) -> Result<ExitCode> {
    let mut out = csv::Writer::from_writer(io::stdout().lock());
    match cmd {
        MacCommand::Eval { point } => out.serialize(point.row(point.p()?, point.q)?)?,
        MacCommand::Sweep {
            point,
            over,
            from,
            to,
            step,
        } => {
            for v in sweep_points(from, to, step)? {
                let row = match over {
                    SweepAxis::Q => {
                        if v < 1.0 || v.fract() != 0.0 {
                            bail!("Q sweep values must be positive integers, got {v}");
                        }
                        point.row(point.p()?, v as u32)?
                    }
                    SweepAxis::P => point.row(v, point.q)?,
                };
                out.serialize(row)?;
            }
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
