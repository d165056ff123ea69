//! Closed-form p-persistent CSMA/CA model.
//!
//! Every contender transmits in an idle slot with fixed probability `p`, so
//! its back-off is geometric. With `Q` saturated contenders the channel
//! alternates between idle slots and busy periods; a busy period carrying
//! exactly one transmitter is a success, anything more is a collision. The
//! interval between two successes (the virtual transmission time) is a
//! renewal cycle whose expected length has a closed form, checked here
//! against a slot-level Monte Carlo estimator.
//!
//! Durations `tau_pack` and `tau_difs` are carried in slot units; a busy
//! period costs `(tau_pack + tau_difs) * tau_slot` seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};

/// Which numerator to use for the conditional success probability.
///
/// `Corrected` uses `Q p (1-p)^(Q-1)`, which is consistent with the
/// single-transmission probability and makes `p_s + p_c = 1`. `Printed`
/// uses the exponent `Q` and is kept for side-by-side comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SuccessForm {
    #[default]
    Corrected,
    Printed,
}

impl std::str::FromStr for SuccessForm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "corrected" => Ok(Self::Corrected),
            "printed" => Ok(Self::Printed),
            other => Err(format!("unknown success form `{other}` (corrected|printed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacParams {
    /// Per-slot transmission probability, in (0, 1].
    pub p: f64,
    /// Number of contending nodes.
    pub q: u32,
    /// Slot duration in seconds.
    pub tau_slot: f64,
    /// Packet transmission time in slots.
    pub tau_pack: f64,
    /// DIFS in slots.
    pub tau_difs: f64,
}

impl MacParams {
    pub fn new(p: f64, q: u32, tau_slot: f64, tau_pack: f64, tau_difs: f64) -> Result<Self> {
        let params = Self {
            p,
            q,
            tau_slot,
            tau_pack,
            tau_difs,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds parameters from durations given in seconds; packet and DIFS
    /// times are divided by the slot length.
    pub fn from_seconds(p: f64, q: u32, slot_s: f64, pack_s: f64, difs_s: f64) -> Result<Self> {
        if !(slot_s > 0.0) {
            return domain(format!("tau_slot must be > 0, got {slot_s}"));
        }
        Self::new(p, q, slot_s, pack_s / slot_s, difs_s / slot_s)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.p)?;
        if self.q == 0 {
            return domain("Q must be >= 1");
        }
        if !(self.tau_slot > 0.0) {
            return domain(format!("tau_slot must be > 0, got {}", self.tau_slot));
        }
        if !(self.tau_pack >= 1.0) {
            return domain(format!("tau_pack must be >= 1 slot, got {}", self.tau_pack));
        }
        if !(self.tau_difs >= 0.0) {
            return domain(format!("tau_difs must be >= 0, got {}", self.tau_difs));
        }
        Ok(())
    }

    /// Busy-period length `tau_pack + tau_difs`, in slots.
    pub fn busy_slots(&self) -> f64 {
        self.tau_pack + self.tau_difs
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        domain(format!("transmission probability must lie in (0, 1], got {p}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcomeProbs {
    pub p_none: f64,
    pub p_one: f64,
    pub p_any: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualTxTime {
    pub t_idle: f64,
    pub t_coll: f64,
    pub t_succ: f64,
    pub t_total: f64,
}

/// `P(X = z) = (1-p)^(z-1) p`: first success on trial `z`.
pub fn geom_success_pmf(p: f64, z: u32) -> Result<f64> {
    check_probability(p)?;
    if z == 0 {
        return domain("trial index z must be >= 1");
    }
    Ok((1.0 - p).powi(z as i32 - 1) * p)
}

/// Mean contention window `2/p - 1`, from `(CW + 1) / 2 = 1/p`.
pub fn avg_contention_window(p: f64) -> Result<f64> {
    check_probability(p)?;
    Ok(2.0 / p - 1.0)
}

/// Inverse of [`avg_contention_window`].
pub fn tx_probability_from_cw(cw: f64) -> Result<f64> {
    if !(cw >= 1.0) {
        return domain(format!("contention window must be >= 1, got {cw}"));
    }
    Ok(2.0 / (cw + 1.0))
}

pub fn slot_outcome_probs(params: &MacParams) -> Result<SlotOutcomeProbs> {
    params.validate()?;
    let MacParams { p, q, .. } = *params;
    let idle = 1.0 - p;
    let p_none = idle.powi(q as i32);
    let p_one = f64::from(q) * p * idle.powi(q as i32 - 1);
    // 1 - (1-p)^Q without cancellation for small p.
    let p_any = if p < 1.0 {
        -(f64::from(q) * (-p).ln_1p()).exp_m1()
    } else {
        1.0
    };
    Ok(SlotOutcomeProbs { p_none, p_one, p_any })
}

/// Success and collision probabilities conditioned on a busy slot.
pub fn conditional_success_collision(params: &MacParams) -> Result<(f64, f64)> {
    conditional_success_collision_with(params, SuccessForm::Corrected)
}

pub fn conditional_success_collision_with(
    params: &MacParams,
    form: SuccessForm,
) -> Result<(f64, f64)> {
    let probs = slot_outcome_probs(params)?;
    if probs.p_any <= 0.0 {
        return domain("no slot is ever busy; conditioning event has probability zero");
    }
    match form {
        SuccessForm::Corrected => {
            let p_s = probs.p_one / probs.p_any;
            Ok((p_s, 1.0 - p_s))
        }
        SuccessForm::Printed => {
            let MacParams { p, q, .. } = *params;
            let numerator = f64::from(q) * p * (1.0 - p).powi(q as i32);
            let p_s = numerator / probs.p_any;
            let p_c = (probs.p_any - probs.p_one) / probs.p_any;
            Ok((p_s, p_c))
        }
    }
}

/// Expected duration of one renewal cycle ending in a success.
pub fn virtual_tx_time(params: &MacParams) -> Result<VirtualTxTime> {
    let probs = slot_outcome_probs(params)?;
    let idle = probs.p_none;
    let success = probs.p_one;
    if success <= 0.0 {
        return domain(format!(
            "success probability is zero for p={}, Q={}",
            params.p, params.q
        ));
    }
    let collision = (1.0 - idle - success).max(0.0);
    let busy = params.busy_slots();
    let slot = params.tau_slot;

    let t_idle = idle / success * slot;
    let t_coll = collision / success * busy * slot;
    let t_succ = busy * slot;
    let t_total = (busy - (busy - 1.0) * idle) / success * slot;
    Ok(VirtualTxTime {
        t_idle,
        t_coll,
        t_succ,
        t_total,
    })
}

/// Slot-level Monte Carlo estimate of [`virtual_tx_time`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: VirtualTxTime,
    /// Standard error of `mean.t_total`.
    pub t_total_std_error: f64,
    /// Busy periods with two or more transmitters.
    pub collisions: u64,
    /// All busy periods.
    pub busy_periods: u64,
}

impl MonteCarloEstimate {
    /// Observed collision fraction among busy periods.
    pub fn collision_rate(&self) -> f64 {
        self.collisions as f64 / self.busy_periods as f64
    }
}

pub fn monte_carlo_virtual_tx_time(
    params: &MacParams,
    n_successes: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    params.validate()?;
    if n_successes == 0 {
        return domain("n_successes must be >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slot = params.tau_slot;
    let busy = params.busy_slots() * slot;

    let (mut idle_sum, mut coll_sum) = (0.0, 0.0);
    let (mut cycle_sum, mut cycle_sq_sum) = (0.0, 0.0);
    let (mut collisions, mut busy_periods) = (0u64, 0u64);
    let mut successes = 0u64;
    let mut cycle = 0.0;

    while successes < n_successes {
        let transmitters = (0..params.q).filter(|_| rng.random_bool(params.p)).count();
        match transmitters {
            0 => {
                idle_sum += slot;
                cycle += slot;
            }
            1 => {
                busy_periods += 1;
                successes += 1;
                cycle += busy;
                cycle_sum += cycle;
                cycle_sq_sum += cycle * cycle;
                cycle = 0.0;
            }
            _ => {
                busy_periods += 1;
                collisions += 1;
                coll_sum += busy;
                cycle += busy;
            }
        }
    }

    let n = n_successes as f64;
    let mean_total = cycle_sum / n;
    let variance = if n_successes > 1 {
        ((cycle_sq_sum - n * mean_total * mean_total) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean: VirtualTxTime {
            t_idle: idle_sum / n,
            t_coll: coll_sum / n,
            t_succ: busy,
            t_total: mean_total,
        },
        t_total_std_error: (variance / n).sqrt(),
        collisions,
        busy_periods,
    })
}
