//! Nakagami-m fading reception model.
//!
//! Mean received power follows a log-distance path loss; the instantaneous
//! power is Gamma distributed with shape `m` around that mean, so the
//! probability of clearing the receive threshold is the regularized upper
//! incomplete gamma function `Q(m, m * threshold / mean)`.

use serde::Deserialize;
use statrs::function::gamma::gamma_ur;

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NakagamiProfile {
    /// `(max distance in meters, m)` pairs sorted by distance; the last
    /// entry applies beyond its own distance too.
    pub breakpoints: Vec<(f64, f64)>,
    pub pathloss_exponent: f64,
    pub reference_distance: f64,
    pub reference_power: f64,
    pub rx_threshold: f64,
}

impl Default for NakagamiProfile {
    fn default() -> Self {
        Self::with_nominal_range(250.0)
    }
}

impl NakagamiProfile {
    /// Default shape breakpoints, exponent 2.8, and a reference power that
    /// puts the mean power exactly at threshold at `range` meters.
    pub fn with_nominal_range(range: f64) -> Self {
        let pathloss_exponent = 2.8;
        let reference_distance = 1.0;
        NakagamiProfile {
            breakpoints: vec![(80.0, 3.0), (200.0, 1.5), (f64::INFINITY, 1.0)],
            pathloss_exponent,
            reference_distance,
            reference_power: (range / reference_distance).powf(pathloss_exponent),
            rx_threshold: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.breakpoints.is_empty() {
            return domain("Nakagami profile needs at least one breakpoint");
        }
        if self.breakpoints.iter().any(|&(_, m)| !(m >= 0.5)) {
            return domain("Nakagami shape m must be >= 0.5");
        }
        if self.breakpoints.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return domain("Nakagami breakpoints must be sorted by distance");
        }
        if !(self.pathloss_exponent > 0.0) {
            return domain("path-loss exponent must be > 0");
        }
        if !(self.reference_distance > 0.0 && self.reference_power > 0.0 && self.rx_threshold > 0.0)
        {
            return domain("reference distance, power and threshold must be > 0");
        }
        Ok(())
    }

    pub fn shape_at(&self, distance: f64) -> f64 {
        self.breakpoints
            .iter()
            .find(|&&(max, _)| distance < max)
            .or(self.breakpoints.last())
            .map_or(1.0, |&(_, m)| m)
    }

    pub fn mean_power(&self, distance: f64) -> f64 {
        self.reference_power * (self.reference_distance / distance).powf(self.pathloss_exponent)
    }
}

/// Probability that a frame sent over `distance` meters is received.
pub fn reception_probability(distance: f64, profile: &NakagamiProfile) -> Result<f64> {
    if !(distance > 0.0) {
        return domain(format!("distance must be > 0, got {distance}"));
    }
    let m = profile.shape_at(distance);
    let x = m * profile.rx_threshold / profile.mean_power(distance);
    if x <= 0.0 {
        return Ok(1.0);
    }
    if !x.is_finite() {
        return Ok(0.0);
    }
    Ok(gamma_ur(m, x).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_shape(m: f64) -> NakagamiProfile {
        NakagamiProfile {
            breakpoints: vec![(f64::INFINITY, m)],
            pathloss_exponent: 2.0,
            reference_distance: 1.0,
            reference_power: 100.0,
            rx_threshold: 1.0,
        }
    }

    /// Composite Simpson integration of the Gamma(m, 1/m) density over
    /// `[0, 1]`, giving `P(power <= mean)`.
    fn gamma_cdf_at_mean(m: f64) -> f64 {
        let ln_norm = m * m.ln() - statrs::function::gamma::ln_gamma(m);
        let pdf = |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                (ln_norm + (m - 1.0) * x.ln() - m * x).exp()
            }
        };
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut acc = pdf(0.0) + pdf(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn rayleigh_at_threshold() {
        // Mean power 100 / 10^2 = 1 = threshold.
        let p = reception_probability(10.0, &single_shape(1.0)).unwrap();
        assert!((p - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn deep_coverage() {
        let mut profile = single_shape(3.0);
        profile.reference_power = 1e6;
        let p = reception_probability(1.0, &profile).unwrap();
        assert!(p >= 1.0 - 1e-9);
    }

    #[test]
    fn shape_three_matches_quadrature() {
        let p = reception_probability(10.0, &single_shape(3.0)).unwrap();
        let oracle = 1.0 - gamma_cdf_at_mean(3.0);
        assert!((p - oracle).abs() < 1e-9, "{p} vs {oracle}");
    }

    #[test]
    fn default_profile_is_monotone() {
        let profile = NakagamiProfile::default();
        profile.validate().unwrap();
        let mut prev = 1.0;
        for i in 1..=6000 {
            let d = i as f64 * 0.1;
            let p = reception_probability(d, &profile).unwrap();
            assert!(p <= prev + 1e-12, "rise at {d} m: {prev} -> {p}");
            prev = p;
        }
        let at_range = reception_probability(250.0, &profile).unwrap();
        assert!((at_range - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(reception_probability(0.0, &NakagamiProfile::default()).is_err());
        let mut bad = NakagamiProfile::default();
        bad.breakpoints[0].1 = 0.3;
        assert!(bad.validate().is_err());
        let mut unsorted = NakagamiProfile::default();
        unsorted.breakpoints.swap(0, 1);
        assert!(unsorted.validate().is_err());
    }
}
