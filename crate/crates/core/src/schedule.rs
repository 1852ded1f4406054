//! Noise-level sequences for multi-level training and annealed sampling.
//!
//! [`quantile_matched_schedule`] places consecutive levels so that the upper
//! `(1+δ)/2` quantile of the squared-norm distribution at one level equals
//! the lower `(1-δ)/2` quantile at the next. Levels are built upward from
//! `sigma_min` and returned in descending order, which is what annealed
//! sampling consumes.

use crate::distributions::{empirical_norm_sums, NormModel};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::specfun::inv_reg_lower_inc_gamma;
use crate::stats;
use serde::{Deserialize, Serialize};

/// Hard cap on the number of generated levels.
pub const MAX_LEVELS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    QuantileMatched,
    Geometric,
}

/// Where the squared-norm quantiles come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum QuantileSource {
    /// The scaled `GG(nσ², 1/2, β/2)` model.
    #[default]
    Model,
    /// Monte-Carlo quantiles of the actual sum of `n` squared GN draws.
    Empirical { mc_count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Strictly descending.
    pub sigmas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_source: Option<QuantileSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuantileMatchOptions {
    pub source: QuantileSource,
    /// Append `sigma_max` itself as the top level when the matched sequence
    /// stops short of it. The top pair then overlaps by more than `1 - δ`.
    pub cap_at_max: bool,
}

impl NoiseSchedule {
    /// A schedule from explicit levels, e.g. the two-level `[1.0, 0.25]` setup.
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<Self> {
        let s = Self { kind: ScheduleKind::Geometric, beta: None, n: None, delta: None, sigmas, quantile_source: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::Schedule("schedule has no levels".into()));
        }
        if let Some(bad) = self.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::Schedule(format!("noise level {bad} is not positive")));
        }
        if self.sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Schedule("noise levels must be strictly descending".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn sigma_min(&self) -> f64 {
        *self.sigmas.last().expect("validated non-empty")
    }

    pub fn ascending(&self) -> Vec<f64> {
        self.sigmas.iter().rev().copied().collect()
    }

    /// Largest relative violation of the quantile-matching identity over
    /// adjacent pairs, recomputed from the norm-model quantiles of each level.
    /// Only meaningful for model-sourced quantile-matched schedules.
    pub fn quantile_identity_error(&self) -> Result<f64> {
        let (beta, n, delta) = match (self.kind, self.beta, self.n, self.delta) {
            (ScheduleKind::QuantileMatched, Some(b), Some(n), Some(d)) => (b, n, d),
            _ => return Err(Error::Schedule("not a quantile-matched schedule".into())),
        };
        let asc = self.ascending();
        let mut worst = 0.0_f64;
        for pair in asc.windows(2) {
            let upper = NormModel::new(n, pair[0], beta)?.quantile((1.0 + delta) / 2.0)?;
            let lower = NormModel::new(n, pair[1], beta)?.quantile((1.0 - delta) / 2.0)?;
            worst = worst.max((upper - lower).abs() / upper);
        }
        Ok(worst)
    }
}

/// Unit-level (σ = 1) lower and upper squared-norm quantiles.
fn unit_quantiles(beta: f64, n: usize, delta: f64, source: QuantileSource) -> Result<(f64, f64)> {
    let q_lo = (1.0 - delta) / 2.0;
    let q_hi = (1.0 + delta) / 2.0;
    match source {
        QuantileSource::Model => {
            // n (P⁻¹(1/β, q))^{2/β}
            let s = 1.0 / beta;
            let lo = n as f64 * inv_reg_lower_inc_gamma(s, q_lo)?.powf(2.0 / beta);
            let hi = n as f64 * inv_reg_lower_inc_gamma(s, q_hi)?.powf(2.0 / beta);
            Ok((lo, hi))
        }
        QuantileSource::Empirical { mc_count, seed } => {
            if mc_count < crate::distributions::MIN_NORM_MC_COUNT {
                return Err(Error::Config(format!("empirical mc_count too small: {mc_count}")));
            }
            let mut rng = seeded(seed);
            let mut sums = empirical_norm_sums(n, 1.0, beta, mc_count, &mut rng)?;
            stats::sort_floats(&mut sums);
            Ok((stats::quantile_sorted(&sums, q_lo)?, stats::quantile_sorted(&sums, q_hi)?))
        }
    }
}

/// Quantile-matched schedule with model quantiles and no top cap.
pub fn quantile_matched_schedule(
    beta: f64,
    n: usize,
    delta: f64,
    sigma_min: f64,
    sigma_max: f64,
) -> Result<NoiseSchedule> {
    quantile_matched_schedule_with(beta, n, delta, sigma_min, sigma_max, QuantileMatchOptions::default())
}

pub fn quantile_matched_schedule_with(
    beta: f64,
    n: usize,
    delta: f64,
    sigma_min: f64,
    sigma_max: f64,
    opts: QuantileMatchOptions,
) -> Result<NoiseSchedule> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Schedule(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
        return Err(Error::Schedule(format!("need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")));
    }
    if n == 0 {
        return Err(Error::Schedule("dimension must be >= 1".into()));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Schedule(format!("beta must be > 0, got {beta}")));
    }

    let (unit_lo, unit_hi) = unit_quantiles(beta, n, delta, opts.source)?;
    // Squared-norm quantiles scale with σ², so each step multiplies σ by a
    // constant factor: upper(σ_i) = σ_i² unit_hi = σ_{i+1}² unit_lo.
    let ratio = (unit_hi / unit_lo).sqrt();
    if !(ratio.is_finite() && ratio > 1.0) {
        return Err(Error::Schedule(format!("delta = {delta} gives a non-increasing level ratio {ratio}")));
    }

    let mut ascending = vec![sigma_min];
    loop {
        let current = *ascending.last().expect("non-empty");
        let upper = current * current * unit_hi;
        let next = (upper / unit_lo).sqrt();
        if next <= current {
            return Err(Error::Schedule(format!("level {next} does not exceed {current}")));
        }
        if next > sigma_max {
            break;
        }
        ascending.push(next);
        if ascending.len() > MAX_LEVELS {
            return Err(Error::Schedule(format!("more than {MAX_LEVELS} levels; delta too small")));
        }
    }
    if opts.cap_at_max && *ascending.last().expect("non-empty") < sigma_max {
        ascending.push(sigma_max);
    }

    ascending.reverse();
    let schedule = NoiseSchedule {
        kind: ScheduleKind::QuantileMatched,
        beta: Some(beta),
        n: Some(n),
        delta: Some(delta),
        sigmas: ascending,
        quantile_source: match opts.source {
            QuantileSource::Model => None,
            s => Some(s),
        },
    };
    schedule.validate()?;
    Ok(schedule)
}

/// `count` levels log-linearly spaced from `sigma_max` down to `sigma_min`.
pub fn geometric_schedule(sigma_max: f64, sigma_min: f64, count: usize) -> Result<NoiseSchedule> {
    if count < 2 {
        return Err(Error::Schedule(format!("geometric schedule needs >= 2 levels, got {count}")));
    }
    if !(sigma_min > 0.0 && sigma_max > sigma_min && sigma_max.is_finite()) {
        return Err(Error::Schedule(format!("need sigma_max > sigma_min > 0, got {sigma_max}, {sigma_min}")));
    }
    let (hi, lo) = (sigma_max.ln(), sigma_min.ln());
    let last = (count - 1) as f64;
    let mut sigmas: Vec<f64> = (0..count).map(|i| (hi + (lo - hi) * i as f64 / last).exp()).collect();
    // Pin the endpoints exactly.
    sigmas[0] = sigma_max;
    sigmas[count - 1] = sigma_min;
    let s = NoiseSchedule {
        kind: ScheduleKind::Geometric,
        beta: None,
        n: None,
        delta: None,
        sigmas,
        quantile_source: None,
    };
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_geometric() {
        let s = geometric_schedule(1.0, 0.25, 2).unwrap();
        assert_eq!(s.sigmas, vec![1.0, 0.25]);
    }

    #[test]
    fn geometric_rejects_flat_or_short() {
        assert!(geometric_schedule(0.5, 0.5, 2).is_err());
        assert!(geometric_schedule(1.0, 0.5, 1).is_err());
        assert!(geometric_schedule(0.5, 1.0, 3).is_err());
    }

    #[test]
    fn geometric_ratios_constant() {
        let s = geometric_schedule(10.0, 0.01, 10).unwrap();
        let want = 0.001f64.powf(1.0 / 9.0);
        for w in s.sigmas.windows(2) {
            assert!((w[1] / w[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_matched_descending_and_bounded() {
        let s = quantile_matched_schedule(1.0, 2, 0.9, 0.25, 1.0).unwrap();
        assert!(s.sigmas.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(s.sigma_min(), 0.25);
        assert!(s.sigma_max() <= 1.0);
        assert!(s.quantile_identity_error().unwrap() < 1e-8);
    }

    #[test]
    fn cap_appends_sigma_max() {
        let opts = QuantileMatchOptions { cap_at_max: true, ..Default::default() };
        let s = quantile_matched_schedule_with(2.0, 16, 0.9, 0.1, 5.0, opts).unwrap();
        assert_eq!(s.sigma_max(), 5.0);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(quantile_matched_schedule(1.0, 2, 0.0, 0.25, 1.0).is_err());
        assert!(quantile_matched_schedule(1.0, 2, 1.0, 0.25, 1.0).is_err());
        assert!(quantile_matched_schedule(1.0, 2, 0.5, 1.0, 0.25).is_err());
        assert!(quantile_matched_schedule(1.0, 0, 0.5, 0.25, 1.0).is_err());
        // Tiny delta needs absurdly many levels.
        assert!(quantile_matched_schedule(2.0, 2, 1e-9, 1e-3, 1e3).is_err());
    }

    #[test]
    fn from_sigmas_validates_order() {
        assert!(NoiseSchedule::from_sigmas(vec![1.0, 0.25]).is_ok());
        assert!(NoiseSchedule::from_sigmas(vec![0.25, 1.0]).is_err());
        assert!(NoiseSchedule::from_sigmas(vec![]).is_err());
        assert!(NoiseSchedule::from_sigmas(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn json_shape() {
        let s = quantile_matched_schedule(1.0, 2, 0.9, 0.25, 1.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        for key in ["kind", "beta", "n", "delta", "sigmas"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["kind"], "quantile_matched");
    }
}
