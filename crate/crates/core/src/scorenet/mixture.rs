use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Isotropic Gaussian mixture `Σ wᵢ N(μᵢ, sᵢ² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureParams")]
pub struct MixtureSpec {
    means: Vec<Vec<f64>>,
    stds: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct MixtureParams {
    means: Vec<Vec<f64>>,
    stds: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<MixtureParams> for MixtureSpec {
    type Error = Error;
    fn try_from(p: MixtureParams) -> Result<Self> {
        MixtureSpec::new(p.means, p.stds, p.weights)
    }
}

/// Default two-mode geometry: modes at `±(2.5, 2.5)` with std 0.5.
pub const DEFAULT_MODE_OFFSET: f64 = 2.5;
pub const DEFAULT_MODE_STD: f64 = 0.5;

impl MixtureSpec {
    pub fn new(means: Vec<Vec<f64>>, stds: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let k = means.len();
        if k == 0 || stds.len() != k || weights.len() != k {
            return Err(Error::Config(format!(
                "mixture needs matching non-empty means/stds/weights, got {}/{}/{}",
                k,
                stds.len(),
                weights.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim || m.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("mixture means must share a positive dimension".into()));
        }
        if stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("mixture stds must be positive".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { means, stds, weights })
    }

    /// Two modes in 2D with weights `ratio : 1`; mode 0 is the upper-right one.
    pub fn two_mode(ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(Error::Config(format!("imbalance ratio must be >= 1, got {ratio}")));
        }
        let o = DEFAULT_MODE_OFFSET;
        Self::new(
            vec![vec![o, o], vec![-o, -o]],
            vec![DEFAULT_MODE_STD; 2],
            vec![ratio / (ratio + 1.0), 1.0 / (ratio + 1.0)],
        )
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the component with the largest weight (first on ties).
    pub fn majority(&self) -> usize {
        self.weights.iter().enumerate().fold(0, |best, (i, w)| if *w > self.weights[best] { i } else { best })
    }

    /// Index of the component mean closest to `x`.
    pub fn nearest_mode(&self, x: &[f64]) -> usize {
        let dist2 = |m: &Vec<f64>| m.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        self.means
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bd), (i, m)| {
                let d = dist2(m);
                if d < bd {
                    (i, d)
                } else {
                    (bi, bd)
                }
            })
            .0
    }

    /// Exactly `counts[i]` draws from component `i`, grouped by component.
    pub fn sample_counts<R: Rng + ?Sized>(&self, counts: &[usize], rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if counts.len() != self.components() {
            return Err(Error::Dimension { expected: self.components(), got: counts.len() });
        }
        let mut out = Vec::with_capacity(counts.iter().sum());
        for ((mean, &std), &count) in self.means.iter().zip(&self.stds).zip(counts) {
            for _ in 0..count {
                out.push(
                    mean.iter()
                        .map(|m| {
                            let z: f64 = StandardNormal.sample(rng);
                            m + std * z
                        })
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    /// Per-component sample counts for a dataset whose largest component
    /// receives `per_majority` points and the rest are scaled by weight.
    pub fn counts_for(&self, per_majority: usize) -> Vec<usize> {
        let wmax = self.weights[self.majority()];
        self.weights.iter().map(|w| ((per_majority as f64) * w / wmax).round().max(1.0) as usize).collect()
    }

    /// Per-component log terms `ln wᵢ + ln N(x; μᵢ, (sᵢ² + σ²) I)`.
    fn log_terms(&self, x: &[f64], smoothing: f64) -> Vec<f64> {
        let d = self.dim() as f64;
        self.means
            .iter()
            .zip(&self.stds)
            .zip(&self.weights)
            .map(|((m, s), w)| {
                let var = s * s + smoothing * smoothing;
                let r2: f64 = m.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                w.ln() - 0.5 * d * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * r2 / var
            })
            .collect()
    }

    /// `ln Σ wᵢ N(x; μᵢ, (sᵢ² + σ²) I)`, the log density of the mixture
    /// convolved with `N(0, σ² I)`.
    pub fn log_density(&self, x: &[f64], smoothing: f64) -> f64 {
        let terms = self.log_terms(x, smoothing);
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }
}

/// Exact score `∇ log Σ wᵢ N(x; μᵢ, (sᵢ² + σ²) I)` via responsibilities
/// computed in the log domain.
pub fn analytic_mixture_score(x: &[f64], mixture: &MixtureSpec, smoothing: f64) -> Result<Vec<f64>> {
    if x.len() != mixture.dim() {
        return Err(Error::Dimension { expected: mixture.dim(), got: x.len() });
    }
    let terms = mixture.log_terms(x, smoothing);
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    let mut score = vec![0.0; x.len()];
    for ((r, m), s) in unnorm.iter().zip(&mixture.means).zip(&mixture.stds) {
        let var = s * s + smoothing * smoothing;
        let resp = r / z;
        for (out, (mi, xi)) in score.iter_mut().zip(m.iter().zip(x)) {
            *out += resp * (mi - xi) / var;
        }
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn single_component_score_is_linear() {
        let m = MixtureSpec::new(vec![vec![1.0, -2.0]], vec![0.5], vec![1.0]).unwrap();
        let s = analytic_mixture_score(&[2.0, 0.0], &m, 0.3).unwrap();
        let var = 0.25 + 0.09;
        assert!((s[0] + 1.0 / var).abs() < 1e-12);
        assert!((s[1] + 2.0 / var).abs() < 1e-12);
    }

    #[test]
    fn symmetric_midpoint_has_zero_score() {
        let m = MixtureSpec::two_mode(1.0).unwrap();
        let s = analytic_mixture_score(&[0.0, 0.0], &m, 0.25).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn far_field_score_is_finite() {
        let m = MixtureSpec::two_mode(10.0).unwrap();
        let s = analytic_mixture_score(&[1e4, -1e4], &m, 0.25).unwrap();
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn validation() {
        assert!(MixtureSpec::new(vec![vec![0.0]], vec![1.0], vec![0.5]).is_err());
        assert!(MixtureSpec::new(vec![vec![0.0]], vec![0.0], vec![1.0]).is_err());
        assert!(MixtureSpec::two_mode(0.5).is_err());
    }

    #[test]
    fn imbalanced_counts_and_majority() {
        let m = MixtureSpec::two_mode(10.0).unwrap();
        assert_eq!(m.majority(), 0);
        assert_eq!(m.counts_for(10_000), vec![10_000, 1_000]);
        let data = m.sample_counts(&[5, 3], &mut seeded(1)).unwrap();
        assert_eq!(data.len(), 8);
        assert_eq!(m.nearest_mode(&[2.0, 3.0]), 0);
        assert_eq!(m.nearest_mode(&[-2.0, -1.0]), 1);
    }
}
