//! Generalized normal noise, the generalized gamma family used to model the
//! squared norm of a noise vector, and a Monte-Carlo oracle for the true
//! squared-norm distribution.
//!
//! `GN(μ, α, β)` has density `β / (2αΓ(1/β)) · exp(-(|x-μ|/α)^β)`. The
//! standard normal is `(α, β) = (√2, 2)` and the standard Laplace is `(1, 1)`.
//!
//! For `X ∈ R^n` with i.i.d. `GN(0, σ, β)` coordinates, [`NormModel`] is the
//! scaled single-term model `‖X‖² ~ GG(nσ², 1/2, β/2)`. Its mean is exact but
//! its variance grows like `n²` whereas the variance of the actual sum grows
//! like `n`. [`empirical_norm_sums`] samples the actual sum so that difference
//! can be measured.

use crate::error::{Error, Result};
use crate::specfun::{gamma_ratio, inv_reg_lower_inc_gamma, log_gamma, reg_inc_gamma_pair};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

/// Smallest displacement magnitude fed to the score when `β < 1`.
pub const SCORE_DELTA_FLOOR: f64 = 1e-8;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GnParams")]
pub struct GeneralizedNormal {
    mu: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
struct GnParams {
    mu: f64,
    alpha: f64,
    beta: f64,
}

impl TryFrom<GnParams> for GeneralizedNormal {
    type Error = Error;
    fn try_from(p: GnParams) -> Result<Self> {
        GeneralizedNormal::new(p.mu, p.alpha, p.beta)
    }
}

/// How [`GeneralizedNormal::sample`] draws variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GnMethod {
    /// `μ ± α G^{1/β}` with `G ~ Gamma(1/β, 1)` and a fair sign.
    #[default]
    GammaPower,
    /// Uniform scale mixture: `γ ~ Gamma(1 + 1/β, rate 2^{-β/2})`,
    /// `δ = α γ^{1/β} / √2`, `x ~ U(μ - δ, μ + δ)`.
    UniformMixture,
}

impl GeneralizedNormal {
    pub fn new(mu: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain(format!("mu must be finite, got {mu}")));
        }
        check_positive("alpha", alpha)?;
        check_positive("beta", beta)?;
        Ok(Self { mu, alpha, beta })
    }

    pub fn standard_normal() -> Self {
        Self { mu: 0.0, alpha: std::f64::consts::SQRT_2, beta: 2.0 }
    }

    pub fn standard_laplace() -> Self {
        Self { mu: 0.0, alpha: 1.0, beta: 1.0 }
    }

    /// Zero-mean member of the family with unit variance.
    pub fn unit_variance(beta: f64) -> Result<Self> {
        Self::new(0.0, unit_variance_alpha(beta)?, beta)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu).abs() / self.alpha;
        self.beta.ln() - (2.0 * self.alpha).ln() - lgamma_unchecked(1.0 / self.beta) - z.powf(self.beta)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// `1/2 + sign(x-μ)/2 · P(1/β, (|x-μ|/α)^β)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let z = ((x - self.mu).abs() / self.alpha).powf(self.beta);
        let (p, q) = reg_inc_gamma_pair(1.0 / self.beta, z)?;
        Ok(if x >= self.mu { 0.5 + 0.5 * p } else { 0.5 * q })
    }

    /// Score of the density at `x`, i.e. `d/dx log f(x)`.
    pub fn score(&self, x: f64) -> Result<f64> {
        gn_score(x, self.mu, self.alpha, self.beta)
    }

    pub fn variance(&self) -> f64 {
        gn_variance(self.alpha, self.beta)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R, method: GnMethod) -> f64 {
        match method {
            GnMethod::GammaPower => {
                let g: f64 = Gamma::new(1.0 / self.beta, 1.0).expect("shape validated at construction").sample(rng);
                let magnitude = self.alpha * g.powf(1.0 / self.beta);
                if rng.random::<bool>() {
                    self.mu + magnitude
                } else {
                    self.mu - magnitude
                }
            }
            GnMethod::UniformMixture => {
                let scale = 2f64.powf(self.beta / 2.0);
                let g: f64 =
                    Gamma::new(1.0 + 1.0 / self.beta, scale).expect("shape validated at construction").sample(rng);
                let half_width = self.alpha * g.powf(1.0 / self.beta) / std::f64::consts::SQRT_2;
                self.mu + half_width * (2.0 * rng.random::<f64>() - 1.0)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize, method: GnMethod) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng, method)).collect()
    }
}

fn lgamma_unchecked(x: f64) -> f64 {
    log_gamma(x).expect("argument validated positive")
}

/// `ln f(x)` for `GN(μ, α, β)`.
pub fn gn_log_pdf(dist: &GeneralizedNormal, x: f64) -> f64 {
    dist.log_pdf(x)
}

/// Conditional score `∂/∂x̃ log q(x̃ | x)` of generalized-normal noise
/// centred at `x`: `-(β/α^β) sign(x̃-x) |x̃-x|^{β-1}`.
///
/// With `β < 1` the score is unbounded at `x̃ = x`; that case returns
/// [`Error::SingularScore`] and [`gn_score_clamped`] is the caller-side policy.
pub fn gn_score(x_tilde: f64, x: f64, alpha: f64, beta: f64) -> Result<f64> {
    let delta = x_tilde - x;
    if delta == 0.0 {
        return if beta < 1.0 { Err(Error::SingularScore { beta }) } else { Ok(0.0) };
    }
    Ok(score_of_delta(delta, alpha, beta))
}

/// [`gn_score`] with `|x̃ - x|` clamped below at [`SCORE_DELTA_FLOOR`] when
/// `β < 1`; an exact zero displacement maps to zero (sign(0) = 0).
pub fn gn_score_clamped(x_tilde: f64, x: f64, alpha: f64, beta: f64) -> f64 {
    let delta = x_tilde - x;
    if delta == 0.0 {
        return 0.0;
    }
    if beta < 1.0 && delta.abs() < SCORE_DELTA_FLOOR {
        return score_of_delta(SCORE_DELTA_FLOOR.copysign(delta), alpha, beta);
    }
    score_of_delta(delta, alpha, beta)
}

#[inline]
fn score_of_delta(delta: f64, alpha: f64, beta: f64) -> f64 {
    let mag = if beta == 2.0 {
        delta.abs() / alpha
    } else if beta == 1.0 {
        1.0
    } else {
        (delta.abs() / alpha).powf(beta - 1.0)
    };
    -(beta / alpha) * mag * delta.signum()
}

/// `α² Γ(3/β) / Γ(1/β)`.
pub fn gn_variance(alpha: f64, beta: f64) -> f64 {
    alpha * alpha * gamma_ratio(3.0 / beta, 1.0 / beta).expect("beta must be positive")
}

/// Scale giving unit variance: `sqrt(Γ(1/β) / Γ(3/β))`.
pub fn unit_variance_alpha(beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    Ok(gamma_ratio(1.0 / beta, 3.0 / beta)?.sqrt())
}

/// Draws from `GN` with the default method.
pub fn gn_sample<R: Rng + ?Sized>(dist: &GeneralizedNormal, rng: &mut R, count: usize) -> Vec<f64> {
    dist.sample(rng, count, GnMethod::default())
}

/// Stacy's generalized gamma `GG(a, d, p)` with density
/// `(p / a^d) / Γ(d/p) · x^{d-1} exp(-(x/a)^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GgParams")]
pub struct GeneralizedGamma {
    a: f64,
    d: f64,
    p: f64,
}

#[derive(Deserialize)]
struct GgParams {
    a: f64,
    d: f64,
    p: f64,
}

impl TryFrom<GgParams> for GeneralizedGamma {
    type Error = Error;
    fn try_from(p: GgParams) -> Result<Self> {
        GeneralizedGamma::new(p.a, p.d, p.p)
    }
}

impl GeneralizedGamma {
    pub fn new(a: f64, d: f64, p: f64) -> Result<Self> {
        check_positive("a", a)?;
        check_positive("p", p)?;
        if !(d.is_finite() && d / p > 0.0) {
            return Err(Error::domain(format!("GG requires d/p > 0, got d = {d}, p = {p}")));
        }
        Ok(Self { a, d, p })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Shape of the underlying standard gamma variable, `d/p`.
    fn shape(&self) -> f64 {
        self.d / self.p
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.p.ln() - self.d * self.a.ln() - lgamma_unchecked(self.shape()) + (self.d - 1.0) * x.ln()
            - (x / self.a).powf(self.p)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// `P(d/p, (x/a)^p)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        Ok(reg_inc_gamma_pair(self.shape(), (x / self.a).powf(self.p))?.0)
    }

    /// `a · (P⁻¹(d/p, q))^{1/p}`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        Ok(self.a * inv_reg_lower_inc_gamma(self.shape(), q)?.powf(1.0 / self.p))
    }

    /// `E[Y^r] = a^r Γ((d+r)/p) / Γ(d/p)`.
    pub fn raw_moment(&self, r: u32) -> f64 {
        if r == 0 {
            return 1.0;
        }
        let r = f64::from(r);
        self.a.powf(r) * gamma_ratio((self.d + r) / self.p, self.shape()).expect("positive arguments")
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    pub fn variance(&self) -> f64 {
        let m = self.raw_moment(1);
        self.raw_moment(2) - m * m
    }

    /// `a · G^{1/p}` with `G ~ Gamma(d/p, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let g = Gamma::new(self.shape(), 1.0).expect("shape validated at construction");
        (0..count).map(|_| self.a * g.sample(rng).powf(1.0 / self.p)).collect()
    }
}

/// `Γ(3/β) / Γ(1/β)`: mean of `Z = X²` for unit-scale GN noise.
pub fn c1(beta: f64) -> f64 {
    gamma_ratio(3.0 / beta, 1.0 / beta).expect("beta must be positive")
}

/// `Γ(5/β)/Γ(1/β) - C₁²`: variance of `Z = X²` for unit-scale GN noise.
pub fn c2(beta: f64) -> f64 {
    let c = c1(beta);
    gamma_ratio(5.0 / beta, 1.0 / beta).expect("beta must be positive") - c * c
}

/// Scaled single-term model for the squared norm of an `n`-dimensional
/// `GN(0, σ, β)` noise vector: `GG(nσ², 1/2, β/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormModel {
    pub n: usize,
    pub sigma: f64,
    pub beta: f64,
}

impl NormModel {
    pub fn new(n: usize, sigma: f64, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("dimension must be >= 1"));
        }
        check_positive("sigma", sigma)?;
        check_positive("beta", beta)?;
        Ok(Self { n, sigma, beta })
    }

    pub fn distribution(&self) -> GeneralizedGamma {
        GeneralizedGamma { a: self.n as f64 * self.sigma * self.sigma, d: 0.5, p: self.beta / 2.0 }
    }

    /// `n σ² C₁`.
    pub fn mean(&self) -> f64 {
        self.distribution().mean()
    }

    /// `n² σ⁴ C₂`.
    pub fn variance(&self) -> f64 {
        self.distribution().variance()
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        self.distribution().quantile(q)
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.distribution().cdf(y)
    }
}

/// Skewness of the norm model, `C₂^{-3/2} (Γ(7/β)/Γ(1/β) - 3C₁C₂ - C₁³)`.
/// Independent of dimension and noise level.
pub fn norm_model_skew(beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    let (m1, v) = (c1(beta), c2(beta));
    let third = gamma_ratio(7.0 / beta, 1.0 / beta)?;
    Ok((third - 3.0 * m1 * v - m1.powi(3)) / v.powf(1.5))
}

/// `mc_count` draws of `Σᵢ Xᵢ²` with `Xᵢ ~ GN(0, σ, β)` i.i.d. over `n` coordinates.
pub fn empirical_norm_sums<R: Rng + ?Sized>(
    n: usize,
    sigma: f64,
    beta: f64,
    mc_count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dist = GeneralizedNormal::new(0.0, sigma, beta)?;
    Ok((0..mc_count).map(|_| (0..n).map(|_| dist.sample_one(rng, GnMethod::GammaPower).powi(2)).sum()).collect())
}

/// Minimum Monte-Carlo size accepted by [`empirical_norm_quantile`].
pub const MIN_NORM_MC_COUNT: usize = 10_000;

/// Empirical `q`-quantile of the true squared-norm sum.
pub fn empirical_norm_quantile<R: Rng + ?Sized>(
    n: usize,
    sigma: f64,
    beta: f64,
    q: f64,
    mc_count: usize,
    rng: &mut R,
) -> Result<f64> {
    if mc_count < MIN_NORM_MC_COUNT {
        return Err(Error::domain(format!("mc_count must be >= {MIN_NORM_MC_COUNT}, got {mc_count}")));
    }
    let mut sums = empirical_norm_sums(n, sigma, beta, mc_count, rng)?;
    crate::stats::sort_floats(&mut sums);
    crate::stats::quantile_sorted(&sums, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn log_pdf_special_cases() {
        let normal = GeneralizedNormal::standard_normal();
        assert_relative_eq!(normal.log_pdf(0.0), -0.5 * (2.0 * PI).ln(), epsilon = 1e-14);
        let laplace = GeneralizedNormal::standard_laplace();
        assert_relative_eq!(laplace.log_pdf(1.0), 0.5f64.ln() - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(GeneralizedNormal::new(0.0, 0.0, 1.0).is_err());
        assert!(GeneralizedNormal::new(0.0, 1.0, -1.0).is_err());
        assert!(GeneralizedNormal::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(GeneralizedGamma::new(1.0, -0.5, 1.0).is_err());
        assert!(serde_json::from_str::<GeneralizedNormal>(r#"{"mu":0,"alpha":-1,"beta":2}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = GeneralizedNormal::new(0.5, 1.5, 1.25).unwrap();
        let back: GeneralizedNormal = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(d, back);
        let g = GeneralizedGamma::new(2.0, 0.5, 0.75).unwrap();
        let back: GeneralizedGamma = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn score_reduces_to_gaussian_and_laplace() {
        for delta in [-1.3, -0.2, 0.4, 2.0] {
            assert_relative_eq!(gn_score(delta, 0.0, SQRT_2, 2.0).unwrap(), -delta, epsilon = 1e-14);
        }
        assert_eq!(gn_score(0.3, 0.0, 1.0, 1.0).unwrap(), -1.0);
        assert_eq!(gn_score(-0.3, 0.0, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn score_singularity_is_signalled() {
        assert!(matches!(gn_score(1.0, 1.0, 1.0, 0.5), Err(Error::SingularScore { .. })));
        assert_eq!(gn_score(1.0, 1.0, 1.0, 1.5).unwrap(), 0.0);
        assert_eq!(gn_score_clamped(1.0, 1.0, 1.0, 0.5), 0.0);
        let tiny = gn_score_clamped(1e-12, 0.0, 1.0, 0.5);
        assert_relative_eq!(tiny, gn_score(SCORE_DELTA_FLOOR, 0.0, 1.0, 0.5).unwrap());
        assert!(tiny.is_finite());
    }

    #[test]
    fn variance_closed_forms() {
        assert_relative_eq!(gn_variance(SQRT_2, 2.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(gn_variance(1.0, 1.0), 2.0, epsilon = 1e-14);
        for beta in [0.5, 1.0, 1.5, 2.0, 2.5] {
            let d = GeneralizedNormal::unit_variance(beta).unwrap();
            assert_relative_eq!(d.variance(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cdf_is_symmetric_and_matches_normal() {
        let d = GeneralizedNormal::new(1.0, 0.7, 1.3).unwrap();
        for x in [0.1, 0.5, 2.0] {
            let lhs = d.cdf(1.0 + x).unwrap();
            let rhs = 1.0 - d.cdf(1.0 - x).unwrap();
            assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
        }
        // Φ(1) = 0.8413447460685429
        let n = GeneralizedNormal::standard_normal();
        assert_relative_eq!(n.cdf(1.0).unwrap(), 0.841_344_746_068_542_9, epsilon = 1e-12);
    }

    #[test]
    fn gg_moments_and_round_trip() {
        let g = GeneralizedGamma::new(3.0, 0.5, 0.5).unwrap();
        assert_eq!(g.raw_moment(0), 1.0);
        let x = g.quantile(0.37).unwrap();
        assert!((g.cdf(x).unwrap() - 0.37).abs() < 1e-12);
        assert_eq!(g.quantile(0.0).unwrap(), 0.0);
    }

    #[test]
    fn norm_model_laplace_constants() {
        assert_relative_eq!(c1(1.0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(c2(1.0), 20.0, epsilon = 1e-12);
        let m = NormModel::new(8, 1.0, 1.0).unwrap();
        assert_relative_eq!(m.mean(), 16.0, epsilon = 1e-12);
        assert_relative_eq!(m.variance(), 20.0 * 64.0, epsilon = 1e-9);
    }

    #[test]
    fn skew_at_laplace_and_gaussian() {
        assert_relative_eq!(norm_model_skew(1.0).unwrap(), 74.0 / 5f64.powf(1.5), epsilon = 1e-10);
        assert_relative_eq!(norm_model_skew(2.0).unwrap(), 2.0 * SQRT_2, epsilon = 1e-10);
    }

    #[test]
    fn empirical_quantile_requires_enough_draws() {
        let mut rng = seeded(0);
        assert!(empirical_norm_quantile(4, 1.0, 2.0, 0.5, 100, &mut rng).is_err());
    }

    #[test]
    fn sampler_is_centred() {
        let d = GeneralizedNormal::new(0.5, 1.0, 1.5).unwrap();
        let mut rng = seeded(11);
        let xs = d.sample(&mut rng, 100_000, GnMethod::GammaPower);
        let se = (d.variance() / xs.len() as f64).sqrt();
        assert!((stats::mean(&xs) - 0.5).abs() < 3.0 * se);
    }
}
