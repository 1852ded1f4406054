//! Special functions: log-gamma and the regularized lower incomplete gamma
//! function with its inverse.
//!
//! Everything here is a pure function of its arguments.

use crate::error::{Error, Result};
use std::f64::consts::{E, PI};

const LANCZOS_R: f64 = 10.900511;
const LANCZOS_DK: [f64; 11] = [
    2.485_740_891_387_535_5e-5,
    1.051_423_785_817_219_7,
    -3.456_870_972_220_162_5,
    4.512_277_094_668_948,
    -2.982_852_253_235_766_4,
    1.056_397_115_771_267,
    -1.954_287_731_916_458_7e-1,
    1.709_705_434_044_412e-2,
    -5.719_261_174_043_057_7e-4,
    4.633_994_733_599_056e-6,
    -2.719_949_084_886_077_2e-9,
];
/// ln(2 * sqrt(e / pi))
const LN_2_SQRT_E_OVER_PI: f64 = 0.620_782_237_635_245_2;

const MAX_SERIES_ITER: usize = 10_000;
const MAX_INVERSE_ITER: usize = 200;

/// Natural logarithm of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::domain(format!("log_gamma requires finite x > 0, got {x}")));
    }
    // Roots of ln Γ, exact.
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    Ok(lanczos_ln_gamma(x))
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let s = LANCZOS_DK.iter().enumerate().skip(1).fold(LANCZOS_DK[0], |s, (i, dk)| s + dk / (i as f64 - x));
        PI.ln() - (PI * x).sin().ln() - s.ln() - LN_2_SQRT_E_OVER_PI - (0.5 - x) * ((0.5 - x + LANCZOS_R) / E).ln()
    } else {
        let s = LANCZOS_DK.iter().enumerate().skip(1).fold(LANCZOS_DK[0], |s, (i, dk)| s + dk / (x + i as f64 - 1.0));
        s.ln() + LN_2_SQRT_E_OVER_PI + (x - 0.5) * ((x - 0.5 + LANCZOS_R) / E).ln()
    }
}

/// Gamma function for `x > 0`, via `exp(log_gamma(x))`.
pub fn gamma(x: f64) -> Result<f64> {
    log_gamma(x).map(f64::exp)
}

/// Ratio Γ(num) / Γ(den) evaluated in log space.
pub fn gamma_ratio(num: f64, den: f64) -> Result<f64> {
    Ok((log_gamma(num)? - log_gamma(den)?).exp())
}

/// Regularized lower incomplete gamma function P(s, x) = γ(s, x) / Γ(s).
pub fn reg_lower_inc_gamma(s: f64, x: f64) -> Result<f64> {
    reg_inc_gamma_pair(s, x).map(|(p, _)| p)
}

/// Regularized upper incomplete gamma function Q(s, x) = 1 - P(s, x).
pub fn reg_upper_inc_gamma(s: f64, x: f64) -> Result<f64> {
    reg_inc_gamma_pair(s, x).map(|(_, q)| q)
}

/// Both P(s, x) and Q(s, x), each computed without cancellation.
///
/// Series expansion for `x < s + 1`, Lentz continued fraction otherwise.
pub fn reg_inc_gamma_pair(s: f64, x: f64) -> Result<(f64, f64)> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::domain(format!("incomplete gamma requires s > 0, got {s}")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("incomplete gamma requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let log_prefactor = -x + s * x.ln() - lanczos_ln_gamma(s);
    if x < s + 1.0 {
        let p = (lower_series(s, x)?.ln() + log_prefactor).exp().min(1.0);
        Ok((p, 1.0 - p))
    } else {
        let q = (upper_continued_fraction(s, x)?.ln() + log_prefactor).exp().min(1.0);
        Ok((1.0 - q, q))
    }
}

/// Σ_{n≥0} x^n / (s (s+1) ... (s+n)); multiply by x^s e^-x / Γ(s) for P.
fn lower_series(s: f64, x: f64) -> Result<f64> {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut denom = s;
    for _ in 0..MAX_SERIES_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok(sum);
        }
    }
    Err(Error::Numerical(format!("incomplete gamma series did not converge for s = {s}, x = {x}")))
}

/// Modified Lentz evaluation of the continued fraction for Q(s, x), without
/// the x^s e^-x / Γ(s) prefactor.
fn upper_continued_fraction(s: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / TINY;
    let mut d = if b.abs() < TINY { 1.0 / TINY } else { 1.0 / b };
    let mut h = d;
    for n in 1..=MAX_SERIES_ITER {
        let nf = n as f64;
        let an = -nf * (nf - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok(h);
        }
    }
    Err(Error::Numerical(format!("incomplete gamma continued fraction did not converge for s = {s}, x = {x}")))
}

/// Inverse of P(s, ·): the `x >= 0` with P(s, x) = q, for q in [0, 1).
///
/// Brackets the root by doubling, then refines with Newton steps that fall
/// back to bisection whenever a step leaves the bracket.
pub fn inv_reg_lower_inc_gamma(s: f64, q: f64) -> Result<f64> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::domain(format!("inverse incomplete gamma requires s > 0, got {s}")));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::domain(format!("inverse incomplete gamma requires q in [0, 1), got {q}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let ln_gamma_s = lanczos_ln_gamma(s);
    // Residual on whichever tail is smaller keeps precision near q -> 1.
    let upper_tail = q > 0.5;
    let target = if upper_tail { 1.0 - q } else { q };
    let residual = |x: f64| -> Result<f64> {
        let (p, qq) = reg_inc_gamma_pair(s, x)?;
        Ok(if upper_tail { target - qq } else { p - target })
    };

    let mut lo = 0.0_f64;
    let mut hi = s.max(1.0);
    let mut doublings = 0;
    while residual(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Numerical(format!("could not bracket inverse incomplete gamma for s = {s}, q = {q}")));
        }
    }

    // Small-x asymptote P(s, x) ≈ x^s / Γ(s + 1) gives a good start for small q.
    let mut x = if !upper_tail { ((q.ln() + lanczos_ln_gamma(s + 1.0)) / s).exp() } else { 0.5 * (lo + hi) };
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }

    for _ in 0..MAX_INVERSE_ITER {
        let f = residual(x)?;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // dP/dx = x^(s-1) e^-x / Γ(s); same sign for both residual forms.
        let density = ((s - 1.0) * x.ln() - x - ln_gamma_s).exp();
        let newton = x - f / density;
        let next =
            if density > 0.0 && newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= f64::MIN_POSITIVE {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Numerical(format!("inverse incomplete gamma did not converge for s = {s}, q = {q}")))
}
