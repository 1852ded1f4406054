//! Fast invariant checks behind the `selftest` command. The report contains
//! no timing data, so two runs with the same seed serialize identically.

use crate::distributions::{c1, c2, norm_model_skew, GeneralizedNormal, GnMethod};
use crate::error::Result;
use crate::io::fmt_f64;
use crate::metrics::{fid, kid, prdc, FeatureSet};
use crate::rng::{derive_seed, seeded};
use crate::sampler::{ald_run, ld_run, FnScore, SamplerConfig};
use crate::schedule::{quantile_matched_schedule, NoiseSchedule};
use crate::scorenet::{train, ScoreNetwork, TrainConfig};
use crate::specfun::{inv_reg_lower_inc_gamma, log_gamma, reg_lower_inc_gamma};
use crate::stats::{ks_critical_value, ks_statistic};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name: name.into(), passed, detail },
        Err(e) => Check { name: name.into(), passed: false, detail: format!("error: {e}") },
    }
}

fn special_functions() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    for s in [0.1, 0.5, 1.0, 2.5, 10.0, 50.0] {
        for q in [1e-6, 0.01, 0.25, 0.5, 0.75, 0.99, 0.999999] {
            let x = inv_reg_lower_inc_gamma(s, q)?;
            worst = worst.max((reg_lower_inc_gamma(s, x)? - q).abs());
        }
    }
    let lg = (log_gamma(5.0)? - 24f64.ln()).abs();
    Ok((worst <= 1e-8 && lg < 1e-12, format!("max round-trip error {}", fmt_f64(worst))))
}

fn constants() -> Result<(bool, String)> {
    let skew = norm_model_skew(1.0)?;
    let ok =
        (c1(1.0) - 2.0).abs() < 1e-12 && (c2(1.0) - 20.0).abs() < 1e-12 && (skew - 74.0 / 5f64.powf(1.5)).abs() < 1e-10;
    Ok((ok, format!("C1 {} C2 {} skew {}", fmt_f64(c1(1.0)), fmt_f64(c2(1.0)), fmt_f64(skew))))
}

fn schedules() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    for beta in [1.0, 2.0] {
        let s = quantile_matched_schedule(beta, 2, 0.9, 0.25, 1.0)?;
        worst = worst.max(s.quantile_identity_error()?);
    }
    Ok((worst < 1e-8, format!("max identity error {}", fmt_f64(worst))))
}

fn gn_sampling(seed: u64) -> Result<(bool, String)> {
    let n = 20_000;
    let mut worst = 0.0_f64;
    let mut rng = seeded(derive_seed(seed, "selftest/gn"));
    for beta in [0.5, 1.0, 2.0] {
        let d = GeneralizedNormal::new(0.3, 1.2, beta)?;
        for method in [GnMethod::GammaPower, GnMethod::UniformMixture] {
            let xs = d.sample(&mut rng, n, method);
            worst = worst.max(ks_statistic(&xs, |x| d.cdf(x))?);
        }
    }
    let crit = ks_critical_value(n, None, 0.001);
    Ok((worst < crit, format!("max KS {} vs {}", fmt_f64(worst), fmt_f64(crit))))
}

fn gradients(seed: u64) -> Result<(bool, String)> {
    let net = ScoreNetwork::new(2, &[4], &mut seeded(derive_seed(seed, "selftest/net")))?;
    let x = [0.3, -0.7];
    let log_sigma = -0.5_f64;
    let mut scratch = net.scratch();
    let mut grads = net.gradients();
    net.forward_with(&x, log_sigma, &mut scratch);
    // d/dθ of the first output coordinate.
    net.backward(&mut scratch, &[1.0, 0.0], &mut grads);
    let analytic = grads.flatten();
    let params = net.params();
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        let mut probe = net.clone();
        let mut p = params.clone();
        p[i] += h;
        probe.set_params(&p)?;
        let up = probe.forward(&x, log_sigma)?[0];
        p[i] -= 2.0 * h;
        probe.set_params(&p)?;
        let down = probe.forward(&x, log_sigma)?[0];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / fd.abs().max(1.0));
    }
    Ok((worst < 1e-5, format!("max gradient error {}", fmt_f64(worst))))
}

fn samplers(seed: u64) -> Result<(bool, String)> {
    let score = FnScore::new(2, |x: &[f64], _: f64, out: &mut [f64]| {
        for (o, v) in out.iter_mut().zip(x) {
            *o = -v;
        }
    });
    let mut cfg = SamplerConfig::new(NoiseSchedule::from_sigmas(vec![1.0])?);
    cfg.steps_per_level = 50;
    cfg.seed = derive_seed(seed, "selftest/sampler");
    let ld = ld_run(&score, &cfg, 16)?;
    let ald = ald_run(&score, &cfg, 16)?;
    cfg.step_size = 0.0;
    let frozen = ld_run(&score, &cfg, 16)?;
    let constant = frozen.iter().all(|p| p.final_position == p.initial_position);
    Ok((ld == ald && constant, format!("one-level ALD equals LD: {}, zero step constant: {constant}", ld == ald)))
}

fn metric_identities(seed: u64) -> Result<(bool, String)> {
    let mut rng = seeded(derive_seed(seed, "selftest/metrics"));
    let pts: Vec<Vec<f64>> =
        (0..40).map(|_| (0..2).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).collect();
    let a = FeatureSet::real(pts.clone())?;
    let b = FeatureSet::generated(pts)?;
    let p = prdc(&a, &b, 5)?;
    let k = kid(&a, &b)?;
    let f = fid(&a, &b)?;
    let ok = p.precision == 1.0 && p.recall == 1.0 && p.coverage == 1.0 && k.abs() < 1e-9 && f < 1e-8;
    Ok((ok, format!("kid {} fid {}", fmt_f64(k), fmt_f64(f))))
}

fn training_determinism(seed: u64) -> Result<(bool, String)> {
    let mut cfg = TrainConfig::new(NoiseSchedule::from_sigmas(vec![1.0, 0.25])?, 1.0);
    cfg.steps = 200;
    cfg.batch_size = 32;
    let data = vec![vec![2.5, 2.5], vec![-2.5, -2.5], vec![2.0, 3.0]];
    let s = derive_seed(seed, "selftest/train");
    let a = train(&data, &cfg, &mut seeded(s))?;
    let b = train(&data, &cfg, &mut seeded(s))?;
    let same = a.network == b.network && a.losses == b.losses;
    Ok((same, format!("final loss {}", fmt_f64(*a.losses.last().unwrap_or(&f64::NAN)))))
}

pub fn run_selftest(seed: u64) -> SelftestReport {
    let checks = vec![
        check("special_functions", special_functions()),
        check("norm_model_constants", constants()),
        check("quantile_schedule", schedules()),
        check("gn_sampling_ks", gn_sampling(seed)),
        check("network_gradients", gradients(seed)),
        check("langevin_identities", samplers(seed)),
        check("metric_identities", metric_identities(seed)),
        check("training_determinism", training_determinism(seed)),
    ];
    SelftestReport { seed, passed: checks.iter().all(|c| c.passed), checks }
}
