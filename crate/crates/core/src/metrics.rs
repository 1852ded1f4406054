//! Sample-quality metrics on feature vectors: PRDC, KID, FID, bootstrap
//! intervals and mode imbalance.

use crate::error::{Error, Result};
use crate::scorenet::MixtureSpec;
use crate::stats::{mean, quantile_sorted, sort_floats};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Real,
    Generated,
}

/// `M` feature vectors of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    points: Vec<Vec<f64>>,
    source: Source,
}

impl FeatureSet {
    pub fn new(points: Vec<Vec<f64>>, source: Source) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.is_empty() || dim == 0 {
            return Err(Error::Metric("feature set is empty".into()));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension { expected: dim, got: p.len() });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Metric("feature set has non-finite entries".into()));
        }
        Ok(Self { points, source })
    }

    pub fn real(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points, Source::Real)
    }

    pub fn generated(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points, Source::Generated)
    }

    /// Applies `map` to every point.
    pub fn from_raw<M: FeatureMap + ?Sized>(raw: &[Vec<f64>], map: &M, source: Source) -> Result<Self> {
        Self::new(raw.iter().map(|x| map.map(x)).collect(), source)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn source(&self) -> Source {
        self.source
    }
}

pub trait FeatureMap {
    fn name(&self) -> &str;
    fn map(&self, x: &[f64]) -> Vec<f64>;
}

/// Raw coordinates as features.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl FeatureMap for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn map(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prdc {
    pub precision: f64,
    pub recall: f64,
    pub density: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub feature_map: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fid: Option<f64>,
}

impl MetricReport {
    /// PRDC with `k` neighbours, KID and FID on identity features.
    pub fn compute(real: &FeatureSet, fake: &FeatureSet, k: usize) -> Result<Self> {
        let p = prdc(real, fake, k)?;
        Ok(Self {
            feature_map: Identity.name().to_string(),
            precision: Some(p.precision),
            recall: Some(p.recall),
            density: Some(p.density),
            coverage: Some(p.coverage),
            kid: Some(kid(real, fake)?),
            fid: Some(fid(real, fake)?),
        })
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_dims(a: &FeatureSet, b: &FeatureSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), got: b.dim() });
    }
    Ok(())
}

/// Distance from each point to its k-th nearest neighbour in the same set,
/// excluding itself.
pub fn knn_radii(set: &FeatureSet, k: usize) -> Result<Vec<f64>> {
    let pts = set.points();
    if k == 0 || pts.len() <= k {
        return Err(Error::Metric(format!("need more than k = {k} points, got {}", pts.len())));
    }
    if pts.iter().all(|p| p == &pts[0]) {
        return Err(Error::Metric("all points in the set are identical".into()));
    }
    Ok(pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> =
                pts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| euclidean(p, q)).collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[k - 1]
        })
        .collect())
}

/// Counts, for each query point, the reference balls `B(refᵢ, rᵢ)` that
/// strictly contain it.
fn ball_hits(queries: &[Vec<f64>], refs: &[Vec<f64>], radii: &[f64]) -> Vec<usize> {
    queries.par_iter().map(|q| refs.iter().zip(radii).filter(|(r, rad)| euclidean(q, r) < **rad).count()).collect()
}

/// Precision, recall, density and coverage with `k`-nearest-neighbour balls.
pub fn prdc(real: &FeatureSet, fake: &FeatureSet, k: usize) -> Result<Prdc> {
    check_dims(real, fake)?;
    let real_r = knn_radii(real, k)?;
    let fake_r = knn_radii(fake, k)?;
    let (rp, fp) = (real.points(), fake.points());

    let fake_hits = ball_hits(fp, rp, &real_r);
    let real_hits = ball_hits(rp, fp, &fake_r);
    let covered = rp.par_iter().zip(&real_r).filter(|(r, rad)| fp.iter().any(|f| euclidean(r, f) < **rad)).count();

    let m_fake = fp.len() as f64;
    Ok(Prdc {
        precision: fake_hits.iter().filter(|&&h| h > 0).count() as f64 / m_fake,
        recall: real_hits.iter().filter(|&&h| h > 0).count() as f64 / rp.len() as f64,
        density: fake_hits.iter().sum::<usize>() as f64 / (k as f64 * m_fake),
        coverage: covered as f64 / rp.len() as f64,
    })
}

/// `k(x, y) = (xᵀy / n + 1)³` with `n` the feature dimension.
pub fn polynomial_kernel(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / x.len() as f64 + 1.0).powi(3)
}

fn within_set_mean(pts: &[Vec<f64>]) -> f64 {
    let m = pts.len();
    let mut total = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            total += polynomial_kernel(&pts[i], &pts[j]);
        }
    }
    2.0 * total / (m * (m - 1)) as f64
}

/// Unbiased squared MMD with the cubic polynomial kernel.
///
/// Within-set sums skip the diagonal. For equal set sizes the cross term
/// also skips the paired diagonal `k(xᵢ, yᵢ)`, which gives the one-sample
/// U-statistic and makes `kid(A, A)` exactly zero; otherwise it averages
/// over all real-fake pairs.
pub fn kid(real: &FeatureSet, fake: &FeatureSet) -> Result<f64> {
    check_dims(real, fake)?;
    let (x, y) = (real.points(), fake.points());
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Metric("kid needs at least two points per set".into()));
    }
    let kxx = within_set_mean(x);
    let kyy = within_set_mean(y);
    let paired = x.len() == y.len();
    let mut cross = 0.0;
    for (i, a) in x.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            if !(paired && i == j) {
                cross += polynomial_kernel(a, b);
            }
        }
    }
    let pairs = if paired { x.len() * (x.len() - 1) } else { x.len() * y.len() };
    Ok(kxx + kyy - 2.0 * cross / pairs as f64)
}

fn moments(set: &FeatureSet) -> (DVector<f64>, DMatrix<f64>) {
    let d = set.dim();
    let m = set.len();
    let mut mu = DVector::zeros(d);
    for p in set.points() {
        mu += DVector::from_column_slice(p);
    }
    mu /= m as f64;
    let mut cov = DMatrix::zeros(d, d);
    for p in set.points() {
        let c = DVector::from_column_slice(p) - &mu;
        cov += &c * c.transpose();
    }
    cov /= (m - 1) as f64;
    (mu, cov)
}

fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to the two sets.
///
/// `tr (Σ_R Σ_G)^{1/2}` is computed as `tr (Σ_R^{1/2} Σ_G Σ_R^{1/2})^{1/2}`,
/// which has the same eigenvalues and stays symmetric.
pub fn fid(real: &FeatureSet, fake: &FeatureSet) -> Result<f64> {
    check_dims(real, fake)?;
    if real.len() < 2 || fake.len() < 2 {
        return Err(Error::Metric("fid needs at least two points per set".into()));
    }
    let (mu_r, cov_r) = moments(real);
    let (mu_g, cov_g) = moments(fake);
    let root_r = psd_sqrt(cov_r.clone());
    let inner = psd_sqrt(&root_r * &cov_g * &root_r);
    let value = (&mu_r - &mu_g).norm_squared() + cov_r.trace() + cov_g.trace() - 2.0 * inner.trace();
    if !value.is_finite() {
        return Err(Error::Metric(format!("fid is not finite ({value})")));
    }
    Ok(value.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_ci<R: Rng + ?Sized>(values: &[f64], resamples: usize, level: f64, rng: &mut R) -> Result<BootstrapCi> {
    if values.is_empty() {
        return Err(Error::Metric("bootstrap of an empty sample".into()));
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("bad bootstrap settings: resamples {resamples}, level {level}")));
    }
    let n = values.len();
    let mut means: Vec<f64> =
        (0..resamples).map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64).collect();
    sort_floats(&mut means);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi { mean: mean(values), lo: quantile_sorted(&means, tail)?, hi: quantile_sorted(&means, 1.0 - tail)? })
}

/// Number of endpoints nearest to each mixture mean.
pub fn mode_counts(endpoints: &[Vec<f64>], mixture: &MixtureSpec) -> Vec<usize> {
    let mut counts = vec![0; mixture.components()];
    for x in endpoints {
        counts[mixture.nearest_mode(x)] += 1;
    }
    counts
}

/// Percentage of `endpoints` nearest to the mixture's majority-weight mode.
///
/// Pass only non-diverged particles.
pub fn mode_imbalance(endpoints: &[Vec<f64>], mixture: &MixtureSpec) -> Result<f64> {
    if endpoints.is_empty() {
        return Err(Error::Metric("no non-diverged endpoints".into()));
    }
    if let Some(x) = endpoints.iter().find(|x| x.len() != mixture.dim()) {
        return Err(Error::Dimension { expected: mixture.dim(), got: x.len() });
    }
    let counts = mode_counts(endpoints, mixture);
    Ok(100.0 * counts[mixture.majority()] as f64 / endpoints.len() as f64)
}
