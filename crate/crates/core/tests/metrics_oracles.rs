use htdsm::metrics::*;
use htdsm::rng::seeded;
use htdsm::scorenet::MixtureSpec;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// PRDC by a direct double loop with a full sort for every radius.
fn brute_prdc(real: &[Vec<f64>], fake: &[Vec<f64>], k: usize) -> [f64; 4] {
    let radius = |set: &[Vec<f64>], i: usize| {
        let mut d: Vec<f64> = (0..set.len()).filter(|&j| j != i).map(|j| dist(&set[i], &set[j])).collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d[k - 1]
    };
    let rr: Vec<f64> = (0..real.len()).map(|i| radius(real, i)).collect();
    let fr: Vec<f64> = (0..fake.len()).map(|i| radius(fake, i)).collect();
    let mut precision = 0.0;
    let mut density = 0.0;
    for f in fake {
        let mut inside = 0;
        for (r, rad) in real.iter().zip(&rr) {
            if dist(f, r) < *rad {
                inside += 1;
            }
        }
        if inside > 0 {
            precision += 1.0;
        }
        density += inside as f64;
    }
    let mut recall = 0.0;
    for r in real {
        if fake.iter().zip(&fr).any(|(f, rad)| dist(r, f) < *rad) {
            recall += 1.0;
        }
    }
    let mut coverage = 0.0;
    for (r, rad) in real.iter().zip(&rr) {
        if fake.iter().any(|f| dist(r, f) < *rad) {
            coverage += 1.0;
        }
    }
    let (m, n) = (fake.len() as f64, real.len() as f64);
    [precision / m, recall / n, density / (k as f64 * m), coverage / n]
}

fn brute_mmd2(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let k = |a: &[f64], b: &[f64]| (a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / a.len() as f64 + 1.0).powi(3);
    let m = x.len() as f64;
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if i != j {
                s += k(&x[i], &x[j]) + k(&y[i], &y[j]) - k(&x[i], &y[j]) - k(&x[j], &y[i]);
            }
        }
    }
    s / (m * (m - 1.0))
}

fn cloud<R: Rng>(rng: &mut R, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    shift + z
                })
                .collect()
        })
        .collect()
}

#[test]
fn prdc_matches_brute_force_on_random_instances() {
    let mut rng = seeded(30);
    for _ in 0..50 {
        let (nr, nf) = (rng.random_range(10..=30), rng.random_range(10..=30));
        let k = rng.random_range(1..=5);
        let real = cloud(&mut rng, nr, 2, 0.0);
        let shift = rng.random_range(-1.0..1.0);
        let fake = cloud(&mut rng, nf, 2, shift);
        let p =
            prdc(&FeatureSet::real(real.clone()).unwrap(), &FeatureSet::generated(fake.clone()).unwrap(), k).unwrap();
        assert_eq!([p.precision, p.recall, p.density, p.coverage], brute_prdc(&real, &fake, k));
    }
}

#[test]
fn ten_point_instance() {
    let real: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
    let fake: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 + 0.4, (i * 3 % 5) as f64]).collect();
    let p = prdc(&FeatureSet::real(real.clone()).unwrap(), &FeatureSet::generated(fake.clone()).unwrap(), 3).unwrap();
    assert_eq!([p.precision, p.recall, p.density, p.coverage], brute_prdc(&real, &fake, 3));
}

#[test]
fn kid_identity_and_brute_force() {
    let pts = vec![vec![0.1, 0.2], vec![-1.0, 0.5], vec![2.0, -0.3], vec![0.7, 0.7], vec![-0.4, -1.1]];
    let a = FeatureSet::real(pts.clone()).unwrap();
    assert!(kid(&a, &a).unwrap().abs() < 1e-12);
    assert!(brute_mmd2(&pts, &pts).abs() < 1e-12);
    let other: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + 0.3, p[1] * 0.5]).collect();
    let b = FeatureSet::generated(other.clone()).unwrap();
    assert!((kid(&a, &b).unwrap() - brute_mmd2(&pts, &other)).abs() < 1e-10);
}

#[test]
fn kid_grows_with_separation() {
    let mut rng = seeded(31);
    let base = cloud(&mut rng, 40, 2, 0.0);
    let noise = cloud(&mut rng, 40, 2, 0.0);
    let real = FeatureSet::real(base.iter().map(|p| p.iter().map(|v| v * 0.01).collect()).collect()).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for d in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let fake =
            FeatureSet::generated(noise.iter().map(|p| p.iter().map(|v| d + v * 0.01).collect()).collect()).unwrap();
        let v = kid(&real, &fake).unwrap();
        assert!(v > prev, "D {d}");
        prev = v;
    }
    assert_eq!(polynomial_kernel(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
}

#[test]
fn fid_equal_covariance_gaussians() {
    let mut rng = seeded(32);
    let a = FeatureSet::real(cloud(&mut rng, 50_000, 2, 0.0)).unwrap();
    let b = FeatureSet::generated(cloud(&mut rng, 50_000, 2, 3.0 / 2f64.sqrt())).unwrap();
    let f = fid(&a, &b).unwrap();
    assert!((f - 9.0).abs() < 0.15, "{f}");
}

#[test]
fn fid_scalar_case() {
    let mut rng = seeded(33);
    let xs: Vec<Vec<f64>> = (0..37).map(|_| vec![rng.random_range(-2.0..3.0)]).collect();
    let ys: Vec<Vec<f64>> = (0..23).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
    let stats = |v: &[Vec<f64>]| {
        let m = v.iter().map(|p| p[0]).sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|p| (p[0] - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m, s)
    };
    let ((m1, s1), (m2, s2)) = (stats(&xs), stats(&ys));
    let want = (m1 - m2).powi(2) + (s1 - s2).powi(2);
    let got = fid(&FeatureSet::real(xs).unwrap(), &FeatureSet::generated(ys).unwrap()).unwrap();
    assert!((got - want).abs() < 1e-8);
}

#[test]
fn bootstrap_matches_clt_width() {
    let values: Vec<f64> = (1..=100).map(f64::from).collect();
    let ci = bootstrap_ci(&values, 10_000, 0.95, &mut seeded(34)).unwrap();
    assert!(ci.lo < 50.5 && 50.5 < ci.hi);
    let sd = (values.iter().map(|v| (v - 50.5).powi(2)).sum::<f64>() / 100.0).sqrt();
    let want = 2.0 * 1.96 * sd / 10.0;
    assert!(((ci.hi - ci.lo) / want - 1.0).abs() < 0.15, "{ci:?}");
}

#[test]
fn imbalance_of_training_set() {
    let m = MixtureSpec::two_mode(10.0).unwrap();
    let data = m.sample_counts(&m.counts_for(10_000), &mut seeded(35)).unwrap();
    assert!((mode_imbalance(&data, &m).unwrap() - 90.909).abs() < 0.01);
}

fn points(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kid_symmetric_and_jointly_permutation_invariant(a in points(8), b in points(8), rot in 0usize..8) {
        let (fa, fb) = (FeatureSet::real(a.clone()).unwrap(), FeatureSet::generated(b.clone()).unwrap());
        let k = kid(&fa, &fb).unwrap();
        prop_assert!((k - kid(&fb, &fa).unwrap()).abs() < 1e-9 * k.abs().max(1.0));
        let (mut pa, mut pb) = (a.clone(), b.clone());
        pa.rotate_left(rot);
        pb.rotate_left(rot);
        let kp = kid(&FeatureSet::real(pa).unwrap(), &FeatureSet::generated(pb).unwrap()).unwrap();
        prop_assert!((k - kp).abs() < 1e-9 * k.abs().max(1.0));
    }

    #[test]
    fn kid_unequal_sizes_permutation_invariant(a in points(7), b in points(9), r1 in 0usize..7, r2 in 0usize..9) {
        let k = kid(&FeatureSet::real(a.clone()).unwrap(), &FeatureSet::generated(b.clone()).unwrap()).unwrap();
        let (mut pa, mut pb) = (a, b);
        pa.rotate_left(r1);
        pb.rotate_left(r2);
        let kp = kid(&FeatureSet::real(pa).unwrap(), &FeatureSet::generated(pb).unwrap()).unwrap();
        prop_assert!((k - kp).abs() < 1e-9 * k.abs().max(1.0));
    }

    #[test]
    fn fid_shift_invariant(a in points(12), b in points(12), sx in -50.0f64..50.0, sy in -50.0f64..50.0) {
        let shift = |v: &[Vec<f64>]| v.iter().map(|p| vec![p[0] + sx, p[1] + sy]).collect::<Vec<_>>();
        let f = fid(&FeatureSet::real(a.clone()).unwrap(), &FeatureSet::generated(b.clone()).unwrap()).unwrap();
        let g = fid(&FeatureSet::real(shift(&a)).unwrap(), &FeatureSet::generated(shift(&b)).unwrap()).unwrap();
        prop_assert!((f - g).abs() < 1e-8 * f.max(1.0));
        prop_assert!(fid(&FeatureSet::real(a.clone()).unwrap(), &FeatureSet::generated(a).unwrap()).unwrap() < 1e-8);
    }

    #[test]
    fn prdc_ranges(a in points(15), b in points(12), k in 1usize..5) {
        let p = prdc(&FeatureSet::real(a).unwrap(), &FeatureSet::generated(b).unwrap(), k).unwrap();
        for v in [p.precision, p.recall, p.coverage] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(p.density >= 0.0);
    }
}
