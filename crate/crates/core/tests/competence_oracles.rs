//! Competence estimators checked against independent computations.

use bootdes::classifiers::{train, ClassifierSpec, SupportModel};
use bootdes::competence::{
    bootstrap_competence, bootstrap_indices, replica_seed, rrc_beta_competence,
    rrc_gaussian_competence, sample_seed, RandomSupports, RandomizedReference,
};
use bootdes::data::{Dataset, SupportVector};
use bootdes::seed;
use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal};

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut total = f(a) + f(b);
    for i in 1..n {
        total += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    total * h / 3.0
}

fn sv(v: &[f64]) -> SupportVector {
    SupportVector::new(v.to_vec()).unwrap()
}

#[test]
fn beta_rrc_matches_quadrature() {
    let g = [0.6, 0.3, 0.1];
    let m = g.len() as f64;
    let dists: Vec<Beta> = g
        .iter()
        .map(|&gi| Beta::new(m * gi, m * (1.0 - gi)).unwrap())
        .collect();
    // P[Δ0 > Δ1, Δ0 > Δ2] = ∫ f0(x) F1(x) F2(x) dx; the density of Δ0 is bounded
    let oracle = simpson(
        |x| dists[0].pdf(x) * dists[1].cdf(x) * dists[2].cdf(x),
        0.0,
        1.0,
        200_000,
    );
    let estimate = rrc_beta_competence(&sv(&g), 0, 100_000, 17).unwrap();
    assert!(
        (estimate - oracle).abs() < 0.005,
        "estimate {estimate}, oracle {oracle}"
    );
}

/// Truncated normal on [0, 1] whose mean is `mean`, located by bisection on a
/// quadrature mean.
struct TruncatedOracle {
    location: f64,
    sd: f64,
    mass: f64,
}

impl TruncatedOracle {
    fn with_mean(mean: f64, sd: f64) -> Self {
        let quad_mean = |loc: f64| {
            let n = Normal::new(loc, sd).unwrap();
            simpson(|x| x * n.pdf(x), 0.0, 1.0, 4000) / (n.cdf(1.0) - n.cdf(0.0))
        };
        let (mut lo, mut hi) = (mean - 10.0 * sd, mean + 10.0 * sd);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if quad_mean(mid) < mean {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let location = 0.5 * (lo + hi);
        let n = Normal::new(location, sd).unwrap();
        TruncatedOracle {
            location,
            sd,
            mass: n.cdf(1.0) - n.cdf(0.0),
        }
    }

    fn normal(&self) -> Normal {
        Normal::new(self.location, self.sd).unwrap()
    }

    fn pdf(&self, x: f64) -> f64 {
        self.normal().pdf(x) / self.mass
    }

    fn cdf(&self, x: f64) -> f64 {
        let n = self.normal();
        (n.cdf(x) - n.cdf(0.0)) / self.mass
    }
}

#[test]
fn gaussian_rrc_matches_quadrature() {
    let g = [0.7, 0.3];
    let sd: Vec<f64> = g
        .iter()
        .map(|&gi: &f64| (gi * (1.0 - gi) / 3.0).sqrt())
        .collect();
    let d0 = TruncatedOracle::with_mean(g[0], sd[0]);
    let d1 = TruncatedOracle::with_mean(g[1], sd[1]);
    let oracle = simpson(|x| d0.pdf(x) * d1.cdf(x), 0.0, 1.0, 20_000);
    let estimate = rrc_gaussian_competence(&sv(&g), 0, 1.0, 100_000, 23).unwrap();
    assert!(
        (estimate - oracle).abs() < 0.005,
        "estimate {estimate}, oracle {oracle}"
    );
}

#[test]
fn uniform_supports_give_one_over_m() {
    for m in [2usize, 3, 5] {
        let uniform = SupportVector::uniform(m);
        for label in [0, m - 1] {
            let beta = rrc_beta_competence(&uniform, label, 100_000, 3).unwrap();
            let gauss = rrc_gaussian_competence(&uniform, label, 1.0, 100_000, 3).unwrap();
            for v in [beta, gauss] {
                assert!((v - 1.0 / m as f64).abs() < 0.01, "M={m}: {v}");
            }
        }
    }
}

#[test]
fn sampled_supports_have_the_requested_means() {
    for g in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for (model, tolerance) in [
            (RandomizedReference::Beta, 0.01),
            (
                RandomizedReference::TruncatedGaussian { sigma_scale: 1.0 },
                0.02,
            ),
        ] {
            let random = RandomSupports::new(model, &sv(&[g, 1.0 - g]));
            let mut rng = seed::rng(99);
            let mut draw = [0.0; 2];
            let n = 100_000;
            let mut total = 0.0;
            for _ in 0..n {
                random.sample_into(&mut rng, &mut draw);
                total += draw[0];
            }
            let mean = total / n as f64;
            assert!((mean - g).abs() < tolerance, "{model:?} g={g}: mean {mean}");
        }
    }
}

#[test]
fn beta_competence_is_monotone_in_own_support() {
    let grid: Vec<f64> = (1..=19).map(|i| i as f64 * 0.05).collect();
    let values: Vec<f64> = grid
        .iter()
        .map(|&g| rrc_beta_competence(&sv(&[g, 1.0 - g]), 0, 1_000_000, 5).unwrap())
        .collect();
    for pair in values.windows(2) {
        assert!(pair[1] >= pair[0] - 0.005, "{values:?}");
    }
}

fn tiny_dataset() -> (Dataset, Dataset) {
    let train = Dataset::numeric(
        vec![
            vec![0.0, 0.1],
            vec![0.4, -0.2],
            vec![1.1, 0.9],
            vec![1.5, 1.2],
            vec![0.8, 0.3],
            vec![0.2, 1.0],
        ],
        vec![0, 0, 1, 1, 1, 0],
        2,
    )
    .unwrap();
    let validation = Dataset::numeric(
        vec![
            vec![0.5, 0.5],
            vec![0.9, 0.7],
            vec![0.1, 0.4],
            vec![0.7, 0.0],
        ],
        vec![0, 1, 0, 1],
        2,
    )
    .unwrap();
    (train, validation)
}

#[test]
fn bootstrap_competence_equals_brute_force_recount() {
    let (train_set, validation) = tiny_dataset();
    let (k, master, cid) = (5, 2024, 3);
    let spec = ClassifierSpec::NearestCentroid;
    let set = bootstrap_competence(&spec, &train_set, &validation, k, master, cid).unwrap();
    for (i, (x, &label)) in validation.rows.iter().zip(&validation.labels).enumerate() {
        let mut hits = 0;
        for r in 0..k {
            let rows = bootstrap_indices(train_set.rows.len(), sample_seed(master, r));
            let replica = train(
                &spec,
                &train_set.subset(&rows),
                replica_seed(master, cid, r),
            )
            .unwrap();
            let supports = replica.predict_supports(x).unwrap();
            let best = (0..2).fold(0, |b, j| if supports[j] > supports[b] { j } else { b });
            hits += usize::from(best == label);
        }
        assert_eq!(set.values()[i], hits as f64 / k as f64);
    }
}
