//! Evaluation statistics against definitional and exhaustive oracles.

use bootdes::eval::metrics::{confusion, criteria, Criterion};
use bootdes::eval::stats::{friedman_test, reject_pairwise, wilcoxon_signed_rank, Mcp};
use bootdes::seed;
use rand::Rng;

/// Criteria recomputed from the label lists, one class at a time.
fn definitional(truth: &[usize], predicted: &[usize], m: usize) -> [f64; 8] {
    let n = truth.len() as f64;
    let mut sums = [0.0; 4];
    let mut present = 0.0;
    let (mut pooled_tp, mut pooled_fp, mut pooled_fn) = (0.0, 0.0, 0.0);
    for class in 0..m {
        let (mut tp, mut fp, mut fn_, mut tn) = (0.0f64, 0.0, 0.0, 0.0);
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == class, p == class) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        pooled_tp += tp;
        pooled_fp += fp;
        pooled_fn += fn_;
        if tp + fn_ == 0.0 {
            continue;
        }
        present += 1.0;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = tp / (tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        let mcc = if den > 0.0 {
            (tp * tn - fp * fn_) / den
        } else {
            0.0
        };
        sums[0] += precision;
        sums[1] += recall;
        sums[2] += f1;
        sums[3] += mcc;
    }
    let micro_p = pooled_tp / (pooled_tp + pooled_fp);
    let micro_r = pooled_tp / (pooled_tp + pooled_fn);
    let micro_f1 = if micro_p + micro_r > 0.0 {
        2.0 * micro_p * micro_r / (micro_p + micro_r)
    } else {
        0.0
    };

    // covariance form: cov(X, Y) / sqrt(cov(X, X) cov(Y, Y)) over one-hot rows
    let onehot = |labels: &[usize]| -> Vec<Vec<f64>> {
        labels
            .iter()
            .map(|&l| (0..m).map(|k| f64::from(u8::from(k == l))).collect())
            .collect()
    };
    let (x, y) = (onehot(truth), onehot(predicted));
    let mean = |rows: &Vec<Vec<f64>>| -> Vec<f64> {
        (0..m)
            .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n)
            .collect()
    };
    let (mx, my) = (mean(&x), mean(&y));
    let cov = |a: &Vec<Vec<f64>>, ma: &Vec<f64>, b: &Vec<Vec<f64>>, mb: &Vec<f64>| -> f64 {
        a.iter()
            .zip(b)
            .map(|(ra, rb)| {
                (0..m)
                    .map(|k| (ra[k] - ma[k]) * (rb[k] - mb[k]))
                    .sum::<f64>()
            })
            .sum::<f64>()
    };
    let den = (cov(&x, &mx, &x, &mx) * cov(&y, &my, &y, &my)).sqrt();
    let micro_mcc = if den > 0.0 {
        cov(&x, &mx, &y, &my) / den
    } else {
        0.0
    };

    [
        1.0 - sums[0] / present,
        1.0 - sums[1] / present,
        sums[2] / present,
        sums[3] / present,
        1.0 - micro_p,
        1.0 - micro_r,
        micro_f1,
        micro_mcc,
    ]
}

#[test]
fn criteria_match_definitions_on_random_matrices() {
    let mut rng = seed::rng(77);
    for trial in 0..200 {
        let m = rng.random_range(2..=5);
        let n = rng.random_range(1..=60);
        let bias = rng.random_range(0.0..1.0);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let predicted: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if rng.random_bool(bias) {
                    t
                } else {
                    rng.random_range(0..m)
                }
            })
            .collect();
        let cm = confusion(&truth, &predicted, m).unwrap();
        let values = criteria(&cm).unwrap();
        let oracle = definitional(&truth, &predicted, m);
        for c in Criterion::ALL {
            assert!(
                (values.get(c) - oracle[c.index()]).abs() < 1e-12,
                "trial {trial} {c:?}"
            );
        }
        assert!((values.get(Criterion::MiFNR) - (1.0 - cm.accuracy())).abs() < 1e-12);
    }
}

/// Two-sided p by enumerating every sign assignment of the ranked magnitudes.
fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    // doubled mid-ranks by counting smaller and equal magnitudes
    let rank2: Vec<u64> = d
        .iter()
        .map(|x| {
            let smaller = d.iter().filter(|y| y.abs() < x.abs()).count() as u64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as u64;
            2 * smaller + equal + 1
        })
        .collect();
    let observed: u64 = rank2
        .iter()
        .zip(&d)
        .filter(|(_, x)| **x > 0.0)
        .map(|(r, _)| r)
        .sum();
    let (mut lower, mut upper) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| rank2[i])
            .sum();
        lower += u64::from(w <= observed);
        upper += u64::from(w >= observed);
    }
    (2.0 * lower.min(upper) as f64 / (1u64 << n) as f64).min(1.0)
}

#[test]
fn exact_wilcoxon_equals_sign_enumeration() {
    let mut rng = seed::rng(5);
    for _ in 0..50 {
        let n = rng.random_range(1..=12);
        // coarse grid values make ties and zero differences common
        let a: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..8) as f64 / 8.0)
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..8) as f64 / 8.0)
            .collect();
        let result = wilcoxon_signed_rank(&a, &b).unwrap();
        if result.degenerate {
            assert_eq!(result.p_value, 1.0);
            continue;
        }
        assert!(result.exact);
        assert_eq!(result.p_value, brute_force_p(&a, &b));
    }
}

#[test]
fn friedman_hand_example_and_degenerate_case() {
    let table = vec![vec![0.1, 0.2, 0.3]; 4];
    let r = friedman_test(&table).unwrap();
    // ranks (1, 2, 3) on each of 4 datasets: 12*4/(3*4) * (14 - 12) = 8
    assert!((r.statistic - 8.0).abs() < 1e-12 && r.p_value < 0.05);
    let flat = friedman_test(&vec![vec![0.2; 3]; 4]).unwrap();
    assert_eq!((flat.statistic, flat.p_value), (0.0, 1.0));
}

#[test]
fn reference_pairwise_p_values_reject_only_the_first_pair() {
    let decisions = reject_pairwise(3, &[0.007, 0.150, 0.154], Mcp::BergmannHommel, 0.05).unwrap();
    assert_eq!(decisions, vec![true, false, false]);
}
