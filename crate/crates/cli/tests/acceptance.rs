//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p bootdes-cli --test acceptance`. Every check runs
//! even if an earlier one fails; the process exits nonzero if any failed.

// `ensure!(x <= tol)` must fail on NaN, so negated comparisons are intended
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use bootdes::classifiers::{train, ClassifierSpec, SupportModel};
use bootdes::competence::{
    bootstrap_competence, bootstrap_indices, rrc_beta_competence, rrc_gaussian_competence,
    BootstrapReplicas, CompetenceMethod, CompetenceSet, RandomSupports, RandomizedReference,
};
use bootdes::data::{Dataset, SupportVector};
use bootdes::ensemble::train_des;
use bootdes::eval::cv::{cross_validate, CvConfig, MethodConfig};
use bootdes::eval::metrics::{confusion, criteria, Criterion};
use bootdes::eval::stats::{friedman_test, reject_pairwise, wilcoxon_signed_rank, Mcp};
use bootdes::eval::DEFAULT_TEST_ALPHA;
use bootdes::field::CompetenceField;
use bootdes::seed;
use bootdes_cli::commands::{run_benchmark, train_model, REPORT_DSV, REPORT_JSON, REPORT_TEXT};
use bootdes_cli::config::{ExperimentConfig, Overrides, Settings};
use bootdes_cli::model::ModelFile;
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(budget: Duration, start: Instant) -> Result<(), String> {
    let elapsed = start.elapsed();
    if elapsed > budget {
        Err(format!(
            "took {:.2} s, budget {:.0} s",
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        ))
    } else {
        Ok(())
    }
}

/// Two Gaussian classes around `(0, 0)` and `(gap, gap)`.
fn two_blobs(n: usize, gap: f64, sd: f64, seed_value: u64) -> Dataset {
    let mut rng = seed::rng(seed_value);
    let normal = rand_distr::Normal::new(0.0, sd).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let c = label as f64 * gap;
        rows.push(vec![c + rng.sample(normal), c + rng.sample(normal)]);
        labels.push(label);
    }
    Dataset::numeric(rows, labels, 2).unwrap()
}

/// Like [`two_blobs`] but redraws points on the wrong side of the line
/// `u + v = gap`, so the classes are linearly separable.
fn separable_blobs(n: usize, gap: f64, sd: f64, seed_value: u64) -> Dataset {
    let mut rng = seed::rng(seed_value);
    let normal = rand_distr::Normal::new(0.0, sd).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let c = label as f64 * gap;
        loop {
            let row = vec![c + rng.sample(normal), c + rng.sample(normal)];
            if (row[0] + row[1] > gap) == (label == 1) {
                rows.push(row);
                break;
            }
        }
        labels.push(label);
    }
    Dataset::numeric(rows, labels, 2).unwrap()
}

fn first_max(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |b, j| if v[j] > v[b] { j } else { b })
}

fn bootstrap_recount() -> Result<String, String> {
    let start = Instant::now();
    let data = two_blobs(30, 1.5, 1.0, 11);
    let train_set = data.subset(&(0..20).collect::<Vec<_>>());
    let validation = data.subset(&(20..30).collect::<Vec<_>>());
    let mut checked = 0;
    for k in [1, 5, 31] {
        for (cid, spec) in ClassifierSpec::default_pool().iter().enumerate() {
            let master = 900 + k as u64;
            let set = bootstrap_competence(spec, &train_set, &validation, k, master, cid)
                .map_err(|e| e.to_string())?;
            let recorded = BootstrapReplicas::train(spec, &train_set, k, master, cid)
                .map_err(|e| e.to_string())?;
            let replicas: Vec<_> = recorded
                .sample_seeds
                .iter()
                .zip(&recorded.train_seeds)
                .map(|(&s, &t)| {
                    train(
                        spec,
                        &train_set.subset(&bootstrap_indices(train_set.n_rows(), s)),
                        t,
                    )
                    .unwrap()
                })
                .collect();
            for (i, (x, &label)) in validation.rows.iter().zip(&validation.labels).enumerate() {
                let hits = replicas
                    .iter()
                    .filter(|r| first_max(r.predict_supports(x).unwrap().as_slice()) == label)
                    .count();
                let expected = hits as f64 / k as f64;
                ensure!(
                    set.values()[i] == expected,
                    "K={k} {spec:?} point {i}: {} vs recount {expected}",
                    set.values()[i]
                );
                checked += 1;
            }
        }
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "{checked} (K, classifier, point) values equal the recount"
    ))
}

fn rrc_symmetry() -> Result<String, String> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for m in [2usize, 3, 5] {
        let uniform = SupportVector::uniform(m);
        let beta = rrc_beta_competence(&uniform, 0, 100_000, 31).map_err(|e| e.to_string())?;
        let gauss = rrc_gaussian_competence(&uniform, m - 1, 1.0, 100_000, 32)
            .map_err(|e| e.to_string())?;
        for v in [beta, gauss] {
            worst = worst.max((v - 1.0 / m as f64).abs());
        }
    }
    ensure!(worst <= 0.01, "largest deviation from 1/M is {worst:.4}");
    within(Duration::from_secs(5), start)?;
    Ok(format!("largest |c - 1/M| = {worst:.4}"))
}

fn rrc_mean_condition() -> Result<String, String> {
    let mut worst = [0.0f64; 2];
    for g in [0.1, 0.3, 0.5, 0.7, 0.9] {
        for (slot, model) in [
            RandomizedReference::Beta,
            RandomizedReference::TruncatedGaussian { sigma_scale: 1.0 },
        ]
        .into_iter()
        .enumerate()
        {
            let random = RandomSupports::new(model, &SupportVector::new(vec![g, 1.0 - g]).unwrap());
            let mut rng = seed::rng(1234);
            let mut draw = [0.0; 2];
            let mut total = [0.0; 2];
            let n = 100_000;
            for _ in 0..n {
                random.sample_into(&mut rng, &mut draw);
                total[0] += draw[0];
                total[1] += draw[1];
            }
            worst[slot] = worst[slot]
                .max((total[0] / n as f64 - g).abs())
                .max((total[1] / n as f64 - (1.0 - g)).abs());
        }
    }
    ensure!(worst[0] <= 0.01, "beta mean off by {:.4}", worst[0]);
    ensure!(
        worst[1] <= 0.02,
        "truncated Gaussian mean off by {:.4}",
        worst[1]
    );
    Ok(format!(
        "max |mean - g|: beta {:.4}, truncated Gaussian {:.4}",
        worst[0], worst[1]
    ))
}

fn field_hand_value() -> Result<String, String> {
    let set = CompetenceSet::new(0, vec![vec![0.0], vec![1.0]], vec![1.0, 0.0])
        .map_err(|e| e.to_string())?;
    let value = CompetenceField::new(set)
        .competence_at(&[0.0])
        .map_err(|e| e.to_string())?;
    let e = std::f64::consts::E;
    let expected = e / (e + 1.0);
    ensure!((value - expected).abs() <= 1e-9, "{value} vs {expected}");
    Ok(format!("{value:.9}"))
}

fn single_member_reduction() -> Result<String, String> {
    let data = two_blobs(120, 2.0, 1.0, 5);
    let train_set = data.subset(&(0..80).collect::<Vec<_>>());
    let validation = data.subset(&(80..120).collect::<Vec<_>>());
    for spec in ClassifierSpec::default_pool() {
        let ensemble = train_des(
            std::slice::from_ref(&spec),
            &train_set,
            &validation,
            &CompetenceMethod::Bootstrap { k: 5 },
            None,
            3,
        )
        .map_err(|e| e.to_string())?;
        let mut rng = seed::rng(6);
        for q in 0..1000 {
            let x = [rng.random_range(-4.0..6.0), rng.random_range(-4.0..6.0)];
            let des = ensemble.classify(&x).map_err(|e| e.to_string())?;
            let alone = ensemble.pool[0].predict(&x).map_err(|e| e.to_string())?;
            ensure!(
                des == alone,
                "{spec:?} query {q}: ensemble {des}, classifier {alone}"
            );
        }
    }
    Ok("1000 queries x 5 classifier kinds identical".into())
}

fn desk_scale_accuracy() -> Result<String, String> {
    let start = Instant::now();
    let data = separable_blobs(400, 3.0, 1.0, 2024);
    let methods = [MethodConfig::new(CompetenceMethod::Bootstrap { k: 31 })];
    let config = CvConfig::default();
    ensure!(
        config.folds == 2 && config.repeats == 5,
        "default protocol is not 5x2"
    );
    let first = cross_validate(&data, &methods, &config, 77).map_err(|e| e.to_string())?;
    let second = cross_validate(&data, &methods, &config, 77).map_err(|e| e.to_string())?;
    let accuracy = first.methods[0].mean_accuracy;
    ensure!(accuracy >= 0.95, "mean accuracy {accuracy:.4}");
    ensure!(
        first.methods[0].folds.len() == 10,
        "{} fold scores",
        first.methods[0].folds.len()
    );
    ensure!(
        first.methods[0].mean_raw.map(f64::to_bits) == second.methods[0].mean_raw.map(f64::to_bits),
        "reruns with the same seed differ"
    );
    within(Duration::from_secs(60), start)?;
    Ok(format!("5x2 CV accuracy {accuracy:.4}, rerun identical"))
}

/// The eight criteria straight from their per-class definitions.
fn definitional(truth: &[usize], predicted: &[usize], m: usize) -> [f64; 8] {
    let n = truth.len() as f64;
    let mut sums = [0.0; 4];
    let mut present = 0.0;
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    let mut diag = 0.0;
    let (mut t_k, mut p_k) = (vec![0.0; m], vec![0.0; m]);
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
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        diag += tp;
        t_k[class] = tp + fn_;
        p_k[class] = tp + fp;
        if tp + fn_ == 0.0 {
            continue;
        }
        present += 1.0;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = tp / (tp + fn_);
        sums[0] += precision;
        sums[1] += recall;
        sums[2] += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        sums[3] += if den > 0.0 {
            (tp * tn - fp * fn_) / den
        } else {
            0.0
        };
    }
    let micro_p = tp_all / (tp_all + fp_all);
    let micro_r = tp_all / (tp_all + fn_all);
    let micro_f1 = if micro_p + micro_r > 0.0 {
        2.0 * micro_p * micro_r / (micro_p + micro_r)
    } else {
        0.0
    };
    let tp_dot: f64 = t_k.iter().zip(&p_k).map(|(a, b)| a * b).sum();
    let t_sq: f64 = t_k.iter().map(|a| a * a).sum();
    let p_sq: f64 = p_k.iter().map(|a| a * a).sum();
    let den = ((n * n - p_sq) * (n * n - t_sq)).sqrt();
    let micro_mcc = if den > 0.0 {
        (diag * n - tp_dot) / den
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

fn metrics_oracle() -> Result<String, String> {
    let mut rng = seed::rng(2718);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let m = rng.random_range(2..=6);
        let n = rng.random_range(1..=80);
        let skill = rng.random_range(0.0..1.0);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let predicted: Vec<usize> = truth
            .iter()
            .map(|&t| {
                if rng.random_bool(skill) {
                    t
                } else {
                    rng.random_range(0..m)
                }
            })
            .collect();
        let cm = confusion(&truth, &predicted, m).map_err(|e| e.to_string())?;
        let values = criteria(&cm).map_err(|e| e.to_string())?;
        let oracle = definitional(&truth, &predicted, m);
        for c in Criterion::ALL {
            let diff = (values.get(c) - oracle[c.index()]).abs();
            ensure!(
                diff <= 1e-12,
                "trial {trial} {}: {} vs {}",
                c.name(),
                values.get(c),
                oracle[c.index()]
            );
            worst = worst.max(diff);
        }
        let fnr_gap = (values.get(Criterion::MiFNR) - (1.0 - cm.accuracy())).abs();
        ensure!(
            fnr_gap <= 1e-12,
            "trial {trial}: micro FNR differs from 1 - accuracy by {fnr_gap}"
        );
    }
    Ok(format!("200 matrices, max difference {worst:.1e}"))
}

/// Two-sided p-value over all 2^n sign assignments of the ranked |d|.
fn sign_flip_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    let rank2: Vec<u64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as u64;
            let tied = d.iter().filter(|y| y.abs() == x.abs()).count() as u64;
            2 * below + tied + 1
        })
        .collect();
    let observed: u64 = rank2
        .iter()
        .zip(&d)
        .filter(|(_, x)| **x > 0.0)
        .map(|(r, _)| r)
        .sum();
    let (mut low, mut high) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| rank2[i])
            .sum();
        low += u64::from(w <= observed);
        high += u64::from(w >= observed);
    }
    (2.0 * low.min(high) as f64 / (1u64 << n) as f64).min(1.0)
}

fn wilcoxon_exactness() -> Result<String, String> {
    let mut rng = seed::rng(31415);
    let mut exact = 0;
    for sample in 0..50 {
        let n = rng.random_range(2..=12);
        let a: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..10) as f64 / 10.0)
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..10) as f64 / 10.0)
            .collect();
        let result = wilcoxon_signed_rank(&a, &b).map_err(|e| e.to_string())?;
        let oracle = sign_flip_p(&a, &b);
        if result.degenerate {
            ensure!(
                result.p_value == 1.0 && oracle == 1.0,
                "sample {sample}: degenerate p {}",
                result.p_value
            );
            continue;
        }
        ensure!(
            result.exact,
            "sample {sample}: n = {n} was not computed exactly"
        );
        ensure!(
            result.p_value == oracle,
            "sample {sample}: {} vs enumeration {oracle}",
            result.p_value
        );
        exact += 1;
    }
    Ok(format!(
        "50 samples ({exact} with nonzero differences) equal enumeration"
    ))
}

fn friedman_degenerate() -> Result<String, String> {
    let same = vec![vec![0.25, 0.25, 0.25]; 6];
    let r = friedman_test(&same).map_err(|e| e.to_string())?;
    ensure!(
        r.statistic == 0.0 && r.p_value == 1.0,
        "statistic {}, p {}",
        r.statistic,
        r.p_value
    );
    // ranks (1, 2, 3) on all six datasets: 12·6/(3·4)·14 − 3·6·4 = 12
    let ordered = vec![vec![0.1, 0.2, 0.3]; 6];
    let r2 = friedman_test(&ordered).map_err(|e| e.to_string())?;
    ensure!(
        (r2.statistic - 12.0).abs() < 1e-12,
        "consistent ordering gives statistic {}",
        r2.statistic
    );
    ensure!(
        DEFAULT_TEST_ALPHA == 0.05,
        "default test level {DEFAULT_TEST_ALPHA}"
    );
    let settings = Settings::resolve(
        &ExperimentConfig {
            seed: Some(1),
            ..Default::default()
        },
        &Overrides::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        settings.test_alpha == 0.05,
        "resolved test level {}",
        settings.test_alpha
    );
    Ok("statistic 0, p 1; default test level 0.05".into())
}

fn multiplicity_regression() -> Result<String, String> {
    let raw = [0.007, 0.150, 0.154];
    let decisions =
        reject_pairwise(3, &raw, Mcp::BergmannHommel, 0.05).map_err(|e| e.to_string())?;
    ensure!(
        decisions == vec![true, false, false],
        "decisions {decisions:?}"
    );
    Ok("only the first pair is rejected".into())
}

const BENCHMARK_CONFIG: &str = r#"
seed = 42
dataset_dir = "data"

[[methods]]
kind = "bootstrap"
k = 11

[[methods]]
kind = "rrc_beta"
mc_samples = 4000

[[methods]]
kind = "rrc_gaussian"
mc_samples = 4000

[cv]
repeats = 2
"#;

fn write_csv(path: &Path, data: &Dataset) {
    let mut text = String::from("u,v,class\n");
    for (row, label) in data.rows.iter().zip(&data.labels) {
        text.push_str(&format!("{},{},c{label}\n", row[0], row[1]));
    }
    std::fs::write(path, text).unwrap();
}

fn benchmark_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data_dir = dir.path().join("data");
    std::fs::create_dir(&data_dir).unwrap();
    write_csv(&data_dir.join("near.csv"), &two_blobs(60, 1.2, 1.0, 1));
    write_csv(&data_dir.join("far.csv"), &two_blobs(60, 3.0, 1.0, 2));
    write_csv(&data_dir.join("mid.csv"), &two_blobs(60, 2.0, 1.0, 3));
    let config_path = dir.path().join("bench.toml");
    std::fs::write(&config_path, BENCHMARK_CONFIG).unwrap();
    let config = ExperimentConfig::load(&config_path).map_err(|e| e.to_string())?;

    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let overrides = Overrides {
            out: Some(dir.path().join(run)),
            ..Default::default()
        };
        let settings = Settings::resolve(&config, &overrides).map_err(|e| e.to_string())?;
        let outcome = run_benchmark(&settings).map_err(|e| e.to_string())?;
        ensure!(
            outcome.failures.is_empty(),
            "failures: {:?}",
            outcome.failures
        );
        ensure!(outcome.cache_hits == 0, "{run} run hit the cache");
        let report = outcome.report.ok_or("no report")?;
        ensure!(
            report.sections.len() == 8,
            "{} criterion sections",
            report.sections.len()
        );
        ensure!(
            report
                .sections
                .iter()
                .all(|s| s.pairwise.len() == 3 && s.friedman.is_some()),
            "missing tests"
        );
        let files: Vec<Vec<u8>> = [REPORT_JSON, REPORT_TEXT, REPORT_DSV]
            .iter()
            .map(|f| std::fs::read(dir.path().join(run).join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    ensure!(outputs[0] == outputs[1], "reports differ between runs");
    Ok(format!(
        "3 report files byte-identical ({} bytes of JSON)",
        outputs[0][0].len()
    ))
}

fn serialization_round_trip() -> Result<String, String> {
    let data = two_blobs(150, 2.0, 1.0, 17);
    let train_part = data.subset(&(0..100).collect::<Vec<_>>());
    let test_part = data.subset(&(100..150).collect::<Vec<_>>());
    let settings = Settings::resolve(
        &ExperimentConfig {
            seed: Some(8),
            ..Default::default()
        },
        &Overrides {
            method: Some("bootstrap".into()),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let model =
        train_model(&settings, &settings.methods[0], &train_part).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.bdm");
    model.save(&path).map_err(|e| e.to_string())?;
    let loaded = ModelFile::load(&path).map_err(|e| e.to_string())?;
    let mut rng = seed::rng(19);
    let mut queries = test_part.rows.clone();
    queries
        .extend((0..100).map(|_| vec![rng.random_range(-3.0..5.0), rng.random_range(-3.0..5.0)]));
    for (i, q) in queries.iter().enumerate() {
        let before = model.ensemble.explain(q).map_err(|e| e.to_string())?;
        let after = loaded.ensemble.explain(q).map_err(|e| e.to_string())?;
        ensure!(before == after, "query {i} differs after reload");
    }
    Ok(format!(
        "{} queries classified identically after reload",
        queries.len()
    ))
}

fn main() {
    let checks: [(&str, Check); 12] = [
        (
            "bootstrap competence equals brute-force recount",
            bootstrap_recount,
        ),
        ("RRC symmetry gives 1/M for uniform supports", rrc_symmetry),
        ("RRC sampled supports have mean g", rrc_mean_condition),
        ("potential field two-source hand value", field_hand_value),
        (
            "single-member pool reduces to its classifier",
            single_member_reduction,
        ),
        (
            "bootstrap DES accuracy on separable blobs",
            desk_scale_accuracy,
        ),
        ("eight criteria match definitional oracle", metrics_oracle),
        (
            "exact Wilcoxon equals sign-flip enumeration",
            wilcoxon_exactness,
        ),
        (
            "Friedman degenerate case and default test level",
            friedman_degenerate,
        ),
        (
            "multiplicity control on reference p-values",
            multiplicity_regression,
        ),
        (
            "benchmark reports are byte-identical across runs",
            benchmark_determinism,
        ),
        (
            "model file round trip classifies identically",
            serialization_round_trip,
        ),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail} ({secs:.2} s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {why} ({secs:.2} s)", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
