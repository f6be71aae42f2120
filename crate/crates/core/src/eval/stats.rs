//! Nonparametric comparison of several methods over several datasets.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use std::collections::BTreeSet;
use thiserror::Error;

/// Largest number of nonzero differences handled by the exact Wilcoxon
/// distribution.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Largest number of methods for the exhaustive Bergmann-Hommel procedure.
pub const BERGMANN_HOMMEL_MAX_METHODS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("{count} p-values supplied, {methods} methods need {expected}")]
    PairCount {
        count: usize,
        methods: usize,
        expected: usize,
    },
    #[error("Bergmann-Hommel enumeration supports at most {max} methods (got {0}); use holm instead", max = BERGMANN_HOMMEL_MAX_METHODS)]
    TooManyMethods(usize),
}

/// Mid-ranks of `values`, smallest first, ties sharing their mean rank.
pub fn rank_row(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn check_table(table: &[Vec<f64>], min_rows: usize) -> Result<usize, StatsError> {
    if table.len() < min_rows {
        return Err(StatsError::TooFew {
            what: "datasets",
            needed: min_rows,
            got: table.len(),
        });
    }
    let k = table[0].len();
    for (row, values) in table.iter().enumerate() {
        if values.len() != k {
            return Err(StatsError::Ragged {
                row,
                expected: k,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    Ok(k)
}

/// Mean rank of every method (column); rows are datasets, values are losses.
pub fn average_ranks(table: &[Vec<f64>]) -> Result<Vec<f64>, StatsError> {
    let k = check_table(table, 1)?;
    let mut sums = vec![0.0; k];
    for row in table {
        for (s, r) in sums.iter_mut().zip(rank_row(row)) {
            *s += r;
        }
    }
    Ok(sums.into_iter().map(|s| s / table.len() as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub datasets: usize,
    pub methods: usize,
}

/// Friedman chi-square test on average ranks, `k - 1` degrees of freedom.
pub fn friedman_test(table: &[Vec<f64>]) -> Result<FriedmanResult, StatsError> {
    let k = check_table(table, 2)?;
    if k < 2 {
        return Err(StatsError::TooFew {
            what: "methods",
            needed: 2,
            got: k,
        });
    }
    let n = table.len();
    let degenerate = table.iter().all(|row| row.iter().all(|&v| v == row[0]));
    if degenerate {
        return Ok(FriedmanResult {
            statistic: 0.0,
            p_value: 1.0,
            datasets: n,
            methods: k,
        });
    }
    let ranks = average_ranks(table)?;
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = ranks.iter().map(|r| r * r).sum();
    let statistic =
        (12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    let chi2 = ChiSquared::new(kf - 1.0).expect("k >= 2");
    Ok(FriedmanResult {
        statistic,
        p_value: chi2.sf(statistic).clamp(0.0, 1.0),
        datasets: n,
        methods: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences `a - b`.
    pub statistic: f64,
    /// Sum of ranks of the negative differences.
    pub negative_rank_sum: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
    /// All differences were zero.
    pub degenerate: bool,
}

/// Two-sided Wilcoxon signed-rank test of paired samples.
///
/// Zero differences are dropped and tied magnitudes share mid-ranks. Up to
/// [`WILCOXON_EXACT_MAX`] remaining pairs the p-value comes from the exact
/// sign-flip distribution of the tied ranks; beyond that a normal
/// approximation with tie and continuity corrections is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|&d| d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            negative_rank_sum: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
            degenerate: true,
        });
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = rank_row(&magnitudes);
    // mid-ranks are multiples of 1/2, so doubled ranks are exact integers
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let w_plus2: usize = doubled
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let total2: usize = doubled.iter().sum();
    let statistic = w_plus2 as f64 / 2.0;
    let negative_rank_sum = (total2 - w_plus2) as f64 / 2.0;

    let (p_value, exact) = if n <= WILCOXON_EXACT_MAX {
        (exact_two_sided_p(&doubled, w_plus2), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = tie_group_sizes(&magnitudes)
            .map(|t| t.powi(3) - t)
            .sum::<f64>()
            / 48.0;
        let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let z = ((statistic - mean).abs() - 0.5).max(0.0) / variance.sqrt();
        ((2.0 * Normal::standard().sf(z)).min(1.0), false)
    };
    Ok(WilcoxonResult {
        statistic,
        negative_rank_sum,
        n,
        p_value,
        exact,
        degenerate: false,
    })
}

fn tie_group_sizes(values: &[f64]) -> impl Iterator<Item = f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        sizes.push((j - i) as f64);
        i = j;
    }
    sizes.into_iter()
}

/// Number of sign assignments reaching each doubled positive-rank sum.
fn sign_flip_counts(doubled: &[usize]) -> Vec<u64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in doubled {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

fn exact_two_sided_p(doubled: &[usize], observed: usize) -> f64 {
    let counts = sign_flip_counts(doubled);
    let lower: u64 = counts[..=observed].iter().sum();
    let upper: u64 = counts[observed..].iter().sum();
    let all = 1u64 << doubled.len();
    (2.0 * lower.min(upper) as f64 / all as f64).min(1.0)
}

/// Family-wise error control for all pairwise comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mcp {
    BergmannHommel,
    Holm,
}

impl Mcp {
    pub fn name(self) -> &'static str {
        match self {
            Mcp::BergmannHommel => "bergmann-hommel",
            Mcp::Holm => "holm",
        }
    }
}

impl std::str::FromStr for Mcp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bergmann-hommel" | "bergman-hommel" | "bh" => Ok(Mcp::BergmannHommel),
            "holm" => Ok(Mcp::Holm),
            _ => Err(format!(
                "unknown multiple comparison procedure {s:?} (expected bergmann-hommel or holm)"
            )),
        }
    }
}

/// Pairs `(i, j)`, `i < j`, in the order used for pairwise p-value vectors.
pub fn method_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect()
}

/// Holm step-down adjusted p-values, in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (step, &i) in order.iter().enumerate() {
        running = running.max(((m - step) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
    }
    adjusted
}

/// Every set partition of `0..k`, as a block id per element.
fn set_partitions(k: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, blocks: usize, k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for b in 0..=blocks {
            prefix.push(b);
            extend(prefix, blocks.max(b + 1), k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(k), 0, k, &mut out);
    out
}

/// Sets of pairwise-equality hypotheses that can be jointly true, as
/// indices into [`method_pairs`]. The empty set is omitted.
pub fn exhaustive_sets(k: usize) -> Vec<Vec<usize>> {
    let pairs = method_pairs(k);
    let sets: BTreeSet<Vec<usize>> = set_partitions(k)
        .into_iter()
        .map(|blocks| {
            (0..pairs.len())
                .filter(|&h| blocks[pairs[h].0] == blocks[pairs[h].1])
                .collect::<Vec<_>>()
        })
        .filter(|set| !set.is_empty())
        .collect();
    sets.into_iter().collect()
}

/// Bergmann-Hommel adjusted p-values: for each hypothesis, the largest
/// `|I| * min_{h in I} p_h` over exhaustive sets `I` containing it.
pub fn bergmann_hommel_adjust(k: usize, p: &[f64]) -> Result<Vec<f64>, StatsError> {
    if k > BERGMANN_HOMMEL_MAX_METHODS {
        return Err(StatsError::TooManyMethods(k));
    }
    let sets = exhaustive_sets(k);
    let mut adjusted = vec![0.0f64; p.len()];
    for set in &sets {
        let min = set.iter().map(|&h| p[h]).fold(f64::INFINITY, f64::min);
        let value = (set.len() as f64 * min).min(1.0);
        for &h in set {
            adjusted[h] = adjusted[h].max(value);
        }
    }
    Ok(adjusted)
}

/// Adjusted p-values for the `k(k-1)/2` pairwise hypotheses, ordered as in
/// [`method_pairs`].
pub fn adjust_pairwise(k: usize, p: &[f64], mcp: Mcp) -> Result<Vec<f64>, StatsError> {
    let expected = k * k.saturating_sub(1) / 2;
    if p.len() != expected {
        return Err(StatsError::PairCount {
            count: p.len(),
            methods: k,
            expected,
        });
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    match mcp {
        Mcp::Holm => Ok(holm_adjust(p)),
        Mcp::BergmannHommel => bergmann_hommel_adjust(k, p),
    }
}

/// Rejection decisions at level `alpha`.
pub fn reject_pairwise(k: usize, p: &[f64], mcp: Mcp, alpha: f64) -> Result<Vec<bool>, StatsError> {
    Ok(adjust_pairwise(k, p, mcp)?
        .into_iter()
        .map(|a| a <= alpha)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_row(&[0.1, 0.3, 0.2]), vec![1.0, 3.0, 2.0]);
        assert_eq!(rank_row(&[0.5, 0.5, 0.5]), vec![2.0, 2.0, 2.0]);
        assert_eq!(rank_row(&[0.2, 0.1, 0.2, 0.4]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn average_ranks_by_hand() {
        // row ranks (1, 3, 2) and (2, 1, 3)
        let table = vec![vec![0.1, 0.3, 0.2], vec![0.5, 0.4, 0.9]];
        assert_eq!(average_ranks(&table).unwrap(), vec![1.5, 2.0, 2.5]);
        assert!(average_ranks(&[]).is_err());
    }

    #[test]
    fn friedman_degenerate_and_hand_value() {
        let r = friedman_test(&vec![vec![0.3, 0.3, 0.3]; 4]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));

        // method 0 always best, method 2 always worst: R = (1, 2, 3)
        let table = vec![
            vec![0.1, 0.2, 0.3],
            vec![0.0, 0.5, 0.9],
            vec![0.2, 0.3, 0.4],
            vec![0.3, 0.4, 0.8],
        ];
        let r = friedman_test(&table).unwrap();
        // 12*4/(3*4) * (1 + 4 + 9 - 3*16/4) = 4 * 2 = 8
        assert!((r.statistic - 8.0).abs() < 1e-12);
        assert!((r.p_value - (-4.0f64).exp()).abs() < 1e-12);
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn friedman_row_permutation_invariant() {
        let table = vec![
            vec![0.1, 0.2, 0.3],
            vec![0.5, 0.0, 0.9],
            vec![0.2, 0.3, 0.1],
        ];
        let mut swapped = table.clone();
        swapped.swap(0, 2);
        assert_eq!(
            friedman_test(&table).unwrap(),
            friedman_test(&swapped).unwrap()
        );
    }

    #[test]
    fn wilcoxon_degenerate_and_symmetric() {
        let a = [0.1, 0.2, 0.3];
        let r = wilcoxon_signed_rank(&a, &a).unwrap();
        assert!(r.degenerate && r.p_value == 1.0);

        let b = [0.3, 0.1, 0.5, 0.7, 0.2];
        let c = [0.1, 0.15, 0.2, 0.3, 0.25];
        let ab = wilcoxon_signed_rank(&b, &c).unwrap();
        let ba = wilcoxon_signed_rank(&c, &b).unwrap();
        assert_eq!(ab.statistic, ba.negative_rank_sum);
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn wilcoxon_known_small_values() {
        // all five differences positive: P(W+ = 15) = 1/32, two-sided 1/16
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert_eq!(r.statistic, 15.0);
        assert_eq!(r.p_value, 0.0625);
        assert!(r.exact);
    }

    #[test]
    fn wilcoxon_normal_branch_is_close_to_exact() {
        let a: Vec<f64> = (0..30)
            .map(|i| ((i * 7 % 11) as f64) * 0.1 + if i % 3 == 0 { 0.4 } else { 0.0 })
            .collect();
        let b: Vec<f64> = (0..30).map(|i| ((i * 5 % 13) as f64) * 0.08).collect();
        let approx = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!approx.exact);
        let diffs: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| x - y)
            .filter(|d| *d != 0.0)
            .collect();
        let ranks = rank_row(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let exact = exact_two_sided_p(&doubled, (2.0 * approx.statistic) as usize);
        assert!(
            (approx.p_value - exact).abs() < 0.01,
            "{} vs {exact}",
            approx.p_value
        );
    }

    #[test]
    fn holm_by_hand() {
        let adj = holm_adjust(&[0.01, 0.04, 0.03]);
        assert_eq!(adj, vec![0.03, 0.06, 0.06]);
    }

    #[test]
    fn exhaustive_sets_for_three_and_four_methods() {
        assert_eq!(
            exhaustive_sets(3),
            vec![vec![0], vec![0, 1, 2], vec![1], vec![2]]
        );
        // Bell(4) = 15 partitions, one of them all singletons
        assert_eq!(exhaustive_sets(4).len(), 14);
        assert_eq!(set_partitions(8).len(), 4140);
    }

    #[test]
    fn multiplicity_examples() {
        for mcp in [Mcp::BergmannHommel, Mcp::Holm] {
            assert_eq!(
                reject_pairwise(3, &[1.0, 1.0, 1.0], mcp, 0.05).unwrap(),
                vec![false; 3]
            );
            assert_eq!(
                reject_pairwise(3, &[0.0, 1.0, 1.0], mcp, 0.05).unwrap(),
                vec![true, false, false]
            );
            assert_eq!(
                reject_pairwise(3, &[0.007, 0.150, 0.154], mcp, 0.05).unwrap(),
                vec![true, false, false]
            );
        }
        assert_eq!(
            adjust_pairwise(9, &[0.5; 36], Mcp::BergmannHommel),
            Err(StatsError::TooManyMethods(9))
        );
        assert!(adjust_pairwise(9, &[0.5; 36], Mcp::Holm).is_ok());
        assert!(matches!(
            adjust_pairwise(3, &[0.5; 2], Mcp::Holm),
            Err(StatsError::PairCount { .. })
        ));
    }

    #[test]
    fn bergmann_hommel_is_less_conservative_than_holm() {
        // with three methods no exhaustive set has exactly two hypotheses
        let p = [0.01, 0.04, 0.045];
        let bh = bergmann_hommel_adjust(3, &p).unwrap();
        let holm = holm_adjust(&p);
        for (got, want) in bh.iter().zip([0.03, 0.04, 0.045]) {
            assert!((got - want).abs() < 1e-15);
        }
        for (got, want) in holm.iter().zip([0.03, 0.08, 0.08]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(
            reject_pairwise(3, &p, Mcp::BergmannHommel, 0.05).unwrap(),
            vec![true; 3]
        );
        assert_eq!(
            reject_pairwise(3, &p, Mcp::Holm, 0.05).unwrap(),
            vec![true, false, false]
        );
    }

    proptest! {
        #[test]
        fn rank_sums_are_exact(values in prop::collection::vec(prop::sample::select(vec![0.1, 0.2, 0.3, 0.4]), 1..9)) {
            let k = values.len() as f64;
            prop_assert_eq!(rank_row(&values).iter().sum::<f64>(), k * (k + 1.0) / 2.0);
        }

        #[test]
        fn bergmann_hommel_never_exceeds_holm(p in prop::collection::vec(0.0f64..=1.0, 6)) {
            let bh = bergmann_hommel_adjust(4, &p).unwrap();
            let holm = holm_adjust(&p);
            for (b, h) in bh.iter().zip(&holm) {
                prop_assert!(*b <= *h + 1e-15);
            }
            for (b, raw) in bh.iter().zip(&p) {
                prop_assert!(*b >= *raw);
            }
        }
    }
}
