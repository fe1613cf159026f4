//! Outlier filtering and rank-based tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Chi-square critical value for df = 2 at alpha = 0.01.
pub const KW_CRITICAL_DF2_ALPHA01: f64 = 9.21;

/// Largest smaller sample size for which the Mann–Whitney p-value is exact.
pub const MW_EXACT_MAX: usize = 8;

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqrFiltered {
    pub kept: Vec<f64>,
    pub removed: usize,
    /// Fewer than four values: returned unchanged.
    pub undersized: bool,
}

/// Drops values outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`, keeping input order.
pub fn iqr_filter(sample: &[f64]) -> IqrFiltered {
    if sample.len() < 4 {
        return IqrFiltered { kept: sample.to_vec(), removed: 0, undersized: true };
    }
    let s = sorted(sample);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let kept: Vec<f64> = sample.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
    IqrFiltered { removed: sample.len() - kept.len(), kept, undersized: false }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(sample: &[f64]) -> (f64, f64) {
    let n = sample.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Midranks (1-based) of `pooled` and the tie term `sum(t^3 - t)`.
pub fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p_value: f64,
    /// `h` against the df = 2, alpha = 0.01 critical value (three groups
    /// only).
    pub exceeds_critical: Option<bool>,
}

/// Tie-corrected Kruskal–Wallis H over `groups` (each non-empty).
pub fn kruskal_wallis(groups: &[&[f64]]) -> KruskalWallis {
    assert!(groups.len() >= 2, "need at least two groups");
    assert!(groups.iter().all(|g| !g.is_empty()), "empty group");
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let raw = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let correction = 1.0 - ties / (n * n * n - n);
    let h = if correction <= 0.0 { 0.0 } else { (raw / correction).max(0.0) };
    let df = groups.len() - 1;
    let p_value = ChiSquared::new(df as f64).map(|d| d.sf(h)).unwrap_or(1.0);
    KruskalWallis { h, df, p_value, exceeds_critical: (df == 2).then_some(h >= KW_CRITICAL_DF2_ALPHA01) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwMethod {
    Exact,
    /// Normal approximation with tie and continuity correction.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `min(U_a, U_b)`.
    pub u: f64,
    pub u_a: f64,
    pub p_value: f64,
    pub method: MwMethod,
}

/// Number of rank arrangements of sizes `(m, n)` with each statistic value,
/// `counts[u]` for `u` in `0..=m n`.
fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    // f[j][u] over the second sample size j, rolled over the first size
    let max_u = m * n;
    let mut prev: Vec<Vec<f64>> = (0..=n).map(|_| vec![0.0; max_u + 1]).collect();
    for row in prev.iter_mut() {
        row[0] = 1.0;
    }
    for i in 1..=m {
        let mut cur: Vec<Vec<f64>> = (0..=n).map(|_| vec![0.0; max_u + 1]).collect();
        cur[0][0] = 1.0;
        for j in 1..=n {
            for u in 0..=i * j {
                // largest element belongs to the first sample (contributes j) or the second
                let a = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = a + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// Two-sided Mann–Whitney U test.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> MannWhitney {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u_a = ra - (na * (na + 1)) as f64 / 2.0;
    let u_b = (na * nb) as f64 - u_a;
    let u = u_a.min(u_b);

    let (p, method) = if na.min(nb) <= MW_EXACT_MAX && ties == 0.0 {
        let counts = u_distribution(na.max(nb), na.min(nb));
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let tail: f64 = counts[..=k].iter().sum::<f64>() / total;
        (2.0 * tail, MwMethod::Exact)
    } else {
        let n = (na + nb) as f64;
        let mu = (na * nb) as f64 / 2.0;
        let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
        if var <= 0.0 {
            (1.0, MwMethod::Normal)
        } else {
            let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
            let std = Normal::standard();
            (2.0 * std.sf(z), MwMethod::Normal)
        }
    };
    MannWhitney { u, u_a, p_value: p.clamp(f64::MIN_POSITIVE, 1.0), method }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quartiles_type7() {
        let s = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(quantile_sorted(&s, 0.25), 2.0);
        assert_eq!(quantile_sorted(&s, 0.75), 4.0);
        let s = [1.0, 2.0, 3.0, 4.0];
        assert!((quantile_sorted(&s, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn iqr_examples() {
        let f = iqr_filter(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(f.kept, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f.removed, 1);
        let same = iqr_filter(&[5.0; 7]);
        assert_eq!(same.kept, vec![5.0; 7]);
        let uniform: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(iqr_filter(&uniform).kept, uniform);
        let small = iqr_filter(&[1.0, 1000.0, 2.0]);
        assert!(small.undersized);
        assert_eq!(small.kept.len(), 3);
    }

    #[test]
    fn critical_value_matches_chi_square() {
        let q = ChiSquared::new(2.0).unwrap().inverse_cdf(0.99);
        assert!((q - KW_CRITICAL_DF2_ALPHA01).abs() < 1e-3, "{q}");
    }

    #[test]
    fn kw_identical_groups() {
        let g = [1.0, 2.0, 3.0];
        let r = kruskal_wallis(&[&g, &g, &g]);
        assert!(r.h.abs() < 1e-12);
        assert_eq!(r.exceeds_critical, Some(false));
    }

    #[test]
    fn kw_separated_groups() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b: Vec<f64> = (20..30).map(f64::from).collect();
        let c: Vec<f64> = (40..50).map(f64::from).collect();
        let r = kruskal_wallis(&[&a, &b, &c]);
        // no ties: 12/(30*31) * 10 * (5.5^2 + 15.5^2 + 25.5^2) - 93
        let expected = 12.0 / 930.0 * 10.0 * (5.5f64.powi(2) + 15.5f64.powi(2) + 25.5f64.powi(2)) - 93.0;
        assert!((r.h - expected).abs() < 1e-9);
        assert_eq!(r.exceeds_critical, Some(true));
    }

    #[test]
    fn mw_exact_small() {
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]);
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, MwMethod::Exact);
        assert!((r.p_value - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mw_identical_samples() {
        let r = mann_whitney(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.method, MwMethod::Normal);
        assert!(r.p_value > 0.9);
    }

    #[test]
    fn u_distribution_sums_to_binomial() {
        let c = u_distribution(3, 3);
        assert_eq!(c.iter().sum::<f64>(), 20.0);
        assert_eq!(c, vec![1.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn mw_branches_agree_on_8x8() {
        let a = [1.1, 2.3, 3.2, 4.8, 5.5, 7.1, 8.4, 9.9];
        let b = [2.0, 4.1, 6.3, 8.0, 10.2, 11.7, 12.5, 13.3];
        let exact = mann_whitney(&a, &b);
        assert_eq!(exact.method, MwMethod::Exact);
        // same data with a harmless tie forces the approximation
        let n = (16.0f64, 8.0f64 * 8.0);
        let mu = n.1 / 2.0;
        let sd = (n.1 * (n.0 + 1.0) / 12.0).sqrt();
        let z = ((exact.u - mu).abs() - 0.5) / sd;
        let approx = 2.0 * Normal::standard().sf(z);
        assert!((exact.p_value - approx).abs() < 0.02, "{} vs {approx}", exact.p_value);
    }

    proptest! {
        #[test]
        fn kw_rank_invariant(data in proptest::collection::vec(-100.0..100.0f64, 9..30)) {
            let k = data.len() / 3;
            let (a, rest) = data.split_at(k);
            let (b, c) = rest.split_at(k);
            let h = kruskal_wallis(&[a, b, c]).h;
            let t: Vec<f64> = data.iter().map(|v| (v / 10.0).exp()).collect();
            let (ta, rest) = t.split_at(k);
            let (tb, tc) = rest.split_at(k);
            let ht = kruskal_wallis(&[ta, tb, tc]).h;
            prop_assert!((h - ht).abs() < 1e-9);
        }

        #[test]
        fn mw_symmetric_and_in_unit_interval(
            a in proptest::collection::vec(0u8..40, 1..15),
            b in proptest::collection::vec(0u8..40, 1..15),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney(&a, &b);
            let ba = mann_whitney(&b, &a);
            prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert_eq!(ab.u, ba.u);
        }

        #[test]
        fn iqr_keeps_a_subset_in_order(data in proptest::collection::vec(-50.0..50.0f64, 4..40)) {
            let f = iqr_filter(&data);
            prop_assert_eq!(f.kept.len() + f.removed, data.len());
            let mut it = data.iter();
            for v in &f.kept {
                prop_assert!(it.any(|d| d == v));
            }
            let s = sorted(&data);
            let (q1, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75));
            prop_assert!(data.iter().filter(|v| **v >= q1 && **v <= q3).all(|v| f.kept.contains(v)));
        }
    }
}
