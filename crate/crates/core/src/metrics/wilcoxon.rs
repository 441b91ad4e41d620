//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped, tied magnitudes share their mid-rank, and
//! the statistic is `W = min(W+, W-)`. For up to [`EXACT_MAX_N`] non-zero
//! pairs the two-sided p-value is exact: the null distribution of `W+` is
//! enumerated over all sign assignments of the (possibly tied) ranks. Larger
//! samples use the normal approximation with tie and continuity corrections.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 25;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub significant: bool,
    pub exact: bool,
}

/// Mid-ranks (1-based) of `values`, which must be sorted ascending.
fn midranks(sorted: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut ranks = vec![0.0; sorted.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        ranks[i..=j].iter_mut().for_each(|x| *x = r);
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// P(W+ <= w) under the null, by dynamic programming over doubled ranks
/// (mid-ranks are multiples of 1/2).
fn exact_cdf(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut ways = vec![0f64; total + 1];
    ways[0] = 1.0;
    let mut reach = 0;
    for &d in &doubled {
        for s in (0..=reach).rev() {
            if ways[s] > 0.0 {
                ways[s + d] += ways[s];
            }
        }
        reach += d;
    }
    let limit = (2.0 * w).round() as usize;
    let hits: f64 = ways[..=limit.min(total)].iter().sum();
    hits / 2f64.powi(ranks.len() as i32)
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<StatResult> {
    if a.len() != b.len() {
        return Err(Error::arg(format!("paired lists differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::arg("wilcoxon test needs at least one pair"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::arg("wilcoxon inputs must be finite"));
    }
    let mut diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mags: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&mags);
    let n = diffs.len();
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    let exact = n <= EXACT_MAX_N;
    let p = if exact {
        2.0 * exact_cdf(&ranks, w)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let d = w - mean;
        let corrected = d.signum() * (d.abs() - 0.5).max(0.0);
        let z = corrected / var.sqrt();
        let normal = Normal::standard();
        2.0 * normal.cdf(-z.abs())
    };
    let p_value = p.clamp(0.0, 1.0);
    Ok(StatResult {
        statistic: w,
        p_value,
        n_effective: n,
        significant: p_value < SIGNIFICANCE_LEVEL,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force enumeration of all 2^n sign assignments.
    fn brute_p(ranks: &[f64], w: f64) -> f64 {
        let n = ranks.len();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if s <= w + 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn exact_cdf_matches_enumeration_with_ties() {
        let ranks = [1.5, 1.5, 3.0, 5.0, 5.0, 5.0, 7.0, 8.5, 8.5, 10.0];
        for w in [0.0, 3.0, 7.5, 12.0, 20.5, 27.5] {
            assert!((exact_cdf(&ranks, w) - brute_p(&ranks, w)).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_and_length_errors() {
        assert!(matches!(wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]).is_err());
        assert!(wilcoxon_signed_rank(&[], &[]).is_err());
    }

    #[test]
    fn symmetric_in_arguments() {
        let a = [0.91, 0.85, 0.88, 0.79, 0.93, 0.81, 0.86];
        let b = [0.90, 0.87, 0.84, 0.75, 0.92, 0.83, 0.80];
        let x = wilcoxon_signed_rank(&a, &b).unwrap();
        let y = wilcoxon_signed_rank(&b, &a).unwrap();
        assert_eq!(x.p_value, y.p_value);
        assert_eq!(x.statistic, y.statistic);
    }

    #[test]
    fn all_positive_small_sample() {
        // n = 5, all differences positive: W = 0, p = 2 / 32.
        let r = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 0.0625).abs() < 1e-15);
        assert!(!r.significant);
    }
}
