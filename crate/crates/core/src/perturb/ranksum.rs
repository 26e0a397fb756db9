//! Two-sided Wilcoxon rank-sum (Mann–Whitney) test.
//!
//! Small samples are tested against the exact permutation distribution of
//! the midrank sum; larger samples use the normal approximation with tie
//! and continuity corrections.

use std::f64::consts::SQRT_2;

use super::PerturbError;

/// Largest per-group size at which the exact permutation distribution is
/// enumerated. Above it the normal approximation takes over.
pub const EXACT_LIMIT: usize = 8;

/// How the p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSumMethod {
    /// Full enumeration of all rank assignments.
    Exact,
    /// Normal approximation with tie and continuity corrections.
    NormalApproximation,
}

/// Result of a two-sided rank-sum test.
#[derive(Debug, Clone)]
pub struct RankSumTest {
    /// Sum of the first group's midranks in the pooled ordering.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: RankSumMethod,
    pub n_first: usize,
    pub n_second: usize,
}

/// Midranks of the pooled sample: tied values share the average of the
/// positions they occupy (1-based).
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end average to (start + end + 1) / 2.
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Exact two-sided p-value: the fraction of all `C(n, n_first)` rank
/// assignments at least as far from the null mean as the observed sum.
fn exact_p(ranks: &[f64], n_first: usize, observed: f64) -> f64 {
    let n = ranks.len();
    let mu = n_first as f64 * (n + 1) as f64 / 2.0;
    let threshold = (observed - mu).abs() - 1e-9;
    let mut comb: Vec<usize> = (0..n_first).collect();
    let mut hits = 0u64;
    let mut total = 0u64;
    loop {
        let w: f64 = comb.iter().map(|&i| ranks[i]).sum();
        total += 1;
        if (w - mu).abs() >= threshold {
            hits += 1;
        }
        // Advance to the next lexicographic combination of n_first indices.
        let mut i = n_first;
        loop {
            if i == 0 {
                return hits as f64 / total as f64;
            }
            i -= 1;
            if comb[i] != i + n - n_first {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..n_first {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

/// Normal approximation with tie correction and a 0.5 continuity correction.
fn approx_p(values: &[f64], n_first: usize, observed: f64) -> f64 {
    let n = values.len();
    let (n1, n2) = (n_first as f64, (n - n_first) as f64);
    let nf = n as f64;
    let mu = n1 * (nf + 1.0) / 2.0;

    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }

    let sigma2 = n1 * n2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if sigma2 <= 0.0 {
        return 1.0; // every observation tied: no evidence either way
    }
    let diff = observed - mu;
    let continuity = if diff == 0.0 { 0.0 } else { 0.5 * diff.signum() };
    let z = (diff - continuity) / sigma2.sqrt();
    libm::erfc(z.abs() / SQRT_2).min(1.0)
}

/// Two-sided Wilcoxon rank-sum test comparing `first` against `second`.
///
/// The statistic is the sum of `first`'s midranks. Groups of at most
/// [`EXACT_LIMIT`] each are tested exactly; larger groups use the normal
/// approximation with tie and continuity corrections.
pub fn rank_sum_test(first: &[f64], second: &[f64]) -> Result<RankSumTest, PerturbError> {
    if first.is_empty() {
        return Err(PerturbError::EmptyGroup { side: "first" });
    }
    if second.is_empty() {
        return Err(PerturbError::EmptyGroup { side: "second" });
    }
    if first.iter().chain(second).any(|v| !v.is_finite()) {
        return Err(PerturbError::NonFiniteSample);
    }
    let mut pooled: Vec<f64> = Vec::with_capacity(first.len() + second.len());
    pooled.extend_from_slice(first);
    pooled.extend_from_slice(second);
    let ranks = midranks(&pooled);
    let statistic: f64 = ranks[..first.len()].iter().sum();

    let (p_value, method) = if first.len() <= EXACT_LIMIT && second.len() <= EXACT_LIMIT {
        (exact_p(&ranks, first.len(), statistic), RankSumMethod::Exact)
    } else {
        (
            approx_p(&pooled, first.len(), statistic),
            RankSumMethod::NormalApproximation,
        )
    };
    Ok(RankSumTest {
        statistic,
        p_value,
        method,
        n_first: first.len(),
        n_second: second.len(),
    })
}
