//! Distances between fold-feature vectors.
//!
//! Four metrics are supported. Smaller always means more similar:
//!
//! * **Euclidean** — `√Σ(qᵢ−tᵢ)²`.
//! * **Manhattan** — `Σ|qᵢ−tᵢ|`.
//! * **Correlation** — `ln(clamp(1 − r, 1e−12, 2))` where `r` is the
//!   Pearson coefficient; a zero-variance vector has no defined
//!   correlation, so that case is scored `ln 2` (maximal dissimilarity) —
//!   [`pearson_correlation`] returns `None` there for callers that need to
//!   detect it.
//! * **Symmetric divergence** — `Σ (qᵢ′·ln(qᵢ′/tᵢ′) + tᵢ′·ln(tᵢ′/qᵢ′))`
//!   with `xᵢ′ = xᵢ + 1e−10`; the smoothing keeps the logarithms finite on
//!   post-ReLU vectors, which contain zeros. Inputs must be nonnegative and
//!   are used as raw vectors, not renormalized distributions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AnalyzeError;

/// Additive smoothing applied to both vectors before the symmetric
/// divergence.
pub const DIVERGENCE_SMOOTHING: f64 = 1e-10;
/// `1 − r` is clamped to this range before the logarithm.
pub const CORRELATION_CLAMP: (f64, f64) = (1e-12, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[serde(rename = "euclid")]
    Euclidean,
    #[serde(rename = "manh")]
    Manhattan,
    #[serde(rename = "corr")]
    Correlation,
    #[serde(rename = "kl")]
    SymmetricDivergence,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 4] = [
        DistanceMetric::Euclidean,
        DistanceMetric::Manhattan,
        DistanceMetric::Correlation,
        DistanceMetric::SymmetricDivergence,
    ];

    /// Short name used on the command line and in reports.
    pub fn name(&self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclid",
            DistanceMetric::Manhattan => "manh",
            DistanceMetric::Correlation => "corr",
            DistanceMetric::SymmetricDivergence => "kl",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DistanceMetric::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown metric '{s}' (expected euclid, manh, corr, or kl)"))
    }
}

fn check_dims(q: &[f64], t: &[f64]) -> Result<(), AnalyzeError> {
    if q.len() != t.len() {
        return Err(AnalyzeError::DimensionMismatch {
            left: q.len(),
            right: t.len(),
        });
    }
    Ok(())
}

/// Pearson correlation coefficient, or `None` when either vector has zero
/// variance (correlation is undefined there).
pub fn pearson_correlation(q: &[f64], t: &[f64]) -> Result<Option<f64>, AnalyzeError> {
    check_dims(q, t)?;
    let n = q.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mq, mt) = (mean(q), mean(t));
    let mut cov = 0.0;
    let mut var_q = 0.0;
    let mut var_t = 0.0;
    for (&a, &b) in q.iter().zip(t) {
        cov += (a - mq) * (b - mt);
        var_q += (a - mq) * (a - mq);
        var_t += (b - mt) * (b - mt);
    }
    if var_q == 0.0 || var_t == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (var_q * var_t).sqrt()))
}

/// Distance between two equal-dimension feature vectors under `metric`.
pub fn distance(metric: DistanceMetric, q: &[f64], t: &[f64]) -> Result<f64, AnalyzeError> {
    check_dims(q, t)?;
    match metric {
        DistanceMetric::Euclidean => Ok(q
            .iter()
            .zip(t)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()),
        DistanceMetric::Manhattan => Ok(q.iter().zip(t).map(|(a, b)| (a - b).abs()).sum()),
        DistanceMetric::Correlation => {
            let r = match pearson_correlation(q, t)? {
                Some(r) => r,
                // Zero variance: no correlation exists; score as maximal
                // dissimilarity so ranking semantics stay intact.
                None => -1.0,
            };
            let (lo, hi) = CORRELATION_CLAMP;
            Ok(((1.0 - r).clamp(lo, hi)).ln())
        }
        DistanceMetric::SymmetricDivergence => {
            for (i, &v) in q.iter().chain(t).enumerate() {
                if v < 0.0 {
                    return Err(AnalyzeError::NegativeFeature {
                        index: i % q.len(),
                        value: v,
                    });
                }
            }
            Ok(q.iter()
                .zip(t)
                .map(|(&a, &b)| {
                    let (a, b) = (a + DIVERGENCE_SMOOTHING, b + DIVERGENCE_SMOOTHING);
                    a * (a / b).ln() + b * (b / a).ln()
                })
                .sum())
        }
    }
}

/// Full distance matrix of a feature set; always symmetric, and
/// `matrix[i][j]` equals `distance(metric, set[i], set[j])` exactly.
pub fn pairwise_distances(
    metric: DistanceMetric,
    features: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, AnalyzeError> {
    if features.is_empty() {
        return Err(AnalyzeError::EmptyFeatureSet);
    }
    let n = features.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        matrix[i][i] = distance(metric, &features[i], &features[i])?;
        for j in (i + 1)..n {
            let d = distance(metric, &features[i], &features[j])?;
            matrix[i][j] = d;
            matrix[j][i] = d;
        }
    }
    Ok(matrix)
}
