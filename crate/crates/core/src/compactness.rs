//! Redundancy measures: the Pearson correlation between two sets' density
//! profiles (the admission gate for new batches) and a nearest-neighbour
//! cosine-distance report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{kde_log_density_at, union_points, DensityError, KdeParams};
use crate::store::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum CompactnessError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 2 values, got {0}")]
    TooShort(usize),
    #[error("correlation is undefined for a constant input")]
    ZeroVariance,
    #[error("t_c must lie in [-1, 1], got {0}")]
    Threshold(f64),
    #[error("redundancy needs at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("record `{0}` has a zero-norm vector")]
    ZeroNorm(String),
    #[error("cosine threshold must be finite and non-negative, got {0}")]
    CosineThreshold(f64),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Sample Pearson coefficient, accumulated with a single-pass co-moment update.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64, CompactnessError> {
    if a.len() != b.len() {
        return Err(CompactnessError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(CompactnessError::TooShort(a.len()));
    }
    let (mut mean_a, mut mean_b) = (0.0, 0.0);
    let (mut m2_a, mut m2_b, mut co) = (0.0, 0.0, 0.0);
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mean_a;
        mean_a += dx / n;
        let dy = y - mean_b;
        mean_b += dy / n;
        m2_a += dx * (x - mean_a);
        m2_b += dy * (y - mean_b);
        co += dx * (y - mean_b);
    }
    if m2_a <= 0.0 || m2_b <= 0.0 {
        return Err(CompactnessError::ZeroVariance);
    }
    Ok((co / (m2_a.sqrt() * m2_b.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of two densities given in log space. Both are
/// exponentiated after subtracting their shared maximum, which keeps the
/// relative scale of the two fields intact.
pub fn correlation_of_log_fields(log_a: &[f64], log_b: &[f64]) -> Result<f64, CompactnessError> {
    let shift = log_a
        .iter()
        .chain(log_b)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let a: Vec<f64> = log_a.iter().map(|v| (v - shift).exp()).collect();
    let b: Vec<f64> = log_b.iter().map(|v| (v - shift).exp()).collect();
    pearson_r(&a, &b)
}

/// Correlation between the densities of `x` and `y`, both evaluated at the
/// union of their points.
pub fn compactness_r(x: &Dataset, y: &Dataset, params: KdeParams) -> Result<f64, CompactnessError> {
    if x.dim() != y.dim() {
        return Err(DensityError::DimensionMismatch {
            samples: y.dim(),
            points: x.dim(),
        }
        .into());
    }
    let points = union_points(x, y)?;
    let fx = kde_log_density_at(x, &points, params)?;
    let fy = kde_log_density_at(y, &points, params)?;
    correlation_of_log_fields(&fx.log_densities, &fy.log_densities)
}

/// Outcome of the compactness gate for one candidate batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionDecision {
    pub accepted: bool,
    pub r: f64,
    /// The correlation was undefined (constant density) and treated as `r = 1`.
    #[serde(default)]
    pub degenerate: bool,
    pub batch_id: String,
    pub corpus_size_before: usize,
    pub corpus_size_after: usize,
}

pub fn check_t_c(t_c: f64) -> Result<(), CompactnessError> {
    if (-1.0..=1.0).contains(&t_c) {
        Ok(())
    } else {
        Err(CompactnessError::Threshold(t_c))
    }
}

/// Applies `r < t_c` to an already computed correlation. An undefined
/// correlation counts as maximal redundancy.
pub fn gate(
    r: Result<f64, CompactnessError>,
    t_c: f64,
) -> Result<(bool, f64, bool), CompactnessError> {
    match r {
        Ok(r) => Ok((r < t_c, r, false)),
        Err(CompactnessError::ZeroVariance) => Ok((false, 1.0, true)),
        Err(e) => Err(e),
    }
}

/// Admits batch `x` into corpus `c` when `c` is empty or `r(x, c) < t_c`.
pub fn admit_batch(
    x: &Dataset,
    c: &Dataset,
    t_c: f64,
    params: KdeParams,
) -> Result<AdmissionDecision, CompactnessError> {
    check_t_c(t_c)?;
    let before = c.len();
    let (accepted, r, degenerate) = if c.is_empty() {
        (true, 1.0, false)
    } else {
        gate(compactness_r(x, c, params), t_c)?
    };
    Ok(AdmissionDecision {
        accepted,
        r,
        degenerate,
        batch_id: x.name().to_string(),
        corpus_size_before: before,
        corpus_size_after: if accepted { before + x.len() } else { before },
    })
}

/// Nearest-neighbour cosine distances of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub record_count: usize,
    pub pair_count: usize,
    pub fraction_below_threshold: f64,
    pub cosine_threshold: f64,
    /// `(level, value)` quantiles of the per-record nearest-neighbour distance.
    pub summary_quantiles: Vec<(f64, f64)>,
}

pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.2;
const SUMMARY_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Per record, the cosine distance `1 - cos` to its nearest other record.
pub fn nearest_neighbor_distances(d: &Dataset) -> Result<Vec<f64>, CompactnessError> {
    if d.len() < 2 {
        return Err(CompactnessError::TooFewRecords(d.len()));
    }
    let mut unit = Vec::with_capacity(d.len());
    for r in d.iter() {
        let norm = r.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(CompactnessError::ZeroNorm(r.id.clone()));
        }
        unit.push(r.vector.iter().map(|x| x / norm).collect::<Vec<f64>>());
    }
    Ok((0..unit.len())
        .into_par_iter()
        .map(|i| {
            let best = unit
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v.iter().zip(&unit[i]).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            (1.0 - best).max(0.0)
        })
        .collect())
}

pub fn redundancy_report(
    d: &Dataset,
    cosine_threshold: f64,
) -> Result<RedundancyReport, CompactnessError> {
    if !(cosine_threshold >= 0.0 && cosine_threshold.is_finite()) {
        return Err(CompactnessError::CosineThreshold(cosine_threshold));
    }
    let mut nn = nearest_neighbor_distances(d)?;
    let below = nn.iter().filter(|&&x| x < cosine_threshold).count();
    nn.sort_by(f64::total_cmp);
    let summary_quantiles = SUMMARY_LEVELS
        .iter()
        .map(|&level| (level, quantile_sorted(&nn, level)))
        .collect();
    let n = d.len();
    Ok(RedundancyReport {
        record_count: n,
        pair_count: n * (n - 1) / 2,
        fraction_below_threshold: below as f64 / n as f64,
        cosine_threshold,
        summary_quantiles,
    })
}

fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
